"""Scenario runner: configuration, execution, manifests and CSV output.

A run directory looks like::

    <output_dir>/<scenario>/
        manifest.json
        fields/*.csv     # profiles over x
        series/*.csv     # data over t or alpha
        plots/           # written by emit_plot_data (CSV + PNG)
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import sys
import traceback
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .errors import MissingRunError, UnknownScenarioError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

OUTPUT_ENV = "STABILITY_LAB_OUTPUT_DIR"
DEFAULT_SEED = 42
GENERATOR = "numpy.random.Generator(PCG64)"


# --------------------------------------------------------------------------
# Configuration

@dataclass
class ScenarioConfig:
    scenario: str
    grid: dict = field(default_factory=dict)
    physics: dict = field(default_factory=dict)
    evolution: dict = field(default_factory=dict)
    seeds: list | None = None
    alpha_list: list | None = None
    options: dict = field(default_factory=dict)   # scenario-specific knobs
    rng_seed: int = DEFAULT_SEED
    output_dir: str | None = None

    def __post_init__(self):
        for section in ("grid", "physics", "evolution"):
            for key, value in getattr(self, section).items():
                if isinstance(value, (int, float)) and not isinstance(value, bool):
                    if not math.isfinite(value):
                        raise ValueError(f"{section}.{key} must be finite")
        for key in ("mass", "hbar", "omega", "sigma0"):
            if key in self.physics and not self.physics[key] > 0:
                raise ValueError(f"physics.{key} must be positive")
        for key in ("dt", "n_steps", "snapshot_stride"):
            if key in self.evolution and not self.evolution[key] > 0:
                raise ValueError(f"evolution.{key} must be positive")
        if "n_points" in self.grid and self.grid["n_points"] < 8:
            raise ValueError("grid.n_points must be >= 8")

    @classmethod
    def from_mapping(cls, data: dict) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "scenario" not in data:
            raise ValueError("config needs a scenario name")
        return cls(**copy.deepcopy(data))

    def to_mapping(self) -> dict:
        return asdict(self)


def load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data: dict, assignments) -> dict:
    """Apply ``section.key=value`` strings; values are read as TOML literals."""
    data = copy.deepcopy(data)
    for item in assignments or ():
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = _parse_value(text.strip())
    return data


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        elif v is not None:
            out[k] = copy.deepcopy(v)
    return out


# --------------------------------------------------------------------------
# Recording checks and tables

@dataclass
class Check:
    name: str
    value: float | None
    tolerance: float
    mode: str = "le"       # le: value <= tol, lt: value < tol, ge / gt likewise
    detail: str = ""

    @property
    def passed(self) -> bool:
        if self.value is None or not math.isfinite(self.value):
            return False
        if self.mode == "le":
            return self.value <= self.tolerance
        if self.mode == "lt":
            return self.value < self.tolerance
        if self.mode == "ge":
            return self.value >= self.tolerance
        if self.mode == "gt":
            return self.value > self.tolerance
        raise ValueError(self.mode)

    def to_json(self):
        return {"name": self.name, "value": self.value, "tolerance": self.tolerance,
                "mode": self.mode, "passed": self.passed, "detail": self.detail}


class Recorder:
    """Collects checks and tables for one scenario run."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.checks: list[Check] = []
        self.errors: list[dict] = []
        self.tables: dict[str, tuple[list[str], list]] = {}

    def check(self, name, value, tolerance, mode="le", detail=""):
        if any(c.name == name for c in self.checks):
            raise ValueError(f"duplicate check {name!r}")
        v = None if value is None else float(value)
        c = Check(name, v, float(tolerance), mode, detail)
        self.checks.append(c)
        log.info("%-40s %-4s value=%s tol=%g", name, "ok" if c.passed else "FAIL", v, tolerance)
        return c

    def table(self, relpath: str, columns: list[str], rows):
        self.tables[relpath] = (list(columns), [list(r) for r in rows])

    def columns_table(self, relpath: str, **cols):
        names = list(cols)
        arrays = [np.asarray(cols[n]) for n in names]
        self.table(relpath, names, zip(*arrays))

    @contextmanager
    def guard(self, group: str, expected: list[str]):
        """Run a block of checks; on error record it and fail its unrecorded checks."""
        try:
            yield
        except Exception as exc:  # noqa: BLE001 - the manifest is the error channel
            self.errors.append({"group": group, "type": type(exc).__name__, "message": str(exc),
                                "traceback": traceback.format_exc(limit=3)})
            log.error("check group %s failed: %s", group, exc)
            done = {c.name for c in self.checks}
            for name in expected:
                if name not in done:
                    self.check(name, None, float("nan"), detail=f"not evaluated: {type(exc).__name__}")


@dataclass
class Scenario:
    name: str
    description: str
    defaults: dict
    run: Callable[[dict, Recorder], None]


SCENARIOS: dict[str, Scenario] = {}


def register(name: str, description: str, defaults: dict):
    def deco(fn):
        SCENARIOS[name] = Scenario(name, description, defaults, fn)
        return fn
    return deco


def list_scenarios() -> list[tuple[str, str]]:
    _load_registry()
    return [(name, SCENARIOS[name].description) for name in sorted(SCENARIOS)]


def _load_registry():
    from . import scenarios  # noqa: F401 - registers on import


# --------------------------------------------------------------------------
# Persistence

def format_number(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(np.float64(v))) if not math.isfinite(v) else f"{float(v):.17g}"
    return str(v)


def write_csv(path: Path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_number(v) for v in row])


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


@dataclass
class RunManifest:
    config: dict
    version: str
    started: str
    finished: str
    rng: dict
    checks: list
    errors: list
    outputs: list
    run_dir: str

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks) and not self.errors

    @property
    def pass_vector(self) -> list[tuple[str, bool]]:
        return [(c["name"], c["passed"]) for c in self.checks]

    def to_json(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def resolve_config(config: ScenarioConfig | dict) -> tuple[Scenario, dict, ScenarioConfig]:
    _load_registry()
    if isinstance(config, dict):
        config = ScenarioConfig.from_mapping(config)
    if config.scenario not in SCENARIOS:
        raise UnknownScenarioError(
            f"unknown scenario {config.scenario!r}; available: {', '.join(sorted(SCENARIOS))}")
    scen = SCENARIOS[config.scenario]
    merged = _deep_merge(scen.defaults, {k: v for k, v in config.to_mapping().items()
                                         if k not in ("scenario", "output_dir")})
    merged["scenario"] = config.scenario
    ScenarioConfig.from_mapping({k: v for k, v in merged.items()})  # validate merged values
    return scen, merged, config


def run(config: ScenarioConfig | dict, output_dir=None) -> RunManifest:
    """Execute one scenario and write its manifest and CSV outputs."""
    scen, merged, config = resolve_config(config)
    root = Path(output_dir or config.output_dir or default_output_root())
    run_dir = root / scen.name
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create run directory {run_dir}: {exc}") from exc
    if not os.access(run_dir, os.W_OK):
        raise PermissionError(f"run directory {run_dir} is not writable")

    started = _now()
    rec = Recorder(merged)
    try:
        scen.run(merged, rec)
    except Exception as exc:  # noqa: BLE001
        rec.errors.append({"group": "scenario", "type": type(exc).__name__, "message": str(exc),
                           "traceback": traceback.format_exc(limit=3)})
    outputs = []
    for relpath in sorted(rec.tables):
        columns, rows = rec.tables[relpath]
        write_csv(run_dir / relpath, columns, rows)
        outputs.append(relpath)
    echo = dict(merged)
    manifest = RunManifest(
        config=echo, version=__version__, started=started, finished=_now(),
        rng={"generator": GENERATOR, "seed": int(merged.get("rng_seed", DEFAULT_SEED))},
        checks=[c.to_json() for c in rec.checks], errors=rec.errors, outputs=outputs,
        run_dir=str(run_dir))
    with open(run_dir / "manifest.json", "w") as fh:
        json.dump(manifest.to_json(), fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")
    return manifest


def load_manifest(run_dir) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.is_file():
        raise MissingRunError(f"no manifest.json in {run_dir}")
    with open(path) as fh:
        return json.load(fh)


# --------------------------------------------------------------------------
# Plot data

@dataclass(frozen=True)
class PlotSpec:
    source: str
    columns: tuple
    x: str
    y: tuple
    title: str
    xlabel: str
    ylabel: str
    group: str | None = None
    logy: bool = False


PLOT_SPECS = {
    "q_profile": PlotSpec("fields/q_profile.csv", ("x", "Q", "Q_analytic"), "x", ("Q", "Q_analytic"),
                          "Quantum potential", "x", "Q"),
    "residuals": PlotSpec("fields/residuals.csv", ("x", "continuity", "quantum_hj", "chetaev"), "x",
                          ("continuity", "quantum_hj", "chetaev"), "Madelung residuals", "x", "residual"),
    "trajectories": PlotSpec("series/trajectories.csv", ("t", "seed", "x0", "x", "x_analytic"), "t",
                             ("x",), "Bohm trajectories", "t", "x", group="seed"),
    "width": PlotSpec("series/width.csv", ("t", "sigma2", "sigma2_analytic"), "t",
                      ("sigma2", "sigma2_analytic"), "Packet variance", "t", "sigma^2"),
    "lt": PlotSpec("series/lt.csv", ("t", "L", "L_analytic"), "t", ("L", "L_analytic"),
                   "Stability divergence along the orbit", "t", "L"),
    "abel": PlotSpec("series/abel.csv", ("t", "detW", "exp_int_L", "rel_err"), "t",
                     ("detW", "exp_int_L"), "Wronskian vs exp(int L dt)", "t", "det W"),
    "scale": PlotSpec("series/scale.csv", ("alpha", "dx2", "dp2q", "product", "residual_3_9"), "alpha",
                      ("product",), "Uncertainty product under dilatation", "alpha", "dx2 * dp2"),
    "scale_bump": PlotSpec("series/scale_bump.csv", ("alpha", "dx2", "dp2q", "product", "residual_3_9"),
                           "alpha", ("product", "residual_3_9"), "Non-Gaussian density", "alpha", "value"),
    "product_map": PlotSpec("series/product_map.csv", ("alpha", "product_in", "product_out"), "alpha",
                            ("product_out",), "Scale map of the uncertainty product", "alpha",
                            "product", group="product_in"),
    "invariant": PlotSpec("series/invariant.csv", ("t", "C"), "t", ("C",),
                          "Bilinear invariant", "t", "C"),
    "energy": PlotSpec("series/energy.csv", ("t", "H", "H_leapfrog"), "t", ("H", "H_leapfrog"),
                       "Energy along the orbit", "t", "H"),
    "uncertainty": PlotSpec("series/uncertainty.csv", ("state", "dq2", "dp2", "product"), "state",
                            ("product",), "Exact-uncertainty products", "state", "dq2 * dp2"),
    "fisher_profiles": PlotSpec("fields/fisher_profiles.csv", ("x", "P", "delta_p", "Q"), "x",
                                ("P", "delta_p", "Q"), "Density, momentum fluctuation and Q", "x", "value"),
    "convergence": PlotSpec("series/convergence.csv", ("dx", "dt", "continuity", "quantum_hj", "chetaev"),
                            "dx", ("continuity", "quantum_hj", "chetaev"), "Residual convergence",
                            "dx", "max |residual|", logy=True),
    "mean_position": PlotSpec("series/mean_position.csv", ("t", "mean_x", "mean_x_analytic"), "t",
                              ("mean_x", "mean_x_analytic"), "Mean position", "t", "<x>"),
}


def emit_plot_data(run_dir, render: bool = True) -> set[Path]:
    """Write plot-ready CSVs (and PNG figures) under ``<run_dir>/plots``."""
    run_dir = Path(run_dir)
    load_manifest(run_dir)
    out_dir = run_dir / "plots"
    written: set[Path] = set()
    for name, spec in PLOT_SPECS.items():
        src = run_dir / spec.source
        if not src.is_file():
            continue
        header, rows = read_csv(src)
        idx = [header.index(c) for c in spec.columns]
        target = out_dir / f"{name}.csv"
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(spec.columns)
            for r in rows:
                w.writerow([r[i] for i in idx])
        written.add(target)
        if render:
            from .plotting import render_plot
            render_plot(spec, list(spec.columns), [[r[i] for i in idx] for r in rows],
                        out_dir / f"{name}.png")
    return written
