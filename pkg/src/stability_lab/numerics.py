"""Uniform 1D grids, finite differences, quadrature, ODE stepping and phase unwrapping.

Everything here is a pure function over immutable values.  Derivatives use
second-order stencils (central in the interior, one-sided at the two ends) and
integrals use the trapezoidal rule, so the whole substrate is consistently
second-order accurate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    AmplitudeBelowFloorError,
    GridMismatchError,
    IntegrationDivergedError,
    TooFewPointsError,
)

MIN_POINTS = 8
DEFAULT_AMPLITUDE_FLOOR = 1e-10


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < MIN_POINTS:
            raise TooFewPointsError(f"n_points must be an integer >= {MIN_POINTS}, got {self.n_points}")
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)) or self.x_max <= self.x_min:
            raise ValueError(f"need finite x_max > x_min, got [{self.x_min}, {self.x_max}]")
        object.__setattr__(self, "x_min", float(self.x_min))
        object.__setattr__(self, "x_max", float(self.x_max))
        object.__setattr__(self, "n_points", int(self.n_points))

    @classmethod
    def from_spacing(cls, x_min, x_max, dx):
        """Grid whose spacing is as close to ``dx`` as the interval allows."""
        n = int(round((x_max - x_min) / dx)) + 1
        return cls(x_min, x_max, n)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    def sample(self, f: Callable[[np.ndarray], np.ndarray]) -> "Field":
        return Field(self, f(self.x))


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a real or complex function, one per grid point."""

    grid: Grid1D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values)
        if not np.iscomplexobj(values):
            values = values.astype(float)
        if values.shape != (self.grid.n_points,):
            raise ValueError(
                f"field has shape {values.shape}, grid expects ({self.grid.n_points},)"
            )
        if not np.all(np.isfinite(values)):
            raise FloatingPointError("field contains non-finite samples")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def x(self):
        return self.grid.x

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __len__(self):
        return self.grid.n_points


# Type aliases matching the two roles a field plays.
RealField = Field
ComplexField = Field


def same_grid(*fields: Field) -> Grid1D:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"grid mismatch: {grid} vs {f.grid}")
    return grid


def _as_array(f):
    if isinstance(f, Field):
        return f.values, f.grid.dx
    raise TypeError(f"expected Field, got {type(f).__name__}")


def gradient_array(values: np.ndarray, dx: float) -> np.ndarray:
    if values.shape[0] < 3:
        raise TooFewPointsError("gradient needs at least 3 points")
    return np.gradient(values, dx, edge_order=2)


def laplacian_array(values: np.ndarray, dx: float) -> np.ndarray:
    n = values.shape[0]
    if n < 4:
        raise TooFewPointsError("laplacian needs at least 4 points")
    out = np.empty_like(values)
    out[1:-1] = values[2:] - 2.0 * values[1:-1] + values[:-2]
    # one-sided, second order: (2f0 - 5f1 + 4f2 - f3)
    out[0] = 2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]
    out[-1] = 2.0 * values[-1] - 5.0 * values[-2] + 4.0 * values[-3] - values[-4]
    return out / dx**2


def gradient(f: Field) -> Field:
    """First derivative with second-order stencils everywhere."""
    values, dx = _as_array(f)
    return f.with_values(gradient_array(values, dx))


def laplacian(f: Field) -> Field:
    """Second derivative: 3-point stencil inside, 4-point one-sided at the ends."""
    values, dx = _as_array(f)
    return f.with_values(laplacian_array(values, dx))


def integrate(f: Field) -> float | complex:
    values, dx = _as_array(f)
    result = np.trapezoid(values, dx=dx)
    return complex(result) if np.iscomplexobj(result) else float(result)


def interior(f: Field) -> np.ndarray:
    """Values with the two boundary samples dropped."""
    return f.values[1:-1]


@dataclass(frozen=True)
class OdeStepperSpec:
    method: str = "rk4"
    dt: float = 1e-3
    t0: float = 0.0

    def __post_init__(self):
        if self.method not in ("rk4", "leapfrog"):
            raise ValueError(f"unknown stepping method {self.method!r}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")


def _rk4_step(rhs, t, y, dt):
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _leapfrog_step(rhs, t, y, dt):
    # y = [q..., p...]; valid only when dq/dt depends on p alone and dp/dt on q alone.
    n = y.shape[0] // 2
    q, p = y[:n], y[n:]
    p_half = p + 0.5 * dt * rhs(t, y)[n:]
    q_new = q + dt * rhs(t + 0.5 * dt, np.concatenate([q, p_half]))[:n]
    p_new = p_half + 0.5 * dt * rhs(t + dt, np.concatenate([q_new, p_half]))[n:]
    return np.concatenate([q_new, p_new])


def ode_solve(rhs, state0, stepper: OdeStepperSpec, n_steps: int) -> np.ndarray:
    """Advance ``dy/dt = rhs(t, y)`` and return all ``n_steps + 1`` states.

    ``leapfrog`` is the kick-drift-kick scheme; the state must be a flat
    ``[q, p]`` vector of even length and the system separable.
    """
    y = np.array(state0, dtype=float if not np.iscomplexobj(state0) else complex)
    if stepper.method == "leapfrog":
        if y.ndim != 1 or y.shape[0] % 2:
            raise ValueError("leapfrog needs a flat [q, p] state of even length")
        step = _leapfrog_step
    else:
        step = _rk4_step
    out = np.empty((n_steps + 1,) + y.shape, dtype=y.dtype)
    out[0] = y
    t = stepper.t0
    for i in range(1, n_steps + 1):
        y = step(rhs, t, y, stepper.dt)
        if not np.all(np.isfinite(y)):
            raise IntegrationDivergedError(i)
        out[i] = y
        t = stepper.t0 + i * stepper.dt
    return out


def step_times(stepper: OdeStepperSpec, n_steps: int) -> np.ndarray:
    return stepper.t0 + stepper.dt * np.arange(n_steps + 1)


def wrap_angle(phi):
    """Map angles into [-pi, pi)."""
    return (np.asarray(phi) + np.pi) % (2.0 * np.pi) - np.pi


def check_amplitude(f: Field, amplitude_floor: float = DEFAULT_AMPLITUDE_FLOOR) -> np.ndarray:
    """Return |f|, raising if any sample is at or below ``amplitude_floor * max|f|``."""
    amp = np.abs(f.values)
    floor = amplitude_floor * amp.max()
    bad = np.flatnonzero(amp <= floor)
    if bad.size:
        i = int(bad[0])
        raise AmplitudeBelowFloorError(i, float(f.x[i]), float(amp[i]), float(floor))
    return amp


def unwrap_phase(psi: Field, hbar: float = 1.0,
                 amplitude_floor: float = DEFAULT_AMPLITUDE_FLOOR) -> Field:
    """Continuous action S with psi = |psi| exp(iS/hbar).

    Unwrapping starts from the sample of largest amplitude, whose principal
    phase fixes the additive constant; neighbours are joined by wrapped
    differences so consecutive phases differ by at most pi.
    """
    check_amplitude(psi, amplitude_floor)
    theta = np.angle(psi.values)
    steps = wrap_angle(np.diff(theta))
    phase = np.concatenate([[0.0], np.cumsum(steps)])
    anchor = int(np.argmax(np.abs(psi.values)))
    phase += theta[anchor] - phase[anchor]
    return Field(psi.grid, hbar * phase)
