"""Static figures for the plot-ready CSV tables (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 10,
}


def _numeric(values):
    try:
        return np.array(values, dtype=float), True
    except ValueError:
        return np.array(values, dtype=object), False


def render_plot(spec, columns, rows, path: Path) -> Path:
    """Draw one table.  Grouped tables get one line per group value."""
    data = {c: [r[i] for r in rows] for i, c in enumerate(columns)}
    x, x_is_num = _numeric(data[spec.x])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if not x_is_num:
            for y in spec.y:
                ax.bar(np.arange(len(x)), np.array(data[y], float), tick_label=list(x))
            ax.tick_params(axis="x", labelrotation=30)
        elif spec.group:
            groups = np.array(data[spec.group])
            for g in dict.fromkeys(groups):
                sel = groups == g
                for y in spec.y:
                    ax.plot(x[sel], np.array(data[y], float)[sel], lw=0.9)
        else:
            for y in spec.y:
                ls = "--" if y.endswith("_analytic") or y == "exp_int_L" else "-"
                ax.plot(x, np.array(data[y], float), ls, label=y, lw=1.2)
            if len(spec.y) > 1:
                ax.legend()
        if spec.logy:
            ax.set_yscale("log")
            ax.set_xscale("log")
        ax.set_title(spec.title)
        ax.set_xlabel(spec.xlabel)
        ax.set_ylabel(spec.ylabel)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
