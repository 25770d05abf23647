"""Headless renderings of the evaluation artifacts.

Figures are built on the object API with an Agg canvas so nothing here
touches a display or global pyplot state.
"""

from __future__ import annotations

import math

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .voxel import MixtureBound

__all__ = [
    "render_cdf",
    "render_error_histogram",
    "render_runtimes",
    "save_figure",
]

_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
_WIDTH_IN = 6.4


def _new_axes():
    fig = Figure(figsize=(_WIDTH_IN, _WIDTH_IN / _GOLDEN))
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(111)


def render_cdf(cdf_pairs, bound_cm: float | None = None) -> Figure:
    """Step plot of the voxel-error CDF, with the 3-sigma bound marked."""
    pairs = [(float(w), float(f)) for w, f in cdf_pairs]
    if not pairs:
        raise ValueError("cannot render an empty CDF")
    fig, ax = _new_axes()
    xs = [pairs[0][0]] + [w for w, _ in pairs]
    ys = [0.0] + [f for _, f in pairs]
    ax.step(xs, ys, where="post", color="tab:blue")
    if bound_cm is not None:
        ax.axvline(bound_cm, color="tab:red", linestyle="--", linewidth=1.2,
                   label=f"mean + 3 sigma = {bound_cm:.2f} cm")
        ax.legend(loc="lower right")
    ax.set_xlabel("voxel error (cm)")
    ax.set_ylabel("fraction of voxels")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def render_error_histogram(values_cm, mixture: MixtureBound | None = None) -> Figure:
    """Density histogram of voxel errors with the fitted mixture overlaid."""
    values = np.asarray(values_cm, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot render an empty histogram")
    fig, ax = _new_axes()
    bins = min(60, max(10, int(math.sqrt(values.size))))
    ax.hist(values, bins=bins, density=True, color="tab:blue", alpha=0.55,
            label="voxel errors")
    if mixture is not None:
        span = values.max() - values.min()
        pad = 0.05 * span if span > 0 else max(1e-3, 0.1 * abs(values[0]))
        grid = np.linspace(values.min() - pad, values.max() + pad, 512)
        pdf = np.zeros_like(grid)
        for w, mu, var in zip(mixture.weights, mixture.means, mixture.variances):
            pdf += w * np.exp(-0.5 * (grid - mu) ** 2 / var) / math.sqrt(2.0 * math.pi * var)
        ax.plot(grid, pdf, color="tab:orange", linewidth=1.5, label="mixture fit")
        ax.axvline(mixture.bound_cm, color="tab:red", linestyle="--",
                   linewidth=1.2, label=f"mean + 3 sigma = {mixture.bound_cm:.2f} cm")
    ax.set_xlabel("voxel error (cm)")
    ax.set_ylabel("density")
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def render_runtimes(times: dict) -> Figure:
    """Horizontal bars of per-stage wall time; absent stages are omitted."""
    stages = [(name, t) for name, t in times.items() if t is not None]
    if not stages:
        raise ValueError("no timed stages to render")
    fig, ax = _new_axes()
    names = [name for name, _ in stages][::-1]
    vals = [t for _, t in stages][::-1]
    ax.barh(names, vals, color="tab:blue", alpha=0.8)
    for i, v in enumerate(vals):
        ax.text(v, i, f" {v:.3g} s", va="center", fontsize=9)
    ax.set_xlabel("wall time (s)")
    ax.margins(x=0.15)
    ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    return fig


def save_figure(fig: Figure, path, dpi: int = 150) -> None:
    fig.savefig(path, dpi=dpi)
