"""Figures written next to the CLI's CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.bbox": "tight",
})

_PNG_META = {"Software": None}  # no version stamp, so PNG bytes are stable across runs


def _save(fig, path: Path) -> Path:
    path = Path(path)
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return path


def _positive(values):
    v = np.abs(np.asarray(values, dtype=float))
    return np.where(v > 0, v, np.nan)


def plot_series(path, times, series: dict[str, np.ndarray], ylabel: str, title: str, log: bool = True) -> Path:
    fig, ax = plt.subplots()
    for label, vals in series.items():
        ax.plot(times, _positive(vals) if log else vals, label=label)
    if log:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_contraction(path, records) -> Path:
    its = [r.iteration for r in records]
    fig, ax = plt.subplots()
    ax.semilogy(its, _positive([r.diff_norm for r in records]), "o-", label="successive difference")
    ax.semilogy(its, _positive([r.composite_norm for r in records]), "s--", label="iterate norm")
    ax.set_xlabel("iteration")
    ax.set_title("Picard iteration")
    ax.legend()
    return _save(fig, path)


def plot_ratio_reports(path, reports) -> Path:
    fig, ax = plt.subplots()
    for rep in reports:
        res = [st.resolution for st in rep.stats]
        ax.loglog(res, _positive([st.max for st in rep.stats]), "o-", label=f"{rep.lemma} ({rep.trend:.2f})")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("grid size")
    ax.set_ylabel("max LHS/RHS")
    ax.set_title("ratio trends")
    ax.legend(fontsize="small")
    return _save(fig, path)


def plot_cutoffs(path, x, profiles: dict[str, np.ndarray]) -> Path:
    fig, ax = plt.subplots()
    for name, vals in profiles.items():
        ax.plot(x, vals, label=name)
    ax.set_xlabel("x")
    ax.set_title("cutoff profiles")
    ax.legend()
    return _save(fig, path)


def plot_field(path, field, title: str = "") -> Path:
    """Image of a scalar field on a 2D grid (first slice for 3D)."""
    data = np.asarray(field.samples)
    while data.ndim > 2:
        data = data[0]
    fig, ax = plt.subplots()
    im = ax.imshow(data.T, origin="lower", extent=(0, field.grid.period, 0, field.grid.period), cmap="RdBu_r")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("y1")
    ax.set_ylabel("y2")
    ax.set_title(title)
    ax.grid(False)
    return _save(fig, path)
