"""Figure rendering for run reports.

Everything here writes PNG files through the Agg backend (selected before
pyplot is imported, so the module stays usable on headless machines).  The
functions mirror the CSV artifacts: a field heatmap for forward frames,
the reconstruction triptych, the descent history, and the refinement
residual curve.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_field_plot",
    "save_reconstruction_plot",
    "save_history_plot",
    "save_residual_plot",
    "save_table_plot",
]


def _field_grid(mesh, field) -> np.ndarray:
    # structured row-major node ordering: index = j*(nx+1) + i
    return np.asarray(field, dtype=float).reshape(mesh.ny + 1, mesh.nx + 1)


def _extent(mesh):
    x0, x1, y0, y1 = mesh.domain
    return (x0, x1, y0, y1)


def save_field_plot(path, mesh, field, title: str = "") -> Path:
    """One nodal field as a heatmap."""
    fig, ax = plt.subplots(figsize=(5, 4))
    image = ax.imshow(
        _field_grid(mesh, field), origin="lower", extent=_extent(mesh), aspect="auto"
    )
    fig.colorbar(image, ax=ax)
    if title:
        ax.set_title(title)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def save_reconstruction_plot(path, mesh, g_rec, g_true) -> Path:
    """Reconstruction, truth, and their difference side by side.

    The first two panels share one color scale so they are comparable at a
    glance; the difference panel gets its own symmetric scale.
    """
    rec = _field_grid(mesh, g_rec)
    true = _field_grid(mesh, g_true)
    lo = min(rec.min(), true.min())
    hi = max(rec.max(), true.max())
    spread = float(np.abs(rec - true).max()) or 1.0

    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
    panels = [
        (rec, "reconstruction", dict(vmin=lo, vmax=hi, cmap="viridis")),
        (true, "truth", dict(vmin=lo, vmax=hi, cmap="viridis")),
        (rec - true, "difference", dict(vmin=-spread, vmax=spread, cmap="coolwarm")),
    ]
    for ax, (grid, title, opts) in zip(axes, panels):
        image = ax.imshow(
            grid, origin="lower", extent=_extent(mesh), aspect="auto", **opts
        )
        fig.colorbar(image, ax=ax)
        ax.set_title(title)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def save_history_plot(path, history) -> Path:
    """Cost and gradient norm against iteration on a log scale."""
    rows = np.asarray(
        [(it, cost, gnorm) for it, cost, gnorm, _ in history], dtype=float
    ).reshape(-1, 3)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.semilogy(rows[:, 0], rows[:, 1], marker=".", label="cost")
    ax.semilogy(rows[:, 0], rows[:, 2], marker=".", linestyle="--", label="gradient norm")
    ax.set_xlabel("iteration")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def save_table_plot(path, labels, means, spreads) -> Path:
    """Mean errors per table row with spread bars."""
    xs = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(max(5.0, 1.4 * len(labels)), 4))
    ax.errorbar(xs, means, yerr=spreads, marker="o", linestyle="none", capsize=4)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("relative error")
    ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def save_residual_plot(path, rows) -> Path:
    """Refinement-study residuals against mesh size, log-log.

    Degenerate rows carry no residual information and are skipped; an
    all-degenerate table still renders (empty axes) so callers need not
    special-case it.
    """
    live = [(row.nx, row.residual) for row in rows if not row.degenerate]
    fig, ax = plt.subplots(figsize=(5, 4))
    if live:
        data = np.asarray(live, dtype=float)
        ax.loglog(data[:, 0], data[:, 1], marker="o")
    ax.set_xlabel("cells per axis")
    ax.set_ylabel("relative residual")
    ax.grid(True, which="both", alpha=0.3)
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path
