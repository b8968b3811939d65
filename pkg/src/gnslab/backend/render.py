"""PNG renders of rollouts and per-step metric curves."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .flip import ParticleType  # noqa: E402

if TYPE_CHECKING:
    from .evaluation import NeighborStats, RolloutResult

_FLUID_COLOR = "tab:blue"
_OBSTACLE_COLOR = "dimgray"
_TRUTH_COLOR = "tab:orange"


def render_frame(
    path: str | Path,
    positions: np.ndarray,
    types: np.ndarray,
    bounds: np.ndarray,
    title: str = "",
    reference: np.ndarray | None = None,
    guideline_y: float | None = None,
) -> Path:
    """Scatter one frame in scaled coordinates and save it as PNG.

    Args:
        path: Output file.
        positions: Particle positions ``[N, 2]``.
        types: Particle types ``[N]``.
        bounds: Domain walls ``[[x_lo, x_hi], [y_lo, y_hi]]``.
        title: Figure title.
        reference: Ground-truth positions drawn underneath, if given.
        guideline_y: Height of a dashed horizontal marker line.

    Returns:
        The written path.
    """
    path = Path(path)
    fluid = types == ParticleType.FLUID
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    aspect = (y_hi - y_lo) / (x_hi - x_lo)

    fig, ax = plt.subplots(figsize=(4.0, 4.0 * aspect))
    if reference is not None:
        ax.scatter(*reference[fluid].T, s=2, c=_TRUTH_COLOR, alpha=0.4, label="ground truth")
    ax.scatter(*positions[fluid].T, s=2, c=_FLUID_COLOR, label="prediction")
    ax.scatter(*positions[~fluid].T, s=2, c=_OBSTACLE_COLOR, marker="s")
    ax.plot([x_lo, x_hi, x_hi, x_lo, x_lo], [y_lo, y_lo, y_hi, y_hi, y_lo], c="black", lw=0.8)
    if guideline_y is not None:
        ax.axhline(guideline_y, c="red", ls="--", lw=1.0)
    if reference is not None:
        ax.legend(loc="upper right", fontsize=6, markerscale=3)

    pad = 0.02
    ax.set_xlim(x_lo - pad, x_hi + pad)
    ax.set_ylim(y_lo - pad, y_hi + pad)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title, fontsize=8)

    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def render_rollout(
    result: RolloutResult,
    out_dir: str | Path,
    every: int = 20,
    guideline_y: float | None = None,
) -> list[Path]:
    """Render every ``every``-th predicted frame plus the last one.

    Files are numbered by rollout step (``frame_0000.png``) for external assembly.
    """
    out_dir = Path(out_dir)
    if result.steps == 0:
        return []
    steps = sorted({*range(0, result.steps, max(every, 1)), result.steps - 1})
    gt = result.ground_truth
    name = result.source.name or "rollout"
    return [
        render_frame(
            out_dir / f"frame_{k:04d}.png",
            result.predicted[k],
            result.source.types,
            result.source.bounds,
            title=f"{name} step {k + 1}",
            reference=gt[k],
            guideline_y=guideline_y,
        )
        for k in steps
    ]


def render_curves(
    path: str | Path,
    curves: dict[str, dict[str, np.ndarray]],
    steps: np.ndarray | None = None,
    ylabel: str = "",
    log_scale: bool = True,
) -> Path:
    """Plot per-step mean curves with their min/max range, one line per model."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, summary in curves.items():
        mean = summary["mean"]
        x = np.arange(1, len(mean) + 1) if steps is None else np.asarray(steps)[: len(mean)] + 1
        ax.plot(x, mean, lw=1.2, label=label)
        ax.fill_between(x, summary["min"], summary["max"], alpha=0.2, label=f"{label} (min/max)")
    if log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("rollout step")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=7)

    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def render_neighbors(path: str | Path, stats: NeighborStats) -> Path:
    """Neighbour-count histogram per frame with the mean curve on top."""
    path = Path(path)
    hist = stats.histogram.astype(np.float64)
    totals = hist.sum(axis=1, keepdims=True)
    share = np.divide(hist, totals, out=np.zeros_like(hist), where=totals > 0)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.imshow(share.T, origin="lower", aspect="auto", cmap="Blues")
    ax.plot(np.arange(len(stats.mean_curve)), stats.mean_curve, "r.", ms=3, label="mean")
    ax.set_xlabel("frame")
    ax.set_ylabel(f"neighbours within {stats.radius:g}")
    ax.legend(fontsize=7)

    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path
