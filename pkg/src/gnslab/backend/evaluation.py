"""Rollouts, rollout metrics, neighbour statistics and checkpoint selection.

Every metric scores fluid particles only. Models are anything implementing
:class:`RolloutModel`; besides the learned model there is an exact
ground-truth oracle and a zero-acceleration baseline.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np
from tabulate import tabulate

from .._errors import ContractError, DataError, RolloutDivergedError
from .._progress import ProgressCallback
from .checkpoint import Checkpoint
from .dataset import (
    BOUNDARY_DISTANCE,
    BOUNDARY_PARTICLES,
    HISTORY,
    WINDOW,
    Trajectory,
    add_boundary_particles,
)
from .flip import ParticleType
from .gns import GnsParams, predict_acceleration, predict_step
from .graph import neighbor_counts
from .stats import NormStats, normalize
from .training import target_acceleration
from .transport import emd

MSE_20_HORIZON = 20
EMD_EVERY = 10
# Scaled height of the standard 32 x 32 domain's top wall.
STANDARD_TOP = 0.9

METRICS = ("emd", "mse_acc_1", "mse_20", "mse_20_subsampled", "mse_400")


@dataclass(frozen=True)
class StepContext:
    """Where a window sits: its source trajectory and current frame index."""

    source: Trajectory
    frame: int

    @property
    def types(self) -> np.ndarray:
        return self.source.types

    @property
    def bounds(self) -> np.ndarray:
        return self.source.bounds


@runtime_checkable
class RolloutModel(Protocol):
    """A one-step predictor.

    Attributes:
        boundary: Boundary representation the model expects its inputs in.
    """

    boundary: str

    def predict_acceleration(self, window: np.ndarray, ctx: StepContext) -> np.ndarray:
        """Normalized accelerations ``[N, 2]`` at the window's current frame."""
        ...

    def predict_positions(self, window: np.ndarray, ctx: StepContext) -> np.ndarray:
        """Positions ``[N, 2]`` one step after the window."""
        ...


class GnsModel:
    """A trained GNS wrapped as a :class:`RolloutModel`."""

    def __init__(self, params: GnsParams, stats: NormStats, label: str = "") -> None:
        self.params = params
        self.stats = stats
        self.label = label
        self.boundary = (
            BOUNDARY_DISTANCE if params.config.use_boundary_distances else BOUNDARY_PARTICLES
        )

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, label: str = "") -> GnsModel:
        return cls(checkpoint.params, checkpoint.stats, label or checkpoint.variant)

    def _bounds(self, ctx: StepContext) -> np.ndarray | None:
        return ctx.bounds if self.params.config.use_boundary_distances else None

    def predict_acceleration(self, window: np.ndarray, ctx: StepContext) -> np.ndarray:
        return predict_acceleration(
            self.params, window, ctx.types, self.stats, self._bounds(ctx)
        ).value

    def predict_positions(self, window: np.ndarray, ctx: StepContext) -> np.ndarray:
        return predict_step(self.params, window, ctx.types, self.stats, self._bounds(ctx))


class GroundTruthModel:
    """Oracle that answers with the source trajectory's own next frame."""

    def __init__(self, stats: NormStats, boundary: str = BOUNDARY_DISTANCE) -> None:
        self.stats = stats
        self.boundary = boundary
        self.label = "oracle"

    def predict_acceleration(self, window: np.ndarray, ctx: StepContext) -> np.ndarray:
        accel = target_acceleration(window, ctx.source.frames[ctx.frame + 1])
        return normalize(accel, self.stats.acceleration_mean, self.stats.acceleration_std)

    def predict_positions(self, window: np.ndarray, ctx: StepContext) -> np.ndarray:
        return ctx.source.frames[ctx.frame + 1].copy()


class ZeroAccelerationModel:
    """Baseline that keeps every particle at constant velocity."""

    def __init__(self, stats: NormStats, boundary: str = BOUNDARY_DISTANCE) -> None:
        self.stats = stats
        self.boundary = boundary
        self.label = "zero"

    def predict_acceleration(self, window: np.ndarray, ctx: StepContext) -> np.ndarray:
        zeros = np.zeros_like(window[HISTORY])
        return normalize(zeros, self.stats.acceleration_mean, self.stats.acceleration_std)

    def predict_positions(self, window: np.ndarray, ctx: StepContext) -> np.ndarray:
        out = 2.0 * window[HISTORY] - window[HISTORY - 1]
        static = ctx.types != ParticleType.FLUID
        out[static] = window[HISTORY][static]
        return out


@dataclass
class RolloutResult:
    """Predicted frames of an autoregressive rollout.

    Attributes:
        source: Ground-truth trajectory the rollout started from.
        start: Index of the first frame of the initial window.
        predicted: Predicted positions ``[steps, N, 2]``; ``predicted[k]``
            corresponds to source frame ``start + 6 + k``.
    """

    source: Trajectory
    start: int
    predicted: np.ndarray

    @property
    def steps(self) -> int:
        return int(self.predicted.shape[0])

    @property
    def ground_truth(self) -> np.ndarray:
        first = self.start + WINDOW
        return self.source.frames[first : first + self.steps]

    @property
    def fluid(self) -> np.ndarray:
        return self.source.fluid

    def squared_error_curve(self) -> np.ndarray:
        """Per-step squared position error, averaged over fluid particles and axes."""
        _require_fluid(self.source)
        if self.steps == 0:
            return np.zeros(0)
        diff = self.predicted[:, self.fluid] - self.ground_truth[:, self.fluid]
        return np.mean(diff * diff, axis=(1, 2))


def _require_fluid(traj: Trajectory) -> None:
    if not np.any(traj.fluid):
        raise DataError(f"{traj.name or 'trajectory'} has no fluid particles to score")


def rollout(
    model: RolloutModel, source: Trajectory, steps: int, start: int = 0
) -> RolloutResult:
    """Roll ``model`` out for ``steps`` steps from ground-truth frames ``start..start+5``.

    Raises:
        ContractError: Not enough source frames.
        RolloutDivergedError: A prediction is not finite.
    """
    if steps < 0 or start < 0 or start + WINDOW + steps > source.n_frames:
        raise ContractError(
            f"rollout of {steps} steps from frame {start} needs "
            f"{start + WINDOW + steps} frames, source has {source.n_frames}"
        )
    window = source.frames[start : start + WINDOW].copy()
    static = source.types != ParticleType.FLUID
    predicted = np.empty((steps, source.n_particles, 2))

    for k in range(steps):
        ctx = StepContext(source=source, frame=start + HISTORY + k)
        nxt = np.asarray(model.predict_positions(window, ctx), dtype=np.float64)
        if not np.all(np.isfinite(nxt)):
            raise RolloutDivergedError(f"non-finite prediction at rollout step {k}", step=k)
        nxt[static] = window[HISTORY][static]
        predicted[k] = nxt
        window = np.concatenate([window[1:], nxt[None]], axis=0)

    return RolloutResult(source=source, start=start, predicted=predicted)


def mse_acc_1(
    model: RolloutModel,
    trajectories: Sequence[Trajectory],
    stats: NormStats,
    frame_stride: int = 1,
) -> float:
    """One-step normalized-acceleration error, averaged over samples.

    Each sample is a (trajectory, frame) pair; its error is the mean over fluid
    particles and axes, and the result is the mean of those per-sample means.
    """
    if frame_stride < 1:
        raise ContractError(f"frame_stride must be positive: {frame_stride}")
    errors: list[float] = []
    for traj in trajectories:
        _require_fluid(traj)
        fluid = traj.fluid
        for t in range(HISTORY, traj.n_frames - 1, frame_stride):
            window = traj.frames[t - HISTORY : t + 1]
            target = normalize(
                target_acceleration(window, traj.frames[t + 1]),
                stats.acceleration_mean,
                stats.acceleration_std,
            )
            pred = model.predict_acceleration(window, StepContext(source=traj, frame=t))
            diff = (pred - target)[fluid]
            errors.append(float(np.mean(diff * diff)))
    if not errors:
        raise DataError("no samples to score")
    return float(np.mean(errors))


def mse_20(model: RolloutModel, traj: Trajectory, horizon: int = MSE_20_HORIZON) -> float:
    """Squared position error of short rollouts restarted from ground truth.

    Segments start at frames 0, 20, 40, ... while a full window plus
    ``horizon`` predicted frames fit in the trajectory.
    """
    if traj.n_frames < WINDOW + horizon:
        raise DataError(
            f"{traj.name or 'trajectory'} has {traj.n_frames} frames, "
            f"{WINDOW + horizon} needed for {horizon}-step segments"
        )
    curves = [
        rollout(model, traj, horizon, start=s).squared_error_curve()
        for s in range(0, traj.n_frames - WINDOW - horizon + 1, horizon)
    ]
    return float(np.mean(curves))


def mse_400(model: RolloutModel, traj: Trajectory) -> tuple[float, np.ndarray]:
    """Full-horizon rollout error and its per-step curve."""
    curve = rollout(model, traj, traj.n_frames - WINDOW).squared_error_curve()
    if len(curve) == 0:
        raise DataError(f"{traj.name or 'trajectory'} leaves no frames to roll out")
    return float(curve.mean()), curve


def mse_20_subsampled(curve: np.ndarray, every: int = MSE_20_HORIZON) -> float:
    """Mean of a full-rollout error curve sampled at every ``every``-th step."""
    picked = np.asarray(curve)[every - 1 :: every]
    if len(picked) == 0:
        picked = np.asarray(curve)[-1:]
    return float(np.mean(picked))


def emd_steps(steps: int, every: int = EMD_EVERY) -> np.ndarray:
    """Rollout steps scored by EMD: every ``every``-th, or the last if fewer."""
    picked = np.arange(every - 1, steps, every)
    if len(picked) == 0 and steps > 0:
        picked = np.array([steps - 1])
    return picked


def emd_curve(result: RolloutResult, every: int = EMD_EVERY) -> tuple[np.ndarray, np.ndarray]:
    """EMD between predicted and true fluid particles at the sampled steps."""
    _require_fluid(result.source)
    steps = emd_steps(result.steps, every)
    fluid = result.fluid
    gt = result.ground_truth
    values = np.array([emd(result.predicted[k][fluid], gt[k][fluid]) for k in steps])
    return steps, values


@dataclass
class TrajectoryMetrics:
    """Metric values of one trajectory, with its per-step curves."""

    name: str
    emd: float
    mse_acc_1: float
    mse_20: float
    mse_20_subsampled: float
    mse_400: float
    mse_curve: np.ndarray = field(repr=False)
    emd_steps: np.ndarray = field(repr=False)
    emd_curve: np.ndarray = field(repr=False)

    def values(self) -> dict[str, float]:
        return {m: float(getattr(self, m)) for m in METRICS}


def _curve_summary(curves: Sequence[np.ndarray]) -> dict[str, np.ndarray]:
    if not curves:
        return {"mean": np.zeros(0), "min": np.zeros(0), "max": np.zeros(0)}
    length = min(len(c) for c in curves)
    stack = np.stack([c[:length] for c in curves])
    return {"mean": stack.mean(axis=0), "min": stack.min(axis=0), "max": stack.max(axis=0)}


@dataclass
class MetricReport:
    """Per-trajectory metrics of one model over a test set."""

    label: str
    rows: list[TrajectoryMetrics]

    def aggregate(self) -> dict[str, dict[str, float]]:
        """Mean, min and max of each metric across the rows.

        NaN entries (metrics a trajectory is too short for) are skipped; a
        metric no row defines aggregates to NaN.
        """
        out: dict[str, dict[str, float]] = {}
        for metric in METRICS:
            values = np.array([getattr(r, metric) for r in self.rows], dtype=np.float64)
            values = values[~np.isnan(values)]
            if len(values) == 0:
                out[metric] = dict.fromkeys(("mean", "min", "max"), float("nan"))
                continue
            out[metric] = {
                "mean": float(values.mean()),
                "min": float(values.min()),
                "max": float(values.max()),
            }
        return out

    def mse_curve_summary(self) -> dict[str, np.ndarray]:
        """Per-step mean/min/max of the squared error across trajectories."""
        return _curve_summary([r.mse_curve for r in self.rows])

    def emd_curve_summary(self) -> dict[str, np.ndarray]:
        """Per-sampled-step mean/min/max of EMD across trajectories."""
        return _curve_summary([r.emd_curve for r in self.rows])


def evaluate_trajectory(
    model: RolloutModel,
    traj: Trajectory,
    stats: NormStats,
    emd_every: int = EMD_EVERY,
    frame_stride: int = 1,
) -> TrajectoryMetrics:
    """All metrics of ``model`` on one trajectory.

    ``mse_20`` is NaN when the trajectory is too short for one restart segment.
    """
    full = rollout(model, traj, traj.n_frames - WINDOW)
    curve = full.squared_error_curve()
    steps, values = emd_curve(full, emd_every)
    short_rollout_error = float("nan")
    if traj.n_frames >= WINDOW + MSE_20_HORIZON:
        short_rollout_error = mse_20(model, traj)
    return TrajectoryMetrics(
        name=traj.name,
        emd=float(values.mean()),
        mse_acc_1=mse_acc_1(model, [traj], stats, frame_stride),
        mse_20=short_rollout_error,
        mse_20_subsampled=mse_20_subsampled(curve),
        mse_400=float(curve.mean()),
        mse_curve=curve,
        emd_steps=steps,
        emd_curve=values,
    )


def evaluate(
    model: RolloutModel,
    trajectories: Sequence[Trajectory],
    stats: NormStats,
    label: str = "",
    emd_every: int = EMD_EVERY,
    frame_stride: int = 1,
    progress: ProgressCallback | None = None,
) -> MetricReport:
    """Score ``model`` on every trajectory, in order."""
    if not trajectories:
        raise DataError("no trajectories to evaluate")
    rows: list[TrajectoryMetrics] = []
    for i, traj in enumerate(trajectories):
        rows.append(evaluate_trajectory(model, traj, stats, emd_every, frame_stride))
        if progress is not None:
            progress((i + 1) / len(trajectories), i + 1, len(trajectories))
    return MetricReport(label=label, rows=rows)


def report_table(reports: Sequence[MetricReport]) -> str:
    """Grid table with one row per model: metric means and their ranges."""
    headers: list[str] = ["Model", "EMD", "MSE-acc 1", "MSE 20", "MSE 20 (sub)", "MSE 400"]
    table_data: list[list[str]] = []
    for report in reports:
        agg = report.aggregate()
        row = [report.label]
        for metric in METRICS:
            a = agg[metric]
            row.append(f"{a['mean']:.3e} [{a['min']:.2e}, {a['max']:.2e}]")
        table_data.append(row)
    return tabulate(tabular_data=table_data, headers=headers, tablefmt="grid")


@dataclass
class NeighborStats:
    """Neighbour-count distribution over frames.

    Attributes:
        radius: Connectivity radius used.
        histogram: ``[frames, max_count + 1]`` particle counts per neighbour count.
        mean_curve: Mean neighbour count per frame.
    """

    radius: float
    histogram: np.ndarray
    mean_curve: np.ndarray

    def plateau_drift(self, start: int, end: int) -> float:
        """Relative change of the mean curve between two frames."""
        if not 0 <= start < len(self.mean_curve) or not 0 <= end < len(self.mean_curve):
            raise ContractError(f"frames {start}, {end} outside [0, {len(self.mean_curve)})")
        base = self.mean_curve[start]
        if base == 0.0:
            return 0.0 if self.mean_curve[end] == 0.0 else float("inf")
        return float(abs(self.mean_curve[end] - base) / base)


def neighbor_stats(trajectories: Sequence[Trajectory], radius: float) -> NeighborStats:
    """Neighbour counts of fluid particles among fluid particles, per frame.

    Frames are aligned from the start and truncated to the shortest trajectory.
    """
    if radius <= 0.0:
        raise ContractError(f"radius must be positive: {radius}")
    if not trajectories:
        raise DataError("no trajectories for neighbour statistics")
    n_frames = min(t.n_frames for t in trajectories)

    per_frame: list[list[np.ndarray]] = [[] for _ in range(n_frames)]
    for traj in trajectories:
        fluid = traj.frames[:, traj.fluid]
        for f in range(n_frames):
            per_frame[f].append(neighbor_counts(fluid[f], radius))

    counts = [np.concatenate(c) for c in per_frame]
    width = max((int(c.max()) + 1 for c in counts if len(c)), default=1)
    histogram = np.stack([np.bincount(c, minlength=width) for c in counts])
    mean_curve = np.array([c.mean() if len(c) else 0.0 for c in counts])
    return NeighborStats(radius=radius, histogram=histogram, mean_curve=mean_curve)


def select_checkpoint(
    checkpoints: Sequence[Checkpoint],
    validation: Sequence[Trajectory] = (),
    scorer: Callable[[Checkpoint], float] | None = None,
) -> tuple[Checkpoint, list[float]]:
    """The checkpoint with the lowest score, ties going to the later step.

    The default score is the mean full-horizon rollout error on ``validation``.

    Returns:
        (best checkpoint, score of every checkpoint in input order).
    """
    if not checkpoints:
        raise ContractError("select_checkpoint needs at least one checkpoint")
    if scorer is None:
        if not validation:
            raise ContractError("the default scorer needs validation trajectories")

        def scorer(ck: Checkpoint) -> float:
            model = GnsModel.from_checkpoint(ck)
            return float(np.mean([mse_400(model, traj)[0] for traj in validation]))

    scores = [float(scorer(ck)) for ck in checkpoints]
    best = min(range(len(checkpoints)), key=lambda i: (scores[i], -checkpoints[i].step, -i))
    return checkpoints[best], scores


@dataclass
class GeneralizationRun:
    """One model rolled out on one extended-domain scene."""

    model: str
    scene: str
    result: RolloutResult
    emd_steps: np.ndarray
    emd_values: np.ndarray
    frames: list[Path] = field(default_factory=list)


def generalization_experiment(
    models: Mapping[str, RolloutModel],
    scenes: Sequence[Trajectory],
    wall_spacing: float = 1.0,
    emd_every: int = EMD_EVERY,
    render_dir: Path | None = None,
    render_every: int = 20,
    progress: ProgressCallback | None = None,
) -> list[GeneralizationRun]:
    """Roll every model out on every (taller) scene over its full horizon.

    Models that expect boundary particles get wall particles along the
    scene's own walls; distance-feature models measure to those walls. Renders
    mark the top of the standard domain.
    """
    from .render import render_rollout

    runs: list[GeneralizationRun] = []
    total = len(models) * len(scenes)
    for name, model in models.items():
        for scene in scenes:
            source = scene
            if model.boundary == BOUNDARY_PARTICLES and scene.boundary != BOUNDARY_PARTICLES:
                source = add_boundary_particles(scene, wall_spacing)
            result = rollout(model, source, source.n_frames - WINDOW)
            steps, values = emd_curve(result, emd_every)
            run = GeneralizationRun(
                model=name, scene=scene.name, result=result, emd_steps=steps, emd_values=values
            )
            if render_dir is not None:
                run.frames = render_rollout(
                    result,
                    Path(render_dir) / name / scene.name,
                    every=render_every,
                    guideline_y=STANDARD_TOP,
                )
            runs.append(run)
            if progress is not None:
                progress(len(runs) / total, len(runs), total)
    return runs
