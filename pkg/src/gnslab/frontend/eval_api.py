"""Evaluation APIs: metric reports, domain generalization and neighbour analysis."""

from __future__ import annotations

import csv
import json
import shutil
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .._errors import ConfigError, DataError
from ..backend.checkpoint import inspect_checkpoint, load_checkpoint
from ..backend.dataset import (
    BOUNDARY_DISTANCE,
    BOUNDARY_PARTICLES,
    WINDOW,
    DatasetManifest,
    Trajectory,
    add_boundary_particles,
)
from ..backend.evaluation import (
    METRICS,
    GeneralizationRun,
    GnsModel,
    GroundTruthModel,
    MetricReport,
    NeighborStats,
    RolloutModel,
    TrajectoryMetrics,
    ZeroAccelerationModel,
    evaluate_trajectory,
    generalization_experiment,
    neighbor_stats,
    rollout,
)
from ..backend.render import render_curves, render_neighbors, render_rollout
from ..backend.scenes import PRESET_SETS, simulate_preset
from ..backend.settings import RunConfig
from ..backend.stats import NormStats
from ..backend.trajectory_io import load_dataset, read_manifest
from ._job import JobResult, ProgressCallback, prepare_output_dir

ORACLE = "oracle"
ZERO = "zero"
BUILTIN_MODELS = (ORACLE, ZERO)
REPORT_NAME = "report.csv"
SUMMARY_NAME = "summary.json"
CONTAINMENT_TOLERANCE = 0.05


@dataclass(frozen=True)
class ModelSource:
    """A model to evaluate: a checkpoint file or a built-in baseline.

    Attributes:
        label: Row label in reports.
        path: Checkpoint file, None for built-ins.
        builtin: ``"oracle"`` or ``"zero"`` for built-ins.
    """

    label: str
    path: Path | None = None
    builtin: str | None = None


def resolve_models(names: Sequence[str]) -> tuple[list[ModelSource], str | None]:
    """Turn checkpoint arguments into model sources.

    Returns:
        (sources, reason a source is unusable or None). Labels are the stored
        variant, made unique with the file stem when needed.
    """
    sources: list[ModelSource] = []
    seen: set[str] = set()
    for name in names:
        if name in BUILTIN_MODELS:
            source = ModelSource(label=name, builtin=name)
        else:
            path = Path(name)
            insp = inspect_checkpoint(path)
            if not insp.header_ok:
                return sources, f"Unusable checkpoint {path}: {insp.reason}"
            label = insp.variant or path.stem
            if label in seen:
                label = f"{label}-{path.stem}"
            source = ModelSource(label=label, path=path)
        if source.label in seen:
            return sources, f"Model given twice: {name}"
        seen.add(source.label)
        sources.append(source)
    if not sources:
        return sources, "No checkpoints given"
    return sources, None


def build_model(source: ModelSource, stats: NormStats, boundary: str) -> RolloutModel:
    """Instantiate a model; built-ins use ``stats`` and ``boundary``."""
    if source.builtin == ORACLE:
        return GroundTruthModel(stats, boundary=boundary)
    if source.builtin == ZERO:
        return ZeroAccelerationModel(stats, boundary=boundary)
    return GnsModel.from_checkpoint(load_checkpoint(source.path), label=source.label)


def adapt_trajectories(
    trajectories: Sequence[Trajectory], model: RolloutModel, wall_spacing: float
) -> list[Trajectory]:
    """Give ``trajectories`` the boundary representation ``model`` expects.

    Raises:
        ConfigError: A distance-feature model met particle-boundary data.
    """
    out: list[Trajectory] = []
    for traj in trajectories:
        if traj.boundary == model.boundary:
            out.append(traj)
        elif model.boundary == BOUNDARY_PARTICLES:
            out.append(add_boundary_particles(traj, wall_spacing))
        else:
            raise ConfigError(
                f"{traj.name or 'trajectory'} carries wall particles; "
                "distance-feature models need distance-boundary data"
            )
    return out


def _fmt(value: float) -> str:
    return repr(float(value))


@dataclass(frozen=True)
class EvalOptions:
    """Represents the options for an evaluation run.

    Attributes:
        config: Run configuration (evaluation settings and jobs).
        render: Write frame renders and curve plots.
        force: Overwrite a non-empty output directory.
    """

    config: RunConfig = field(default_factory=RunConfig)
    render: bool = True
    force: bool = False


@dataclass(frozen=True)
class EvalPlan:
    """Holds a plan for evaluating models on a test set.

    Attributes:
        models: Models to evaluate, in report order.
        test: Test dataset directory.
        out_dir: Output directory.
        options: Evaluation options.
        manifest: Test manifest, when readable.
        can_run: Whether evaluation can proceed.
        reason_if_unavailable: Reason evaluation cannot proceed, if any.
    """

    models: list[ModelSource]
    test: Path
    out_dir: Path
    options: EvalOptions
    manifest: DatasetManifest | None
    can_run: bool
    reason_if_unavailable: str | None


def plan_evaluation(
    checkpoints: Sequence[str],
    test: str | Path,
    out_dir: str | Path,
    options: EvalOptions | None = None,
) -> EvalPlan:
    """Plan an evaluation run.

    Args:
        checkpoints: Checkpoint files, or ``oracle`` / ``zero`` baselines.
        test: Test dataset directory.
        out_dir: Output directory.
        options: Evaluation options. If None, defaults are used.

    Returns:
        EvalPlan: The resulting plan.
    """
    if options is None:
        options = EvalOptions()
    test_path, out_path = Path(test), Path(out_dir)
    models, reason = resolve_models(checkpoints)

    def unavailable(why: str, manifest: DatasetManifest | None = None) -> EvalPlan:
        return EvalPlan(
            models=models,
            test=test_path,
            out_dir=out_path,
            options=options,
            manifest=manifest,
            can_run=False,
            reason_if_unavailable=why,
        )

    if reason is not None:
        return unavailable(reason)
    try:
        manifest = read_manifest(test_path)
    except DataError as e:
        return unavailable(f"Cannot read test dataset: {e}")
    reason = prepare_output_dir(out_path, options.force)
    if reason is not None:
        return unavailable(reason, manifest)

    return EvalPlan(
        models=models,
        test=test_path,
        out_dir=out_path,
        options=options,
        manifest=manifest,
        can_run=True,
        reason_if_unavailable=None,
    )


def _evaluate_member(
    args: tuple[RolloutModel, Trajectory, NormStats, int, int],
) -> TrajectoryMetrics:
    model, traj, stats, emd_every, frame_stride = args
    return evaluate_trajectory(model, traj, stats, emd_every, frame_stride)


def write_report_csv(path: Path, report: MetricReport) -> Path:
    """Per-trajectory rows followed by mean, min and max footer rows."""
    agg = report.aggregate()
    with path.open(mode="w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["trajectory", *METRICS])
        for row in report.rows:
            writer.writerow([row.name, *(_fmt(getattr(row, m)) for m in METRICS)])
        for stat in ("mean", "min", "max"):
            writer.writerow([stat, *(_fmt(agg[m][stat]) for m in METRICS)])
    return path


def write_curve_csv(
    path: Path, summary: dict[str, np.ndarray], steps: np.ndarray | None = None
) -> Path:
    """Per-step mean/min/max of a metric curve across trajectories."""
    n = len(summary["mean"])
    steps = np.arange(n) if steps is None else np.asarray(steps)[:n]
    with path.open(mode="w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "mean", "min", "max"])
        for i in range(n):
            writer.writerow(
                [int(steps[i]) + 1, *(_fmt(summary[k][i]) for k in ("mean", "min", "max"))]
            )
    return path


def write_variants_csv(path: Path, reports: Sequence[MetricReport]) -> Path:
    """One row per model with the metric means."""
    with path.open(mode="w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["model", *METRICS])
        for report in reports:
            agg = report.aggregate()
            writer.writerow([report.label, *(_fmt(agg[m]["mean"]) for m in METRICS)])
    return path


def _write_json(path: Path, data: object) -> Path:
    path.write_text(data=json.dumps(obj=data, indent=4, sort_keys=True) + "\n", encoding="utf-8")
    return path


class EvalJob:
    """Job for scoring models on a test set."""

    def __init__(self, plan: EvalPlan) -> None:
        """Initialise evaluation job.

        Args:
            plan: The plan to execute.
        """
        self.plan: EvalPlan = plan
        self.reports: list[MetricReport] = []

    @classmethod
    def from_checkpoints(
        cls,
        checkpoints: Sequence[str],
        test: str | Path,
        out_dir: str | Path,
        options: EvalOptions | None = None,
    ) -> EvalJob:
        return cls(plan=plan_evaluation(checkpoints, test, out_dir, options))

    def run(self, progress: ProgressCallback | None = None) -> JobResult:
        """Evaluate every model on every test trajectory and write the reports.

        Per model: ``<label>/metrics.csv``, ``<label>/mse_curve.csv`` and
        ``<label>/emd_curve.csv``. Across models: ``report.csv`` (one row per
        model) and ``summary.json``. With rendering on, curve plots and rollout
        frames are written as well.

        Args:
            progress: Optional progress callback, called once per trajectory.

        Returns:
            JobResult indicating success or failure.
        """
        plan = self.plan
        if not plan.can_run or plan.manifest is None:
            return JobResult(
                ok=False,
                error=ConfigError(plan.reason_if_unavailable or "Cannot evaluate"),
                plan=plan,
            )

        config = plan.options.config
        ev = config.eval
        outputs: list[Path] = []
        try:
            if plan.out_dir.exists():
                shutil.rmtree(plan.out_dir)
            plan.out_dir.mkdir(parents=True)
            test = load_dataset(plan.manifest)
            total = len(test) * len(plan.models)
            done = 0
            if progress:
                progress(0.0, 0, total)

            self.reports = []
            for source in plan.models:
                model = build_model(source, plan.manifest.stats, plan.manifest.boundary)
                trajectories = adapt_trajectories(test, model, config.dataset.wall_spacing)
                stats = getattr(model, "stats", plan.manifest.stats)
                tasks = [(model, t, stats, ev.emd_every, ev.frame_stride) for t in trajectories]

                rows: list[TrajectoryMetrics] = []
                if config.jobs > 1:
                    with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                        for row in pool.map(_evaluate_member, tasks):
                            rows.append(row)
                            done += 1
                            if progress:
                                progress(done / total, done, total)
                else:
                    for task in tasks:
                        rows.append(_evaluate_member(task))
                        done += 1
                        if progress:
                            progress(done / total, done, total)

                report = MetricReport(label=source.label, rows=rows)
                self.reports.append(report)
                outputs.extend(self._write_model(report, model, trajectories))

            outputs.append(write_variants_csv(plan.out_dir / REPORT_NAME, self.reports))
            outputs.append(_write_json(plan.out_dir / SUMMARY_NAME, self._summary()))
            if plan.options.render:
                outputs.extend(self._render_curves())

            return JobResult(ok=True, error=None, plan=plan, outputs=outputs)

        except BaseException as e:
            return JobResult(ok=False, error=e, plan=plan, outputs=outputs)

    def _write_model(
        self, report: MetricReport, model: RolloutModel, trajectories: list[Trajectory]
    ) -> list[Path]:
        model_dir = self.plan.out_dir / report.label
        model_dir.mkdir(parents=True, exist_ok=True)
        written = [
            write_report_csv(model_dir / "metrics.csv", report),
            write_curve_csv(model_dir / "mse_curve.csv", report.mse_curve_summary()),
            write_curve_csv(
                model_dir / "emd_curve.csv",
                report.emd_curve_summary(),
                steps=report.rows[0].emd_steps,
            ),
        ]
        if self.plan.options.render:
            ev = self.plan.options.config.eval
            for traj in trajectories:
                result = rollout(model, traj, traj.n_frames - WINDOW)
                written.extend(
                    render_rollout(result, model_dir / "renders" / traj.name, every=ev.render_every)
                )
        return written

    def _summary(self) -> dict[str, object]:
        return {
            "test": str(self.plan.test),
            "models": {
                r.label: {
                    "aggregate": r.aggregate(),
                    "trajectories": {row.name: row.values() for row in r.rows},
                }
                for r in self.reports
            },
        }

    def _render_curves(self) -> list[Path]:
        out = self.plan.out_dir
        mse = {r.label: r.mse_curve_summary() for r in self.reports}
        emd = {r.label: r.emd_curve_summary() for r in self.reports}
        steps = self.reports[0].rows[0].emd_steps
        return [
            render_curves(out / "mse_curves.png", mse, ylabel="MSE (min/max range)"),
            render_curves(out / "emd_curves.png", emd, steps=steps, ylabel="EMD (min/max range)"),
        ]


@dataclass(frozen=True)
class GeneralizeOptions:
    """Represents the options for a domain-generalization run.

    Attributes:
        config: Run configuration (solver, trajectory length, evaluation settings).
        scene_set: Hand-designed scene set to simulate.
        render: Write frame renders.
        force: Overwrite a non-empty output directory.
    """

    config: RunConfig = field(default_factory=RunConfig)
    scene_set: str = "tall"
    render: bool = True
    force: bool = False


@dataclass(frozen=True)
class GeneralizePlan:
    """Holds a plan for a domain-generalization run."""

    models: list[ModelSource]
    out_dir: Path
    options: GeneralizeOptions
    can_run: bool
    reason_if_unavailable: str | None


def plan_generalization(
    checkpoints: Sequence[str], out_dir: str | Path, options: GeneralizeOptions | None = None
) -> GeneralizePlan:
    """Plan a domain-generalization run.

    Args:
        checkpoints: Checkpoint files (typically 1sn and 1snb), or ``oracle``.
        out_dir: Output directory.
        options: Options. If None, defaults are used.

    Returns:
        GeneralizePlan: The resulting plan.
    """
    if options is None:
        options = GeneralizeOptions()
    out_path = Path(out_dir)
    models, reason = resolve_models(checkpoints)
    if reason is None and options.scene_set not in PRESET_SETS:
        reason = f"Unknown scene set {options.scene_set!r}, expected one of {sorted(PRESET_SETS)}"
    if reason is None:
        reason = prepare_output_dir(out_path, options.force)
    return GeneralizePlan(
        models=models,
        out_dir=out_path,
        options=options,
        can_run=reason is None,
        reason_if_unavailable=reason,
    )


def _contained(run: GeneralizationRun, tolerance: float) -> bool:
    """Whether predicted fluid particles stayed within the walls, up to ``tolerance``."""
    bounds = run.result.source.bounds
    fluid = run.result.predicted[:, run.result.fluid]
    return bool(
        np.all(fluid >= bounds[:, 0] - tolerance) and np.all(fluid <= bounds[:, 1] + tolerance)
    )


class GeneralizeJob:
    """Job for rolling models out on scenes from a larger domain."""

    def __init__(self, plan: GeneralizePlan) -> None:
        self.plan: GeneralizePlan = plan
        self.runs: list[GeneralizationRun] = []

    @classmethod
    def from_checkpoints(
        cls,
        checkpoints: Sequence[str],
        out_dir: str | Path,
        options: GeneralizeOptions | None = None,
    ) -> GeneralizeJob:
        return cls(plan=plan_generalization(checkpoints, out_dir, options))

    def run(self, progress: ProgressCallback | None = None) -> JobResult:
        """Simulate the scene set, roll every model out and write EMD curves.

        Outputs are ``emd_curves.csv`` and ``summary.json``, plus frames under
        ``renders/<model>/<scene>/`` with rendering on.
        """
        plan = self.plan
        if not plan.can_run:
            return JobResult(
                ok=False,
                error=ConfigError(plan.reason_if_unavailable or "Cannot run generalization"),
                plan=plan,
            )

        config = plan.options.config
        outputs: list[Path] = []
        try:
            if plan.out_dir.exists():
                shutil.rmtree(plan.out_dir)
            plan.out_dir.mkdir(parents=True)

            scenes = [
                simulate_preset(p, config.scene, config.sim, seed=config.seed)
                for p in PRESET_SETS[plan.options.scene_set]()
            ]
            # Rollouts only query positions, so built-ins need no statistics.
            models: dict[str, RolloutModel] = {
                source.label: build_model(source, NormStats(), BOUNDARY_DISTANCE)
                for source in plan.models
            }

            self.runs = generalization_experiment(
                models,
                scenes,
                wall_spacing=config.dataset.wall_spacing,
                emd_every=config.eval.emd_every,
                render_dir=plan.out_dir / "renders" if plan.options.render else None,
                render_every=config.eval.render_every,
                progress=progress,
            )

            curves = plan.out_dir / "emd_curves.csv"
            with curves.open(mode="w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                writer.writerow(["model", "scene", "step", "emd"])
                for run in self.runs:
                    for step, value in zip(run.emd_steps, run.emd_values):
                        writer.writerow([run.model, run.scene, int(step) + 1, _fmt(value)])
            outputs.append(curves)

            summary = {
                f"{run.model}/{run.scene}": {
                    "mean_emd": float(np.mean(run.emd_values)) if len(run.emd_values) else 0.0,
                    "final_emd": float(run.emd_values[-1]) if len(run.emd_values) else 0.0,
                    "steps": run.result.steps,
                    "contained": _contained(run, CONTAINMENT_TOLERANCE),
                }
                for run in self.runs
            }
            outputs.append(_write_json(plan.out_dir / SUMMARY_NAME, summary))
            for run in self.runs:
                outputs.extend(run.frames)

            return JobResult(ok=True, error=None, plan=plan, outputs=outputs)

        except BaseException as e:
            return JobResult(ok=False, error=e, plan=plan, outputs=outputs)


@dataclass(frozen=True)
class NeighborOptions:
    """Represents the options for a neighbour analysis.

    Attributes:
        radius: Connectivity radius in scaled units.
        plateau_start: First frame of the plateau window; None means a quarter
            of the way in.
        render: Write the histogram plot.
        force: Overwrite a non-empty output directory.
    """

    radius: float = 0.03
    plateau_start: int | None = None
    render: bool = True
    force: bool = False


@dataclass(frozen=True)
class NeighborPlan:
    """Holds a plan for a neighbour analysis."""

    dataset: Path
    out_dir: Path
    options: NeighborOptions
    manifest: DatasetManifest | None
    can_run: bool
    reason_if_unavailable: str | None


def plan_neighbor_analysis(
    dataset: str | Path, out_dir: str | Path, options: NeighborOptions | None = None
) -> NeighborPlan:
    """Plan a neighbour-count analysis of a dataset."""
    if options is None:
        options = NeighborOptions()
    dataset_path, out_path = Path(dataset), Path(out_dir)

    def plan(manifest: DatasetManifest | None, reason: str | None) -> NeighborPlan:
        return NeighborPlan(
            dataset=dataset_path,
            out_dir=out_path,
            options=options,
            manifest=manifest,
            can_run=reason is None,
            reason_if_unavailable=reason,
        )

    if options.radius <= 0.0:
        return plan(None, f"radius must be positive: {options.radius}")
    try:
        manifest = read_manifest(dataset_path)
    except DataError as e:
        return plan(None, f"Cannot read dataset: {e}")
    return plan(manifest, prepare_output_dir(out_path, options.force))


class NeighborJob:
    """Job for the per-frame neighbour-count distribution of a dataset."""

    def __init__(self, plan: NeighborPlan) -> None:
        self.plan: NeighborPlan = plan
        self.stats: NeighborStats | None = None
        self.drift: float | None = None

    @classmethod
    def from_dataset(
        cls, dataset: str | Path, out_dir: str | Path, options: NeighborOptions | None = None
    ) -> NeighborJob:
        return cls(plan=plan_neighbor_analysis(dataset, out_dir, options))

    def run(self, progress: ProgressCallback | None = None) -> JobResult:
        """Count neighbours and write ``neighbor_histogram.csv``,
        ``neighbor_mean.csv`` and ``summary.json``."""
        plan = self.plan
        if not plan.can_run or plan.manifest is None:
            return JobResult(
                ok=False,
                error=ConfigError(plan.reason_if_unavailable or "Cannot analyse neighbours"),
                plan=plan,
            )

        outputs: list[Path] = []
        try:
            if plan.out_dir.exists():
                shutil.rmtree(plan.out_dir)
            plan.out_dir.mkdir(parents=True)
            trajectories = load_dataset(plan.manifest)
            if progress:
                progress(0.0, 0, 1)
            stats = neighbor_stats(trajectories, plan.options.radius)
            self.stats = stats

            n_frames = len(stats.mean_curve)
            start = plan.options.plateau_start
            start = n_frames // 4 if start is None else start
            self.drift = stats.plateau_drift(start, n_frames - 1)

            hist_path = plan.out_dir / "neighbor_histogram.csv"
            with hist_path.open(mode="w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                writer.writerow(["frame", *(f"n{k}" for k in range(stats.histogram.shape[1]))])
                for frame, counts in enumerate(stats.histogram):
                    writer.writerow([frame, *(int(c) for c in counts)])
            mean_path = plan.out_dir / "neighbor_mean.csv"
            with mean_path.open(mode="w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                writer.writerow(["frame", "mean"])
                for frame, value in enumerate(stats.mean_curve):
                    writer.writerow([frame, _fmt(value)])
            outputs += [hist_path, mean_path]

            summary = {
                "radius": plan.options.radius,
                "trajectories": len(trajectories),
                "frames": n_frames,
                "plateau_start": start,
                "plateau_drift": self.drift,
                "initial_mean": float(stats.mean_curve[0]),
                "final_mean": float(stats.mean_curve[-1]),
            }
            outputs.append(_write_json(plan.out_dir / SUMMARY_NAME, summary))
            if plan.options.render:
                outputs.append(render_neighbors(plan.out_dir / "neighbors.png", stats))
            if progress:
                progress(1.0, 1, 1)

            return JobResult(ok=True, error=None, plan=plan, outputs=outputs)

        except BaseException as e:
            return JobResult(ok=False, error=e, plan=plan, outputs=outputs)
