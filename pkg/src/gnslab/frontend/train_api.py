"""Training API: run directories with checkpoints, a metrics log and screening."""

from __future__ import annotations

import csv
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from .._errors import ConfigError, DataError
from ..backend.checkpoint import (
    Checkpoint,
    inspect_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from ..backend.dataset import DatasetManifest
from ..backend.evaluation import METRICS, GnsModel, evaluate, select_checkpoint
from ..backend.settings import RunConfig, save_run_config
from ..backend.training import TrainVariant, train
from ..backend.trajectory_io import load_dataset, read_manifest
from ._job import JobResult, ProgressCallback, prepare_output_dir

CONFIG_NAME = "config.json"
METRICS_NAME = "metrics.csv"
SCREENING_NAME = "screening.csv"
BEST_NAME = "best.json"
CHECKPOINT_DIR = "checkpoints"
SELECTION_METRIC = "mse_400"


def checkpoint_file(step: int) -> str:
    return f"ckpt_{step:08d}.gnsc"


@dataclass(frozen=True)
class TrainOptions:
    """Represents the options for a training run.

    Attributes:
        config: Resolved run configuration (variant, model, optimizer, noise).
        pretrained: Donor checkpoint for the ``2si`` variant.
        validation: Validation dataset directory for screening, if any.
        force: Overwrite a non-empty run directory.
    """

    config: RunConfig = field(default_factory=RunConfig)
    pretrained: Path | None = None
    validation: Path | None = None
    force: bool = False


@dataclass(frozen=True)
class TrainPlan:
    """Holds a plan for a training run.

    Attributes:
        dataset: Training dataset directory.
        run_dir: Output run directory.
        options: Training options.
        manifest: Training manifest, when readable.
        validation_manifest: Validation manifest, when screening.
        can_run: Whether training can proceed.
        reason_if_unavailable: Reason training cannot proceed, if any.
    """

    dataset: Path
    run_dir: Path
    options: TrainOptions
    manifest: DatasetManifest | None
    validation_manifest: DatasetManifest | None
    can_run: bool
    reason_if_unavailable: str | None

    @property
    def checkpoint_dir(self) -> Path:
        return self.run_dir / CHECKPOINT_DIR


def plan_training(
    dataset: str | Path, run_dir: str | Path, options: TrainOptions | None = None
) -> TrainPlan:
    """Plan a training run.

    Args:
        dataset: Training dataset directory (or its manifest file).
        run_dir: Run directory to create.
        options: Training options. If None, defaults are used.

    Returns:
        TrainPlan: The resulting plan.
    """
    if options is None:
        options = TrainOptions()
    dataset_path, run_path = Path(dataset), Path(run_dir)
    variant = options.config.variant

    def unavailable(reason: str, manifest: DatasetManifest | None = None) -> TrainPlan:
        return TrainPlan(
            dataset=dataset_path,
            run_dir=run_path,
            options=options,
            manifest=manifest,
            validation_manifest=None,
            can_run=False,
            reason_if_unavailable=reason,
        )

    try:
        manifest = read_manifest(dataset_path)
    except DataError as e:
        return unavailable(f"Cannot read training dataset: {e}")

    if manifest.boundary != variant.boundary:
        return unavailable(
            f"Variant {variant.value} needs {variant.boundary!r} boundary data, "
            f"dataset has {manifest.boundary!r}",
            manifest,
        )

    if variant.needs_pretrained:
        if options.pretrained is None:
            return unavailable("Variant 2si needs --pretrained <checkpoint>", manifest)
        insp = inspect_checkpoint(options.pretrained)
        if not insp.header_ok:
            return unavailable(f"Unusable pretrained checkpoint: {insp.reason}", manifest)
        if insp.variant != TrainVariant.ONE_STEP.value:
            return unavailable(
                f"Variant 2si starts from a 1s checkpoint, {options.pretrained} is "
                f"{insp.variant or 'unlabelled'}",
                manifest,
            )

    validation: DatasetManifest | None = None
    if options.validation is not None:
        try:
            validation = read_manifest(options.validation)
        except DataError as e:
            return unavailable(f"Cannot read validation dataset: {e}", manifest)
        if validation.boundary != manifest.boundary:
            return unavailable("Validation and training data use different boundaries", manifest)

    reason = prepare_output_dir(run_path, options.force)
    if reason is not None:
        return unavailable(reason, manifest)

    return TrainPlan(
        dataset=dataset_path,
        run_dir=run_path,
        options=options,
        manifest=manifest,
        validation_manifest=validation,
        can_run=True,
        reason_if_unavailable=None,
    )


@dataclass
class TrainSummary:
    """What a finished run produced."""

    checkpoints: list[Path] = field(default_factory=list)
    final_loss: float | None = None
    best_step: int | None = None
    best_score: float | None = None


class TrainJob:
    """Job for training one model variant."""

    def __init__(self, plan: TrainPlan) -> None:
        """Initialise training job.

        Args:
            plan: The plan to execute.
        """
        self.plan: TrainPlan = plan
        self.summary = TrainSummary()
        self._best: Checkpoint | None = None
        self._scores: dict[int, float] = {}

    @classmethod
    def from_dataset(
        cls,
        dataset: str | Path,
        run_dir: str | Path,
        options: TrainOptions | None = None,
    ) -> TrainJob:
        return cls(plan=plan_training(dataset, run_dir, options))

    def run(self, progress: ProgressCallback | None = None) -> JobResult:
        """Train, checkpoint and screen.

        Every optimizer step appends ``step,lr,loss`` to ``metrics.csv``. Every
        checkpoint is saved and, with a validation set, scored on all metrics;
        the checkpoint with the lowest MSE 400 is recorded in ``best.json``.

        Args:
            progress: Optional progress callback, called once per optimizer step.

        Returns:
            JobResult indicating success or failure.
        """
        plan = self.plan
        if not plan.can_run or plan.manifest is None:
            return JobResult(
                ok=False,
                error=ConfigError(plan.reason_if_unavailable or "Cannot train"),
                plan=plan,
            )

        config = plan.options.config
        train_cfg = config.train_config()
        outputs: list[Path] = []
        try:
            if plan.run_dir.exists():
                shutil.rmtree(plan.run_dir)
            plan.checkpoint_dir.mkdir(parents=True)
            outputs.append(save_run_config(plan.run_dir / CONFIG_NAME, config))

            trajectories = load_dataset(plan.manifest)
            validation = (
                load_dataset(plan.validation_manifest) if plan.validation_manifest else []
            )
            pretrained = (
                load_checkpoint(plan.options.pretrained)
                if config.variant.needs_pretrained and plan.options.pretrained
                else None
            )

            metrics_path = plan.run_dir / METRICS_NAME
            screening_path = plan.run_dir / SCREENING_NAME
            outputs.append(metrics_path)
            total = train_cfg.total_steps

            with metrics_path.open(mode="w", newline="", encoding="utf-8") as log:
                writer = csv.writer(log)
                writer.writerow(["step", "lr", "loss"])

                def on_step(step: int, lr: float, loss: float) -> None:
                    writer.writerow([step, repr(lr), repr(loss)])
                    if progress:
                        progress(step / total, step, total)

                screen_rows: list[list[object]] = []
                for ck in train(
                    config.variant,
                    trajectories,
                    plan.manifest.stats,
                    train_cfg,
                    config.model,
                    pretrained=pretrained,
                    on_step=on_step,
                ):
                    log.flush()
                    path = save_checkpoint(plan.checkpoint_dir / checkpoint_file(ck.step), ck)
                    self.summary.checkpoints.append(path)
                    self.summary.final_loss = ck.loss
                    outputs.append(path)
                    if validation:
                        model = GnsModel.from_checkpoint(ck)
                        screen_rows.append(self._screen(ck, model, validation))

            if validation:
                outputs.append(self._write_screening(screening_path, screen_rows))
                outputs.append(self._write_best(plan.run_dir / BEST_NAME))

            return JobResult(ok=True, error=None, plan=plan, outputs=outputs)

        except BaseException as e:
            return JobResult(ok=False, error=e, plan=plan, outputs=outputs)

    def _screen(self, ck: Checkpoint, model: GnsModel, validation: list) -> list[object]:
        eval_cfg = self.plan.options.config.eval
        report = evaluate(
            model,
            validation,
            model.stats,
            label=str(ck.step),
            emd_every=eval_cfg.emd_every,
            frame_stride=eval_cfg.frame_stride,
        )
        means = {m: v["mean"] for m, v in report.aggregate().items()}
        self._scores[ck.step] = means[SELECTION_METRIC]
        candidates = [ck] if self._best is None else [self._best, ck]
        self._best, _ = select_checkpoint(candidates, scorer=lambda c: self._scores[c.step])
        self.summary.best_step = self._best.step
        self.summary.best_score = self._scores[self._best.step]
        return [ck.step, *(repr(means[m]) for m in METRICS)]

    @staticmethod
    def _write_screening(path: Path, rows: list[list[object]]) -> Path:
        with path.open(mode="w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["step", *METRICS])
            writer.writerows(rows)
        return path

    def _write_best(self, path: Path) -> Path:
        step = self.summary.best_step
        data = {
            "metric": SELECTION_METRIC,
            "step": step,
            "score": self.summary.best_score,
            "checkpoint": f"{CHECKPOINT_DIR}/{checkpoint_file(step or 0)}",
        }
        text = json.dumps(obj=data, indent=4, sort_keys=True) + "\n"
        path.write_text(data=text, encoding="utf-8")
        return path


def best_checkpoint(run_dir: str | Path) -> Path:
    """The checkpoint a run's screening selected, else its last checkpoint."""
    run_dir = Path(run_dir)
    best = run_dir / BEST_NAME
    if best.is_file():
        try:
            return run_dir / json.loads(best.read_text(encoding="utf-8"))["checkpoint"]
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise DataError(f"malformed {best}: {e}") from e
    found = sorted((run_dir / CHECKPOINT_DIR).glob("ckpt_*.gnsc"))
    if not found:
        raise DataError(f"no checkpoints in {run_dir}")
    return found[-1]
