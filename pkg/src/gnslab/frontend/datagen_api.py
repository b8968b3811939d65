"""Dataset generation API: seeded FLIP trajectories plus a manifest."""

from __future__ import annotations

import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .._errors import ConfigError
from ..backend.dataset import (
    BOUNDARY_DISTANCE,
    BOUNDARY_MODES,
    BOUNDARY_PARTICLES,
    DatasetManifest,
    add_boundary_particles,
    stats_for_trajectory,
)
from ..backend.flip import SimConfig
from ..backend.scenes import PRESET_SETS, SceneSpec, simulate_preset, simulate_trajectory
from ..backend.settings import RunConfig
from ..backend.stats import NormStats
from ..backend.trajectory_io import MANIFEST_NAME, write_manifest, write_trajectory
from ._job import JobResult, ProgressCallback, prepare_output_dir

SPLITS = ("train", "validation", "test")
# Member i of a run with base seed s is simulated with seed s * SEED_STRIDE + i.
SEED_STRIDE = 100_000


@dataclass(frozen=True)
class DataGenOptions:
    """Represents the options for a data-generation run.

    Attributes:
        count: Trajectories to simulate (ignored for preset sets).
        seed: Base seed of the run.
        spec: Scene distribution.
        sim: Solver constants.
        boundary: Boundary representation written to disk.
        wall_spacing: Wall-particle spacing for the particle representation.
        preset: Name of a hand-designed scene set instead of random scenes.
        jobs: Worker processes.
        force: Overwrite a non-empty output directory.
    """

    count: int = 20
    seed: int = 0
    spec: SceneSpec = field(default_factory=SceneSpec)
    sim: SimConfig = field(default_factory=SimConfig)
    boundary: str = BOUNDARY_DISTANCE
    wall_spacing: float = 1.0
    preset: str | None = None
    jobs: int = 1
    force: bool = False

    @classmethod
    def from_run_config(
        cls,
        config: RunConfig,
        split: str = "train",
        boundary: str | None = None,
        preset: str | None = None,
        count: int | None = None,
        force: bool = False,
    ) -> DataGenOptions:
        """Options for one split of a run configuration.

        The split picks the trajectory count and shifts the base seed, so
        validation and test data follow the training distribution with
        different seeds. The variant decides the boundary representation
        unless ``boundary`` is given.
        """
        if split not in SPLITS:
            raise ConfigError(f"unknown split {split!r}, expected one of {SPLITS}")
        ds = config.dataset
        counts = {"train": ds.n_train, "validation": ds.n_validation, "test": ds.n_test}
        offsets = {"train": 0, "validation": ds.validation_seed_offset, "test": ds.test_seed_offset}
        return cls(
            count=counts[split] if count is None else count,
            seed=config.seed + offsets[split],
            spec=config.scene,
            sim=config.sim,
            boundary=boundary or config.variant.boundary,
            wall_spacing=ds.wall_spacing,
            preset=preset,
            jobs=config.jobs,
            force=force,
        )


@dataclass(frozen=True)
class DataGenPlan:
    """Holds a plan for generating a dataset.

    Attributes:
        out_dir: Dataset directory.
        options: Generation options.
        files: Member file names, in manifest order.
        member_seeds: Simulation seed of each member (random scenes only).
        can_run: Whether generation can proceed.
        reason_if_unavailable: Reason generation cannot proceed, if any.
    """

    out_dir: Path
    options: DataGenOptions
    files: list[str]
    member_seeds: list[int]
    can_run: bool
    reason_if_unavailable: str | None

    @property
    def manifest_path(self) -> Path:
        return self.out_dir / MANIFEST_NAME


def member_file(index: int) -> str:
    return f"traj_{index:05d}.gnst"


def plan_data_generation(out_dir: str | Path, options: DataGenOptions | None = None) -> DataGenPlan:
    """Plan a data-generation run.

    Args:
        out_dir: Dataset directory to create.
        options: Generation options. If None, defaults are used.

    Returns:
        DataGenPlan: The resulting plan.
    """
    if options is None:
        options = DataGenOptions()
    out_path = Path(out_dir)

    def unavailable(reason: str) -> DataGenPlan:
        return DataGenPlan(out_path, options, [], [], can_run=False, reason_if_unavailable=reason)

    if options.boundary not in BOUNDARY_MODES:
        return unavailable(f"Unknown boundary representation: {options.boundary}")
    if options.jobs < 1:
        return unavailable(f"jobs must be at least 1: {options.jobs}")

    if options.preset is not None:
        if options.preset not in PRESET_SETS:
            return unavailable(
                f"Unknown scene set {options.preset!r}, expected one of {sorted(PRESET_SETS)}"
            )
        count = len(PRESET_SETS[options.preset]())
        seeds: list[int] = []
    else:
        if options.count < 1:
            return unavailable(f"Nothing to generate: count is {options.count}")
        if options.count > SEED_STRIDE:
            return unavailable(f"count must not exceed {SEED_STRIDE}")
        count = options.count
        seeds = [options.seed * SEED_STRIDE + i for i in range(count)]

    reason = prepare_output_dir(out_path, options.force)
    if reason is not None:
        return unavailable(reason)

    return DataGenPlan(
        out_dir=out_path,
        options=options,
        files=[member_file(i) for i in range(count)],
        member_seeds=seeds,
        can_run=True,
        reason_if_unavailable=None,
    )


@dataclass(frozen=True)
class _MemberTask:
    index: int
    path: Path
    options: DataGenOptions
    seed: int


def _generate_member(task: _MemberTask) -> NormStats:
    """Simulate, store and summarize one trajectory. Runs in a worker process."""
    opts = task.options
    if opts.preset is not None:
        preset = PRESET_SETS[opts.preset]()[task.index]
        traj = simulate_preset(preset, opts.spec, opts.sim, seed=opts.seed)
    else:
        traj = simulate_trajectory(task.seed, opts.spec, opts.sim)
    if opts.boundary == BOUNDARY_PARTICLES:
        traj = add_boundary_particles(traj, opts.wall_spacing)
    write_trajectory(task.path, traj)
    return stats_for_trajectory(traj.quantized())


class DataGenJob:
    """Job for generating a dataset directory."""

    def __init__(self, plan: DataGenPlan) -> None:
        """Initialise data-generation job.

        Args:
            plan: The plan to execute.
        """
        self.plan: DataGenPlan = plan

    @classmethod
    def from_options(cls, out_dir: str | Path, options: DataGenOptions | None = None) -> DataGenJob:
        return cls(plan=plan_data_generation(out_dir, options))

    def _tasks(self) -> list[_MemberTask]:
        plan = self.plan
        seeds = plan.member_seeds or [plan.options.seed] * len(plan.files)
        return [
            _MemberTask(index=i, path=plan.out_dir / name, options=plan.options, seed=seeds[i])
            for i, name in enumerate(plan.files)
        ]

    def run(self, progress: ProgressCallback | None = None) -> JobResult:
        """Simulate every member and write the manifest.

        Members are simulated in parallel when ``jobs > 1``; their statistics
        are merged in member order, so the manifest does not depend on
        scheduling.

        Args:
            progress: Optional progress callback, called once per member.

        Returns:
            JobResult indicating success or failure.
        """
        plan = self.plan
        if not plan.can_run:
            return JobResult(
                ok=False,
                error=ConfigError(plan.reason_if_unavailable or "Cannot generate dataset"),
                plan=plan,
            )

        total = len(plan.files)
        try:
            if plan.out_dir.exists():
                shutil.rmtree(plan.out_dir)
            plan.out_dir.mkdir(parents=True)
            if progress:
                progress(0.0, 0, total)

            tasks = self._tasks()
            stats = NormStats()
            if plan.options.jobs > 1:
                with ProcessPoolExecutor(max_workers=plan.options.jobs) as pool:
                    for done, member in enumerate(pool.map(_generate_member, tasks), start=1):
                        stats.merge(member)
                        if progress:
                            progress(done / total, done, total)
            else:
                for done, task in enumerate(tasks, start=1):
                    stats.merge(_generate_member(task))
                    if progress:
                        progress(done / total, done, total)

            spec = plan.options.spec
            if plan.options.preset is not None:
                domain = PRESET_SETS[plan.options.preset]()[0].domain
                spec = replace(spec, domain=domain)
            manifest = DatasetManifest(
                root=plan.out_dir,
                files=list(plan.files),
                stats=stats,
                domain=spec.domain,
                boundary=plan.options.boundary,
                seed=plan.options.seed,
                scene_spec={"preset": plan.options.preset, **spec.to_dict()},
            )
            manifest_path = write_manifest(manifest)
            outputs = [plan.out_dir / name for name in plan.files] + [manifest_path]
            return JobResult(ok=True, error=None, plan=plan, outputs=outputs)

        except BaseException as e:
            return JobResult(ok=False, error=e, plan=plan)
