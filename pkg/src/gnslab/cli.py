"""Main CLI for the gnslab learned fluid simulation lab."""

from __future__ import annotations

import json
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path
from typing import NoReturn

from typer_extensions import ExtendedTyper

from ._errors import GnsLabError
from .backend.checkpoint import CKPT_MAGIC, inspect_checkpoint
from .backend.evaluation import report_table
from .backend.settings import RunConfig, resolve_config
from .backend.trajectory_io import TRAJ_MAGIC, inspect_trajectory
from .frontend._job import Job, JobResult, exit_code_for
from .frontend.datagen_api import DataGenJob, DataGenOptions
from .frontend.eval_api import (
    EvalJob,
    EvalOptions,
    GeneralizeJob,
    GeneralizeOptions,
    NeighborJob,
    NeighborOptions,
)
from .frontend.train_api import TrainJob, TrainOptions

app = ExtendedTyper(help="gnslab - FLIP data, graph network simulators and their evaluation")

_PROGRESS_TICKS = 1000


def format_time(seconds: float) -> str:
    """Format time duration in human-readable format.

    Args:
        seconds: Time in seconds

    Returns:
        Formatted string (e.g., "1.5s", "2m 30s")
    """
    if seconds < 1:
        return f"{seconds * 1000:.0f}ms"

    elif seconds < 60:
        return f"{seconds:.2f}s"

    else:
        mins: int = int(seconds // 60)
        secs: float = seconds % 60

        return f"{mins}m {secs:.1f}s"


def _fail(message: str, code: int) -> NoReturn:
    app.echo(message=app.style(text=f"✗ {message}", fg="red"), err=True)
    sys.exit(code)


def _resolve(
    profile: str | None,
    config: Path | None,
    seed: int | None,
    jobs: int | None,
    variant: str | None = None,
) -> RunConfig:
    try:
        return resolve_config(
            profile=profile, config_path=config, seed=seed, jobs=jobs, variant=variant
        )
    except GnsLabError as e:
        _fail(f"Configuration error: {e}", e.exit_code)


def _run(job: Job, label: str, quiet: bool) -> JobResult:
    """Run a job behind a progress bar unless quiet."""
    if quiet:
        return job.run()

    with app.progressbar(
        length=_PROGRESS_TICKS,
        label=label,
        show_eta=True,
        show_percent=True,
    ) as bar:

        def progress_callback(fraction, current, total):
            bar.update(n_steps=int(fraction * _PROGRESS_TICKS) - bar.pos)

        return job.run(progress=progress_callback)


def _finish(job: Job, label: str, quiet: bool, what: str) -> JobResult:
    """Check the plan, run the job and exit with its code on failure."""
    plan = job.plan
    if not getattr(plan, "can_run", False):
        _fail(f"Error: {getattr(plan, 'reason_if_unavailable', None)}", 2)

    start_time: float = time.time()
    result = _run(job, label, quiet)
    elapsed: float = time.time() - start_time

    if not result.ok:
        _fail(f"{what} failed: {result.error}", exit_code_for(result.error))

    if not quiet:
        app.echo(message=app.style(text=f"✓ {what} finished!", fg="green"))
        app.echo(message=f"  Files written: {len(result.outputs)}")
        app.echo(message=f"  Time:          {format_time(seconds=elapsed)}")
    return result


@app.command(name="gen-data", aliases=["g", "gen"])
def gen_data(
    out: Path = app.Option(..., "--out", "-o", help="Dataset directory to create"),
    split: str = app.Option(
        "train", "--split", help="Dataset split (train/validation/test); sets count and seed"
    ),
    count: int | None = app.Option(None, "--count", "-n", min=1, help="Trajectory count"),
    scenes: str | None = app.Option(
        None, "--scenes", help="Hand-designed scene set instead of random scenes (challenge/tall)"
    ),
    boundary: str | None = app.Option(
        None, "--boundary", help="Boundary representation (distance/particles)"
    ),
    variant: str | None = app.Option(
        None, "--variant", help="Variant whose boundary representation to generate for"
    ),
    config: Path | None = app.Option(None, "--config", "-c", help="JSON run config"),
    profile: str | None = app.Option(None, "--profile", "-p", help="Profile (desk/paper)"),
    seed: int | None = app.Option(None, "--seed", "-s", help="Base seed"),
    jobs: int | None = app.Option(None, "--jobs", "-j", min=1, help="Worker processes"),
    force: bool = app.Option(False, "--force", "-f", help="Overwrite a non-empty directory"),
    quiet: bool = app.Option(False, "--quiet", "-q", help="Suppress all output"),
) -> None:
    """Simulate seeded FLIP trajectories and write a dataset with its manifest."""
    try:
        run_config = _resolve(profile, config, seed, jobs, variant)
        options = DataGenOptions.from_run_config(
            run_config, split=split, boundary=boundary, preset=scenes, count=count, force=force
        )
        job = DataGenJob.from_options(out_dir=out, options=options)
        plan = job.plan

        if not quiet and plan.can_run:
            app.echo(message=f"Dataset:     {plan.out_dir}")
            app.echo(message=f"Profile:     {run_config.profile}")
            app.echo(message=f"Scenes:      {scenes or 'random'}")
            app.echo(message=f"Trajectories: {len(plan.files)}")
            app.echo(message=f"Steps:       {options.spec.steps}")
            app.echo(message=f"Boundary:    {options.boundary}")
            app.echo(message=f"Seed:        {options.seed}")
            app.echo()

        _finish(job, "Simulating", quiet, "Data generation")

    except GnsLabError as e:
        _fail(f"Data generation error: {e}", e.exit_code)

    except Exception as e:
        _fail(f"Unexpected error: {e}", 1)


@app.command(aliases=["t"])
def train(
    dataset: Path = app.Argument(default=..., help="Training dataset directory"),
    out: Path = app.Option(..., "--out", "-o", help="Run directory to create"),
    validation: Path | None = app.Option(
        None, "--validation", help="Validation dataset directory for screening"
    ),
    pretrained: Path | None = app.Option(
        None, "--pretrained", help="1s checkpoint to initialise variant 2si from"
    ),
    variant: str | None = app.Option(
        None, "--variant", "-v", help="Training variant (1s/1sn/1snb/2ss/2si)"
    ),
    steps: int | None = app.Option(None, "--steps", min=0, help="Optimizer steps"),
    config: Path | None = app.Option(None, "--config", "-c", help="JSON run config"),
    profile: str | None = app.Option(None, "--profile", "-p", help="Profile (desk/paper)"),
    seed: int | None = app.Option(None, "--seed", "-s", help="Training seed"),
    jobs: int | None = app.Option(None, "--jobs", "-j", min=1, help="Worker processes"),
    force: bool = app.Option(False, "--force", "-f", help="Overwrite a non-empty directory"),
    quiet: bool = app.Option(False, "--quiet", "-q", help="Suppress all output"),
) -> None:
    """Train a GNS variant, writing checkpoints, metrics.csv and screening results."""
    try:
        run_config = _resolve(profile, config, seed, jobs, variant)
        if steps is not None:
            run_config = replace(run_config, train=replace(run_config.train, total_steps=steps))
        options = TrainOptions(
            config=run_config, pretrained=pretrained, validation=validation, force=force
        )
        job = TrainJob.from_dataset(dataset=dataset, run_dir=out, options=options)

        if not quiet and job.plan.can_run:
            model = run_config.model_config()
            app.echo(message=f"Dataset:   {dataset}")
            app.echo(message=f"Run dir:   {out}")
            app.echo(message=f"Variant:   {run_config.variant.value}")
            app.echo(
                message=f"Model:     latent {model.latent_size}, "
                f"{model.message_passing_steps} message-passing steps"
            )
            app.echo(message=f"Steps:     {run_config.train.total_steps}")
            app.echo(message=f"Seed:      {run_config.seed}")
            app.echo()

        _finish(job, "Training", quiet, "Training")

        if not quiet:
            summary = job.summary
            if summary.final_loss is not None:
                app.echo(message=f"  Final loss:    {summary.final_loss:.4e}")
            if summary.best_step is not None:
                app.echo(
                    message=f"  Best (MSE 400): step {summary.best_step}, {summary.best_score:.4e}"
                )
            app.echo()

    except GnsLabError as e:
        _fail(f"Training error: {e}", e.exit_code)

    except Exception as e:
        _fail(f"Unexpected error: {e}", 1)


@app.command(name="eval", aliases=["e"])
def evaluate(
    checkpoints: list[str] = app.Argument(
        default=..., help="Checkpoint files, or 'oracle' / 'zero' baselines"
    ),
    test: Path = app.Option(..., "--test", help="Test dataset directory"),
    out: Path = app.Option(..., "--out", "-o", help="Report directory to create"),
    no_render: bool = app.Option(False, "--no-render", help="Skip PNG renders"),
    config: Path | None = app.Option(None, "--config", "-c", help="JSON run config"),
    profile: str | None = app.Option(None, "--profile", "-p", help="Profile (desk/paper)"),
    jobs: int | None = app.Option(None, "--jobs", "-j", min=1, help="Worker processes"),
    force: bool = app.Option(False, "--force", "-f", help="Overwrite a non-empty directory"),
    quiet: bool = app.Option(False, "--quiet", "-q", help="Suppress all output"),
) -> None:
    """Score models on a test set with EMD, MSE-acc 1, MSE 20 and MSE 400."""
    try:
        run_config = _resolve(profile, config, None, jobs)
        options = EvalOptions(config=run_config, render=not no_render, force=force)
        job = EvalJob.from_checkpoints(
            checkpoints=checkpoints, test=test, out_dir=out, options=options
        )

        if not quiet and job.plan.can_run:
            app.echo(message=f"Test set:  {test}")
            app.echo(message=f"Models:    {', '.join(m.label for m in job.plan.models)}")
            app.echo(message=f"Output:    {out}")
            app.echo()

        _finish(job, "Evaluating", quiet, "Evaluation")

        if not quiet:
            app.echo()
            app.echo(message=report_table(job.reports))
            app.echo()

    except GnsLabError as e:
        _fail(f"Evaluation error: {e}", e.exit_code)

    except Exception as e:
        _fail(f"Unexpected error: {e}", 1)


@app.command(aliases=["gz"])
def generalize(
    checkpoints: list[str] = app.Argument(
        default=..., help="Checkpoint files (e.g. 1sn and 1snb), or 'oracle'"
    ),
    out: Path = app.Option(..., "--out", "-o", help="Output directory to create"),
    scenes: str = app.Option("tall", "--scenes", help="Scene set to roll out on"),
    no_render: bool = app.Option(False, "--no-render", help="Skip PNG renders"),
    config: Path | None = app.Option(None, "--config", "-c", help="JSON run config"),
    profile: str | None = app.Option(None, "--profile", "-p", help="Profile (desk/paper)"),
    seed: int | None = app.Option(None, "--seed", "-s", help="Particle jitter seed"),
    force: bool = app.Option(False, "--force", "-f", help="Overwrite a non-empty directory"),
    quiet: bool = app.Option(False, "--quiet", "-q", help="Suppress all output"),
) -> None:
    """Roll models out on a taller domain than they were trained on."""
    try:
        run_config = _resolve(profile, config, seed, None)
        options = GeneralizeOptions(
            config=run_config, scene_set=scenes, render=not no_render, force=force
        )
        job = GeneralizeJob.from_checkpoints(checkpoints=checkpoints, out_dir=out, options=options)

        _finish(job, "Rolling out", quiet, "Generalization")

        if not quiet:
            for run in job.runs:
                mean = float(run.emd_values.mean()) if len(run.emd_values) else 0.0
                app.echo(message=f"  {run.model:<12} {run.scene:<20} mean EMD {mean:.4e}")
            app.echo()

    except GnsLabError as e:
        _fail(f"Generalization error: {e}", e.exit_code)

    except Exception as e:
        _fail(f"Unexpected error: {e}", 1)


@app.command(aliases=["n", "nb"])
def neighbors(
    dataset: Path = app.Argument(default=..., help="Dataset directory"),
    out: Path = app.Option(..., "--out", "-o", help="Output directory to create"),
    radius: float = app.Option(0.03, "--radius", "-r", help="Connectivity radius"),
    no_render: bool = app.Option(False, "--no-render", help="Skip the PNG plot"),
    force: bool = app.Option(False, "--force", "-f", help="Overwrite a non-empty directory"),
    quiet: bool = app.Option(False, "--quiet", "-q", help="Suppress all output"),
) -> None:
    """Per-frame neighbour-count distribution of a dataset."""
    try:
        options = NeighborOptions(radius=radius, render=not no_render, force=force)
        job = NeighborJob.from_dataset(dataset=dataset, out_dir=out, options=options)

        _finish(job, "Counting", quiet, "Neighbour analysis")

        if not quiet and job.stats is not None:
            curve = job.stats.mean_curve
            app.echo(message=f"  Mean neighbours: {curve[0]:.2f} -> {curve[-1]:.2f}")
            app.echo(message=f"  Plateau drift:   {100.0 * (job.drift or 0.0):.1f}%")
            app.echo()

    except GnsLabError as e:
        _fail(f"Neighbour analysis error: {e}", e.exit_code)

    except Exception as e:
        _fail(f"Unexpected error: {e}", 1)


@app.command(aliases=["i", "info"])
def inspect(
    file: Path = app.Argument(..., help="Trajectory (.gnst) or checkpoint (.gnsc) file"),
    as_json: bool = app.Option(False, "--json", help="Print the result as JSON"),
) -> None:
    """Inspect a trajectory or checkpoint file without loading it."""
    try:
        magic = b""
        if file.is_file():
            with file.open(mode="rb") as f:
                magic = f.read(4)

        if magic == CKPT_MAGIC:
            result = inspect_checkpoint(file)
            valid = result.is_checkpoint and result.header_ok
        else:
            result = inspect_trajectory(file)
            valid = result.is_trajectory and result.header_ok

        if as_json:
            app.echo(message=json.dumps(obj=asdict(result), indent=4, default=str))
            if not valid:
                sys.exit(3)
            return

        if magic not in (CKPT_MAGIC, TRAJ_MAGIC):
            app.echo(message=app.style(text="✗ Not a gnslab file", fg="red"))
            if result.reason:
                app.echo(message=f"  Reason: {result.reason}")
            sys.exit(3)

        if not result.header_ok:
            app.echo(message=app.style(text="✗ Invalid file header", fg="yellow"))
            if result.reason:
                app.echo(message=f"  Reason: {result.reason}")
            sys.exit(3)

        if magic == CKPT_MAGIC:
            app.echo(message=app.style(text="✓ Valid checkpoint", fg="green"))
            app.echo()
            app.echo(message=f"Version:      {result.version}")
            app.echo(message=f"Variant:      {result.variant or 'unknown'}")
            app.echo(message=f"Step:         {result.step}")
            if result.loss is not None:
                app.echo(message=f"Loss:         {result.loss:.4e}")
            app.echo(message=f"Tensors:      {result.n_tensors} ({result.n_values} values)")
            app.echo(message=f"Optimizer:    {'Yes' if result.has_optimizer else 'No'}")
            if result.config:
                app.echo(
                    message=f"Model:        latent {result.config.get('latent_size')}, "
                    f"{result.config.get('message_passing_steps')} message-passing steps"
                )
        else:
            app.echo(message=app.style(text="✓ Valid trajectory", fg="green"))
            app.echo()
            app.echo(message=f"Version:      {result.version}")
            app.echo(message=f"Frames:       {result.n_frames}")
            app.echo(message=f"Particles:    {result.n_particles} ({result.n_fluid} fluid)")
            app.echo(message=f"Domain:       {result.domain[0]} x {result.domain[1]}")
            app.echo(message=f"Time step:    {result.dt} s")
            app.echo(message=f"Boundary:     {result.boundary}")
            app.echo(message=f"Bounds:       {result.scaled_bounds}")
        app.echo()

    except Exception as e:
        _fail(f"Error inspecting file: {e}", 1)


def main():
    """Entry point for the CLI."""
    app()


if __name__ == "__main__":
    main()
