"""Tests for the evaluation module."""

from dataclasses import replace

import numpy as np
import pytest

from gnslab._errors import ContractError, DataError, RolloutDivergedError
from gnslab.backend.checkpoint import Checkpoint
from gnslab.backend.dataset import BOUNDARY_PARTICLES, HISTORY, WINDOW, Trajectory
from gnslab.backend.evaluation import (
    METRICS,
    GnsModel,
    GroundTruthModel,
    MetricReport,
    StepContext,
    TrajectoryMetrics,
    ZeroAccelerationModel,
    emd_curve,
    emd_steps,
    evaluate,
    evaluate_trajectory,
    generalization_experiment,
    mse_20,
    mse_20_subsampled,
    mse_400,
    mse_acc_1,
    neighbor_stats,
    report_table,
    rollout,
    select_checkpoint,
)
from gnslab.backend.flip import ParticleType
from gnslab.backend.gns import init_gns
from gnslab.backend.stats import normalize
from gnslab.backend.training import target_acceleration


def constant_velocity_trajectory(n_frames: int = 30) -> Trajectory:
    """Three fluid particles drifting in straight lines next to one obstacle."""
    start = np.array([[0.3, 0.3], [0.5, 0.4], [0.6, 0.6], [0.45, 0.2]])
    velocity = np.array([[1e-3, 2e-3], [-1e-3, 0.0], [0.0, -1e-3], [0.0, 0.0]])
    frames = start[None] + np.arange(n_frames)[:, None, None] * velocity[None]
    types = np.array([0, 0, 0, ParticleType.OBSTACLE], dtype=np.uint8)
    return Trajectory(frames=frames, types=types, name="drift")


class ShiftModel:
    """Moves every particle by a fixed offset per step."""

    boundary = "distance"

    def __init__(self, offset: float) -> None:
        self.offset = offset

    def predict_acceleration(self, window, ctx):
        return np.zeros_like(window[HISTORY])

    def predict_positions(self, window, ctx):
        return window[HISTORY] + self.offset


class TestRollout:
    """Test autoregressive rollouts."""

    def test_oracle_reproduces_trajectory(self, toy_trajectory, toy_stats):
        """Test that the ground-truth model replays the source frames."""
        result = rollout(GroundTruthModel(toy_stats), toy_trajectory, 10, start=3)
        np.testing.assert_array_equal(result.predicted, toy_trajectory.frames[9:19])
        np.testing.assert_array_equal(result.ground_truth, toy_trajectory.frames[9:19])
        assert result.steps == 10
        assert np.all(result.squared_error_curve() == 0.0)

    def test_zero_acceleration_on_straight_lines(self, toy_stats):
        """Test that the constant-velocity baseline is exact on drifting particles."""
        traj = constant_velocity_trajectory()
        result = rollout(ZeroAccelerationModel(toy_stats), traj, traj.n_frames - WINDOW)
        np.testing.assert_allclose(result.predicted, traj.frames[WINDOW:], atol=1e-12)

    def test_obstacles_held(self, toy_trajectory):
        """Test that static particles stay put whatever the model says."""
        result = rollout(ShiftModel(0.01), toy_trajectory, 5)
        static = ~toy_trajectory.fluid
        for k in range(5):
            np.testing.assert_array_equal(
                result.predicted[k][static], toy_trajectory.frames[HISTORY][static]
            )
        np.testing.assert_allclose(
            result.predicted[4][toy_trajectory.fluid],
            toy_trajectory.frames[HISTORY][toy_trajectory.fluid] + 0.05,
        )

    def test_too_long(self, toy_trajectory, toy_stats):
        """Test that a rollout past the last frame is refused."""
        with pytest.raises(ContractError):
            rollout(GroundTruthModel(toy_stats), toy_trajectory, toy_trajectory.n_frames)

    def test_divergence(self, toy_trajectory):
        """Test that a NaN prediction stops the rollout with its step index."""
        with pytest.raises(RolloutDivergedError) as excinfo:
            rollout(ShiftModel(np.nan), toy_trajectory, 5)
        assert excinfo.value.step == 0
        assert excinfo.value.exit_code == 4

    def test_gns_model(self, tiny_model_config, toy_trajectory, toy_stats):
        """Test that a learned model rolls out with finite positions."""
        model = GnsModel(init_gns(tiny_model_config, rng=1), toy_stats)
        result = rollout(model, toy_trajectory, 8)
        assert result.predicted.shape == (8, toy_trajectory.n_particles, 2)
        assert np.all(np.isfinite(result.predicted))
        assert model.boundary == "distance"


class TestMetrics:
    """Test the rollout metrics."""

    def test_oracle_scores_zero(self, toy_trajectory, toy_stats):
        """Test that the ground truth scores zero on every metric."""
        row = evaluate_trajectory(GroundTruthModel(toy_stats), toy_trajectory, toy_stats)
        for metric in METRICS:
            assert getattr(row, metric) == pytest.approx(0.0, abs=1e-12)
        assert len(row.mse_curve) == toy_trajectory.n_frames - WINDOW
        np.testing.assert_array_equal(row.emd_steps, [9, 19])

    def test_mse_acc_1_zero_model(self, toy_trajectory, toy_stats):
        """Test the one-step error of a model that predicts no acceleration."""
        mean, std = toy_stats.acceleration_mean, toy_stats.acceleration_std
        fluid = toy_trajectory.fluid
        expected = []
        for t in range(HISTORY, toy_trajectory.n_frames - 1):
            window = toy_trajectory.frames[t - HISTORY : t + 1]
            target = normalize(target_acceleration(window, toy_trajectory.frames[t + 1]), mean, std)
            pred = normalize(np.zeros_like(target), mean, std)
            expected.append(np.mean((pred - target)[fluid] ** 2))
        got = mse_acc_1(ZeroAccelerationModel(toy_stats), [toy_trajectory], toy_stats)
        assert got == pytest.approx(float(np.mean(expected)), rel=1e-12)

    def test_mse_acc_1_stride(self, toy_trajectory, toy_stats):
        """Test that the frame stride is validated."""
        with pytest.raises(ContractError):
            mse_acc_1(ZeroAccelerationModel(toy_stats), [toy_trajectory], toy_stats, 0)

    def test_mse_20_segments(self, make_toy_trajectory, toy_stats):
        """Test restarted segments against individual rollouts."""
        traj = make_toy_trajectory(seed=2, n_frames=50)
        model = ZeroAccelerationModel(toy_stats)
        curves = [rollout(model, traj, 20, start=s).squared_error_curve() for s in (0, 20)]
        assert mse_20(model, traj) == pytest.approx(float(np.mean(curves)), rel=1e-12)

    def test_mse_20_too_short(self, make_toy_trajectory, toy_stats):
        """Test that a trajectory without one full segment is a data error."""
        traj = make_toy_trajectory(n_frames=25)
        with pytest.raises(DataError):
            mse_20(ZeroAccelerationModel(toy_stats), traj)

    def test_short_trajectory(self, toy_stats):
        """Test that a trajectory shorter than one segment still gets a report row."""
        traj = constant_velocity_trajectory(n_frames=12)
        row = evaluate_trajectory(GroundTruthModel(toy_stats), traj, toy_stats)
        assert np.isnan(row.mse_20)
        assert len(row.mse_curve) == 12 - WINDOW
        np.testing.assert_array_equal(row.emd_steps, [5])
        for metric in ("emd", "mse_acc_1", "mse_20_subsampled", "mse_400"):
            assert getattr(row, metric) == pytest.approx(0.0, abs=1e-12)

    def test_no_fluid(self, toy_stats):
        """Test that a trajectory of obstacles alone cannot be scored."""
        frames = np.broadcast_to(np.array([[0.4, 0.4], [0.6, 0.6]]), (10, 2, 2))
        types = np.full(2, ParticleType.OBSTACLE, dtype=np.uint8)
        traj = Trajectory(frames=frames, types=types, name="walls")
        model = GroundTruthModel(toy_stats)
        with pytest.raises(DataError, match="no fluid"):
            mse_acc_1(model, [traj], toy_stats)
        with pytest.raises(DataError, match="no fluid"):
            evaluate_trajectory(model, traj, toy_stats)

    def test_mse_400(self, toy_trajectory, toy_stats):
        """Test the full-horizon error against the curve mean."""
        model = ZeroAccelerationModel(toy_stats)
        value, curve = mse_400(model, toy_trajectory)
        assert len(curve) == toy_trajectory.n_frames - WINDOW
        assert value == pytest.approx(float(curve.mean()))
        assert value > 0.0

    def test_mse_20_subsampled(self):
        """Test sampling every 20th step of a curve."""
        curve = np.arange(1.0, 46.0)
        assert mse_20_subsampled(curve) == pytest.approx(30.0)
        assert mse_20_subsampled(np.array([1.0, 2.0, 7.0])) == pytest.approx(7.0)

    def test_emd_steps(self):
        """Test the steps scored by EMD."""
        np.testing.assert_array_equal(emd_steps(25), [9, 19])
        np.testing.assert_array_equal(emd_steps(5), [4])
        assert len(emd_steps(0)) == 0

    def test_emd_curve_sampling(self, toy_trajectory, toy_stats):
        """Test EMD of a zero-error rollout and its sampled steps."""
        result = rollout(GroundTruthModel(toy_stats), toy_trajectory, 24)
        steps, values = emd_curve(result, every=5)
        np.testing.assert_array_equal(steps, [4, 9, 14, 19])
        np.testing.assert_allclose(values, 0.0, atol=1e-12)


class TestReport:
    """Test aggregation and tables."""

    @staticmethod
    def row(name: str, value: float) -> TrajectoryMetrics:
        return TrajectoryMetrics(
            name=name,
            emd=value,
            mse_acc_1=2 * value,
            mse_20=value,
            mse_20_subsampled=value,
            mse_400=value,
            mse_curve=np.full(4, value),
            emd_steps=np.array([1, 3]),
            emd_curve=np.full(2, value),
        )

    def test_aggregate(self):
        """Test mean, min and max per metric."""
        report = MetricReport(label="m", rows=[self.row("a", 1.0), self.row("b", 3.0)])
        agg = report.aggregate()
        assert agg["emd"] == {"mean": 2.0, "min": 1.0, "max": 3.0}
        assert agg["mse_acc_1"]["mean"] == 4.0
        summary = report.mse_curve_summary()
        np.testing.assert_array_equal(summary["mean"], np.full(4, 2.0))
        np.testing.assert_array_equal(summary["max"], np.full(4, 3.0))

    def test_aggregate_skips_nan(self):
        """Test that undefined values are left out of the aggregates."""
        short = replace(self.row("b", 3.0), mse_20=float("nan"))
        agg = MetricReport(label="m", rows=[self.row("a", 1.0), short]).aggregate()
        assert agg["mse_20"] == {"mean": 1.0, "min": 1.0, "max": 1.0}
        assert agg["mse_400"]["mean"] == 2.0

        only_short = MetricReport(label="m", rows=[short]).aggregate()
        assert all(np.isnan(v) for v in only_short["mse_20"].values())

    def test_report_table(self):
        """Test that the grid table lists every model."""
        reports = [
            MetricReport(label="1s", rows=[self.row("a", 1.0)]),
            MetricReport(label="zero", rows=[self.row("a", 0.5)]),
        ]
        table = report_table(reports)
        assert "+--" in table
        assert "1s" in table and "zero" in table
        assert "MSE 400" in table

    def test_evaluate_progress(self, make_toy_trajectory, toy_stats):
        """Test that evaluation reports progress per trajectory."""
        calls = []
        trajs = [make_toy_trajectory(seed=s) for s in range(2)]
        report = evaluate(
            GroundTruthModel(toy_stats), trajs, toy_stats, label="oracle",
            progress=lambda p, d, t: calls.append((d, t)),
        )
        assert [r.name for r in report.rows] == ["toy_0", "toy_1"]
        assert calls == [(1, 2), (2, 2)]

    def test_evaluate_empty(self, toy_stats):
        """Test that an empty test set is a data error."""
        with pytest.raises(DataError):
            evaluate(GroundTruthModel(toy_stats), [], toy_stats)


class TestNeighborStats:
    """Test neighbour-count statistics."""

    def test_counts_fluid_only(self):
        """Test histograms over fluid particles, ignoring obstacles."""
        line = np.array([[0.1, 0.5], [0.15, 0.5], [0.2, 0.5], [0.8, 0.5], [0.12, 0.5]])
        frames = np.broadcast_to(line, (7, 5, 2))
        types = np.array([0, 0, 0, 0, ParticleType.OBSTACLE], dtype=np.uint8)
        stats = neighbor_stats([Trajectory(frames=frames, types=types)], radius=0.06)
        assert stats.histogram.shape == (7, 3)
        np.testing.assert_array_equal(stats.histogram[0], [1, 2, 1])
        np.testing.assert_allclose(stats.mean_curve, 1.0)
        assert stats.plateau_drift(1, 6) == 0.0

    def test_truncates_to_shortest(self, make_toy_trajectory):
        """Test frame alignment across trajectories of different length."""
        stats = neighbor_stats(
            [make_toy_trajectory(n_frames=12), make_toy_trajectory(seed=1)], radius=0.05
        )
        assert len(stats.mean_curve) == 12
        assert np.all(stats.histogram.sum(axis=1) == 20)

    def test_plateau_drift(self, toy_trajectory):
        """Test the relative change of the mean curve and its range check."""
        stats = neighbor_stats([toy_trajectory], radius=0.1)
        stats.mean_curve = np.array([2.0, 2.5, 3.0])
        assert stats.plateau_drift(0, 2) == pytest.approx(0.5)
        with pytest.raises(ContractError):
            stats.plateau_drift(0, 3)

    def test_invalid(self, toy_trajectory):
        """Test rejected radii and empty input."""
        with pytest.raises(ContractError):
            neighbor_stats([toy_trajectory], radius=0.0)
        with pytest.raises(DataError):
            neighbor_stats([], radius=0.1)


class TestSelectCheckpoint:
    """Test validation-based checkpoint selection."""

    @pytest.fixture
    def checkpoints(self, tiny_model_config, toy_stats) -> list[Checkpoint]:
        return [
            Checkpoint(params=init_gns(tiny_model_config, rng=s), stats=toy_stats, step=10 * s)
            for s in (1, 2, 3)
        ]

    def test_lowest_score(self, checkpoints):
        """Test that the lowest score wins."""
        scores = {10: 3.0, 20: 1.0, 30: 2.0}
        best, got = select_checkpoint(checkpoints, scorer=lambda ck: scores[ck.step])
        assert best.step == 20
        assert got == [3.0, 1.0, 2.0]

    def test_tie_goes_to_later_step(self, checkpoints):
        """Test that equal scores pick the later checkpoint."""
        scores = {10: 2.0, 20: 1.0, 30: 1.0}
        best, _ = select_checkpoint(checkpoints, scorer=lambda ck: scores[ck.step])
        assert best.step == 30

    def test_default_scorer(self, checkpoints, toy_trajectory):
        """Test the full-horizon rollout scorer on validation data."""
        best, scores = select_checkpoint(checkpoints, validation=[toy_trajectory])
        assert len(scores) == 3
        assert all(np.isfinite(s) for s in scores)
        assert best.step == checkpoints[int(np.argmin(scores))].step

    def test_errors(self, checkpoints):
        """Test empty input and a missing validation set."""
        with pytest.raises(ContractError):
            select_checkpoint([], scorer=lambda ck: 0.0)
        with pytest.raises(ContractError):
            select_checkpoint(checkpoints)


class TestGeneralization:
    """Test rollouts on extended-domain scenes."""

    def test_walls_added_for_particle_models(self, make_toy_trajectory, toy_stats, temp_dir):
        """Test that boundary-particle models see wall particles and renders are written."""
        scene = make_toy_trajectory(seed=4)
        models = {
            "oracle": GroundTruthModel(toy_stats),
            "walls": GroundTruthModel(toy_stats, boundary=BOUNDARY_PARTICLES),
        }
        runs = generalization_experiment(
            models, [scene], emd_every=5, render_dir=temp_dir, render_every=10
        )
        assert [(r.model, r.scene) for r in runs] == [("oracle", "toy_4"), ("walls", "toy_4")]
        assert runs[0].result.source.n_particles == scene.n_particles
        assert runs[1].result.source.n_particles == scene.n_particles + 2 * (32 + 32)
        for run in runs:
            np.testing.assert_allclose(run.emd_values, 0.0, atol=1e-12)
            assert run.frames
            assert all(p.exists() and p.suffix == ".png" for p in run.frames)

    def test_step_context(self, toy_trajectory):
        """Test that the context exposes its source's types and bounds."""
        ctx = StepContext(source=toy_trajectory, frame=7)
        np.testing.assert_array_equal(ctx.types, toy_trajectory.types)
        np.testing.assert_array_equal(ctx.bounds, toy_trajectory.bounds)
