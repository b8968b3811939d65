"""Tests for the evaluation frontend APIs."""

import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from gnslab._errors import ConfigError
from gnslab.backend.checkpoint import Checkpoint, save_checkpoint
from gnslab.backend.dataset import BOUNDARY_PARTICLES
from gnslab.backend.evaluation import (
    METRICS,
    GroundTruthModel,
    MetricReport,
    TrajectoryMetrics,
    ZeroAccelerationModel,
)
from gnslab.backend.gns import init_gns
from gnslab.backend.settings import RunConfig
from gnslab.frontend import (
    EvalJob,
    EvalOptions,
    GeneralizeJob,
    GeneralizeOptions,
    NeighborJob,
    NeighborOptions,
    plan_evaluation,
    plan_generalization,
    plan_neighbor_analysis,
)
from gnslab.frontend.eval_api import adapt_trajectories, resolve_models, write_report_csv


def read_rows(path) -> list[list[str]]:
    with path.open(newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


@pytest.fixture
def checkpoint_path(temp_dir, tiny_model_config, toy_stats):
    """A saved 1sn checkpoint of an untrained tiny model."""
    ck = Checkpoint(params=init_gns(tiny_model_config, rng=3), stats=toy_stats, step=5,
                    variant="1sn")
    return save_checkpoint(temp_dir / "ckpts" / "a.gnsc", ck)


@pytest.fixture
def test_set(temp_dir, write_toy_dataset):
    return write_toy_dataset(temp_dir / "test", seeds=(4, 5))


class TestResolveModels:
    """Test model argument resolution."""

    def test_builtins_and_checkpoints(self, checkpoint_path):
        """Test labels of baselines and checkpoint files."""
        sources, reason = resolve_models(["oracle", "zero", str(checkpoint_path)])
        assert reason is None
        assert [s.label for s in sources] == ["oracle", "zero", "1sn"]
        assert sources[0].builtin == "oracle"
        assert sources[2].path == checkpoint_path

    def test_same_variant_twice(self, checkpoint_path):
        """Test that a second checkpoint of one variant is labelled by its stem."""
        other = checkpoint_path.with_name("b.gnsc")
        other.write_bytes(checkpoint_path.read_bytes())
        sources, reason = resolve_models([str(checkpoint_path), str(other)])
        assert reason is None
        assert [s.label for s in sources] == ["1sn", "1sn-b"]

    def test_problems(self, temp_dir):
        """Test empty lists, repeats and unusable files."""
        assert resolve_models([])[1] == "No checkpoints given"
        assert "given twice" in resolve_models(["zero", "zero"])[1]
        assert "Unusable checkpoint" in resolve_models([str(temp_dir / "none.gnsc")])[1]


class TestAdaptTrajectories:
    """Test boundary representation matching."""

    def test_walls_for_particle_models(self, toy_trajectory, toy_stats):
        """Test that particle-boundary models get wall particles added."""
        model = ZeroAccelerationModel(toy_stats, boundary=BOUNDARY_PARTICLES)
        (out,) = adapt_trajectories([toy_trajectory], model, wall_spacing=2.0)
        assert out.boundary == BOUNDARY_PARTICLES
        assert out.n_particles == toy_trajectory.n_particles + 2 * (16 + 16)

    def test_distance_model_on_walled_data(self, toy_trajectory, toy_stats):
        """Test that distance models refuse particle-boundary data."""
        walled = adapt_trajectories(
            [toy_trajectory], GroundTruthModel(toy_stats, BOUNDARY_PARTICLES), 1.0
        )
        with pytest.raises(ConfigError):
            adapt_trajectories(walled, GroundTruthModel(toy_stats), 1.0)


class TestReportCsv:
    """Test per-trajectory report files."""

    def test_footer_rows(self, temp_dir):
        """Test trajectory rows followed by mean, min and max."""
        rows = [
            TrajectoryMetrics(
                name=name, emd=v, mse_acc_1=v, mse_20=v, mse_20_subsampled=v, mse_400=v,
                mse_curve=np.zeros(1), emd_steps=np.zeros(1), emd_curve=np.zeros(1),
            )
            for name, v in (("a", 1.0), ("b", 3.0))
        ]
        path = write_report_csv(temp_dir / "m.csv", MetricReport(label="x", rows=rows))
        table = read_rows(path)
        assert table[0] == ["trajectory", *METRICS]
        assert [r[0] for r in table[1:]] == ["a", "b", "mean", "min", "max"]
        assert [float(r[1]) for r in table[3:]] == [2.0, 1.0, 3.0]


class TestEvalJob:
    """Test evaluation runs."""

    def test_plan_refusals(self, temp_dir, test_set):
        """Test unreadable test sets and non-empty outputs."""
        assert plan_evaluation(["zero"], temp_dir / "none", temp_dir / "out").can_run is False
        (temp_dir / "out").mkdir()
        (temp_dir / "out" / "x").write_text("x")
        plan = plan_evaluation(["zero"], test_set, temp_dir / "out")
        assert plan.can_run is False
        assert "--force" in plan.reason_if_unavailable

    def test_refused_job(self, temp_dir):
        """Test that a refused plan fails with exit code 2."""
        result = EvalJob.from_checkpoints([], temp_dir / "none", temp_dir / "out").run()
        assert result.ok is False
        assert result.exit_code == 2

    def test_baselines(self, temp_dir, test_set):
        """Test reports of the oracle and the zero-acceleration baseline."""
        out = temp_dir / "out"
        job = EvalJob.from_checkpoints(["oracle", "zero"], test_set, out, EvalOptions(render=False))
        result = job.run()
        assert result.ok, result.error

        oracle = read_rows(out / "oracle" / "metrics.csv")
        assert [r[0] for r in oracle[1:]] == ["toy_4", "toy_5", "mean", "min", "max"]
        assert all(float(v) == pytest.approx(0.0, abs=1e-12) for r in oracle[1:] for v in r[1:])

        report = read_rows(out / "report.csv")
        assert [r[0] for r in report[1:]] == ["oracle", "zero"]
        assert float(report[2][1 + METRICS.index("mse_400")]) > 0.0

        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert set(summary["models"]) == {"oracle", "zero"}
        assert set(summary["models"]["zero"]["trajectories"]) == {"toy_4", "toy_5"}
        assert (out / "zero" / "mse_curve.csv").exists()
        assert len(read_rows(out / "zero" / "emd_curve.csv")) == 1 + 2
        assert not (out / "mse_curves.png").exists()

    def test_checkpoint_with_renders(self, temp_dir, test_set, checkpoint_path):
        """Test a learned model with frame renders and curve plots."""
        out = temp_dir / "out"
        config = RunConfig()
        config = replace(config, eval=replace(config.eval, render_every=12))
        options = EvalOptions(config=config)
        result = EvalJob.from_checkpoints([str(checkpoint_path)], test_set, out, options).run()
        assert result.ok, result.error
        assert (out / "mse_curves.png").exists()
        assert (out / "emd_curves.png").exists()
        frames = sorted((out / "1sn" / "renders" / "toy_4").glob("*.png"))
        assert [p.name for p in frames] == ["frame_0000.png", "frame_0012.png", "frame_0023.png"]


class TestNeighborJob:
    """Test neighbour analyses."""

    def test_run(self, temp_dir, test_set):
        """Test the histogram, mean curve and summary files."""
        out = temp_dir / "nb"
        job = NeighborJob.from_dataset(test_set, out, NeighborOptions(radius=0.05, render=False))
        result = job.run()
        assert result.ok, result.error
        hist = read_rows(out / "neighbor_histogram.csv")
        assert len(hist) == 1 + 30
        assert all(sum(int(c) for c in row[1:]) == 20 for row in hist[1:])
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["plateau_start"] == 30 // 4
        assert summary["frames"] == 30
        assert summary["plateau_drift"] == pytest.approx(job.drift)

    def test_refusals(self, temp_dir, test_set):
        """Test invalid radii and missing datasets."""
        bad_radius = NeighborOptions(radius=0.0)
        assert plan_neighbor_analysis(test_set, temp_dir / "nb", bad_radius).can_run is False
        assert plan_neighbor_analysis(temp_dir / "none", temp_dir / "nb").can_run is False


class TestGeneralizeJob:
    """Test domain-generalization runs."""

    def test_plan_refusals(self, temp_dir):
        """Test unknown scene sets."""
        plan = plan_generalization(["oracle"], temp_dir / "g", GeneralizeOptions(scene_set="x"))
        assert plan.can_run is False
        assert "Unknown scene set" in plan.reason_if_unavailable

    @pytest.mark.slow
    def test_oracle_on_tall_scenes(self, temp_dir):
        """Test that the oracle stays contained and scores zero EMD."""
        config = RunConfig()
        config = replace(config, scene=replace(config.scene, steps=12))
        options = GeneralizeOptions(config=config, render=False)
        out = temp_dir / "g"
        result = GeneralizeJob.from_checkpoints(["oracle"], out, options).run()
        assert result.ok, result.error
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert set(summary) == {"oracle/tall_falling_block", "oracle/tall_dam_break"}
        for entry in summary.values():
            assert entry["contained"] is True
            assert entry["mean_emd"] == pytest.approx(0.0, abs=1e-12)
            assert entry["steps"] == 12 + 1 - 6
