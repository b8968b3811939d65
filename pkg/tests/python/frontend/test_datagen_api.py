"""Tests for the data-generation frontend API."""

from dataclasses import replace

import pytest

from gnslab._errors import ConfigError
from gnslab.backend.dataset import BOUNDARY_PARTICLES
from gnslab.backend.settings import profile_config
from gnslab.backend.training import TrainVariant
from gnslab.backend.trajectory_io import load_dataset, read_manifest, rescan_stats
from gnslab.frontend import DataGenJob, DataGenOptions, plan_data_generation
from gnslab.frontend.datagen_api import SEED_STRIDE, member_file


@pytest.fixture
def tiny_options(tiny_scene_spec) -> DataGenOptions:
    return DataGenOptions(count=2, seed=0, spec=tiny_scene_spec)


class TestPlanDataGeneration:
    """Test data-generation planning."""

    def test_plan_random_scenes(self, temp_dir, tiny_options):
        """Test member files and seeds of a random-scene run."""
        plan = plan_data_generation(temp_dir / "data", replace(tiny_options, seed=3))
        assert plan.can_run is True
        assert plan.reason_if_unavailable is None
        assert plan.files == ["traj_00000.gnst", "traj_00001.gnst"]
        assert plan.member_seeds == [3 * SEED_STRIDE, 3 * SEED_STRIDE + 1]
        assert plan.manifest_path == temp_dir / "data" / "manifest.json"

    def test_plan_preset(self, temp_dir):
        """Test that a preset set fixes the member count."""
        plan = plan_data_generation(temp_dir / "data", DataGenOptions(preset="tall"))
        assert plan.can_run is True
        assert len(plan.files) == 2
        assert plan.member_seeds == []

    @pytest.mark.parametrize(
        ("options", "reason"),
        [
            (DataGenOptions(boundary="walls"), "Unknown boundary"),
            (DataGenOptions(jobs=0), "jobs"),
            (DataGenOptions(count=0), "Nothing to generate"),
            (DataGenOptions(preset="harbour"), "Unknown scene set"),
        ],
    )
    def test_refusals(self, temp_dir, options, reason):
        """Test options that cannot run."""
        plan = plan_data_generation(temp_dir / "data", options)
        assert plan.can_run is False
        assert reason in plan.reason_if_unavailable

    def test_non_empty_output(self, temp_dir, tiny_options):
        """Test that existing content needs force."""
        (temp_dir / "old.txt").write_text("x")
        assert plan_data_generation(temp_dir, tiny_options).can_run is False
        assert plan_data_generation(temp_dir, replace(tiny_options, force=True)).can_run is True

    def test_output_is_file(self, temp_dir, tiny_options):
        """Test that a file in place of the directory is refused."""
        path = temp_dir / "data"
        path.write_text("x")
        plan = plan_data_generation(path, tiny_options)
        assert plan.can_run is False
        assert "not a directory" in plan.reason_if_unavailable

    def test_member_file(self):
        """Test member naming."""
        assert member_file(12) == "traj_00012.gnst"


class TestFromRunConfig:
    """Test options derived from a run configuration."""

    def test_splits(self):
        """Test counts and seed offsets per split."""
        config = replace(profile_config("desk"), seed=10)
        train = DataGenOptions.from_run_config(config, "train")
        validation = DataGenOptions.from_run_config(config, "validation")
        test = DataGenOptions.from_run_config(config, "test", count=5)
        assert (train.count, train.seed) == (20, 10)
        assert (validation.count, validation.seed) == (2, 11)
        assert (test.count, test.seed) == (5, 12)
        assert train.spec == config.scene

    def test_variant_picks_boundary(self):
        """Test that the bounded variant writes wall particles."""
        config = replace(profile_config("desk"), variant=TrainVariant.ONE_STEP_NOISE_BOUNDED)
        assert DataGenOptions.from_run_config(config).boundary == BOUNDARY_PARTICLES

    def test_unknown_split(self):
        """Test that unknown splits are rejected."""
        with pytest.raises(ConfigError):
            DataGenOptions.from_run_config(profile_config("desk"), "holdout")


class TestDataGenJob:
    """Test dataset generation."""

    def test_refused_plan(self, temp_dir):
        """Test that an unavailable plan fails with a config error."""
        result = DataGenJob.from_options(temp_dir / "d", DataGenOptions(count=0)).run()
        assert result.ok is False
        assert isinstance(result.error, ConfigError)
        assert result.exit_code == 2

    def test_generates_dataset(self, temp_dir, tiny_options):
        """Test files, manifest and statistics of a small run."""
        calls = []
        result = DataGenJob.from_options(temp_dir / "data", tiny_options).run(
            progress=lambda p, d, t: calls.append((d, t))
        )
        assert result.ok, result.error
        assert result.exit_code == 0
        assert [p.name for p in result.outputs] == [
            "traj_00000.gnst",
            "traj_00001.gnst",
            "manifest.json",
        ]
        assert calls == [(0, 2), (1, 2), (2, 2)]

        manifest = read_manifest(temp_dir / "data")
        assert manifest.domain == (8, 8)
        assert manifest.scene_spec["preset"] is None
        assert rescan_stats(manifest).to_dict() == manifest.stats.to_dict()

        trajectories = load_dataset(manifest)
        assert [t.name for t in trajectories] == ["seed_0", "seed_1"]
        assert all(t.n_frames == tiny_options.spec.steps + 1 for t in trajectories)

    def test_deterministic(self, temp_dir, tiny_options):
        """Test that two runs write identical files."""
        for name in ("a", "b"):
            assert DataGenJob.from_options(temp_dir / name, tiny_options).run().ok
        for member in ("traj_00000.gnst", "traj_00001.gnst", "manifest.json"):
            a = (temp_dir / "a" / member).read_bytes()
            b = (temp_dir / "b" / member).read_bytes()
            assert a == b

    def test_wall_particles(self, temp_dir, tiny_options):
        """Test the particle boundary representation."""
        options = replace(tiny_options, count=1, boundary=BOUNDARY_PARTICLES)
        assert DataGenJob.from_options(temp_dir / "data", options).run().ok
        manifest = read_manifest(temp_dir / "data")
        (traj,) = load_dataset(manifest)
        assert manifest.boundary == BOUNDARY_PARTICLES
        assert traj.boundary == BOUNDARY_PARTICLES
        assert traj.scene_meta["wall_particles"] == 2 * (8 + 8)

    @pytest.mark.slow
    def test_parallel_matches_serial(self, temp_dir, tiny_options):
        """Test that worker processes do not change the result."""
        assert DataGenJob.from_options(temp_dir / "serial", tiny_options).run().ok
        parallel = replace(tiny_options, jobs=2)
        assert DataGenJob.from_options(temp_dir / "parallel", parallel).run().ok
        serial_manifest = (temp_dir / "serial" / "manifest.json").read_bytes()
        assert (temp_dir / "parallel" / "manifest.json").read_bytes() == serial_manifest

    @pytest.mark.slow
    def test_preset_set(self, temp_dir, tiny_scene_spec):
        """Test a hand-designed scene set on the tall domain."""
        options = DataGenOptions(preset="tall", spec=replace(tiny_scene_spec, steps=6))
        assert DataGenJob.from_options(temp_dir / "tall", options).run().ok
        manifest = read_manifest(temp_dir / "tall")
        assert manifest.domain == (32, 64)
        assert manifest.scene_spec["preset"] == "tall"
        names = [t.name for t in load_dataset(manifest)]
        assert names == ["tall_falling_block", "tall_dam_break"]
