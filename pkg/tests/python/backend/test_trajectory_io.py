"""Tests for the trajectory_io module."""

import json
from pathlib import Path

import numpy as np
import pytest

from gnslab._errors import DataError, HeaderError
from gnslab.backend.dataset import DatasetManifest, add_boundary_particles, stats_for_trajectory
from gnslab.backend.stats import NormStats
from gnslab.backend.trajectory_io import (
    MANIFEST_NAME,
    TRAJ_HEADER_STRUCT,
    TRAJ_MAGIC,
    TrajectoryInspectResult,
    inspect_trajectory,
    load_dataset,
    read_manifest,
    read_trajectory,
    rescan_stats,
    write_manifest,
    write_trajectory,
)


def write_dataset(root: Path, trajectories) -> DatasetManifest:
    """Write members and a manifest whose stats are merged in member order."""
    files, stats = [], NormStats()
    for i, traj in enumerate(trajectories):
        name = f"traj_{i:05d}.gnst"
        write_trajectory(root / name, traj)
        stats.merge(stats_for_trajectory(traj.quantized()))
        files.append(name)
    manifest = DatasetManifest(
        root=root, files=files, stats=stats, boundary=trajectories[0].boundary, seed=9
    )
    write_manifest(manifest)
    return manifest


class TestHeaderStruct:
    """Test the trajectory header layout."""

    def test_header_struct_size(self):
        """Test the packed header size."""
        # magic(4) + version(1) + frames(4) + particles(4) + w(2) + h(2) + dt(8) + meta(4)
        assert TRAJ_HEADER_STRUCT.size == 29


class TestTrajectoryFiles:
    """Test writing and reading trajectory files."""

    def test_write_read(self, temp_dir, toy_trajectory):
        """Test that a read-back trajectory equals the float32-quantized original."""
        path = write_trajectory(temp_dir / "a.gnst", toy_trajectory)
        loaded = read_trajectory(path)
        np.testing.assert_array_equal(loaded.frames, toy_trajectory.quantized().frames)
        np.testing.assert_array_equal(loaded.types, toy_trajectory.types)
        assert loaded.domain == toy_trajectory.domain
        assert loaded.dt == toy_trajectory.dt
        assert loaded.name == toy_trajectory.name
        assert loaded.boundary == toy_trajectory.boundary

    def test_bad_magic(self, temp_dir, toy_trajectory):
        """Test that a wrong magic number is a header error."""
        path = write_trajectory(temp_dir / "a.gnst", toy_trajectory)
        data = bytearray(path.read_bytes())
        data[:4] = b"XXXX"
        path.write_bytes(bytes(data))
        with pytest.raises(HeaderError):
            read_trajectory(path)

    def test_truncated_payload(self, temp_dir, toy_trajectory):
        """Test that a short payload is a data error."""
        path = write_trajectory(temp_dir / "a.gnst", toy_trajectory)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DataError):
            read_trajectory(path)

    def test_missing_file(self, temp_dir):
        """Test that an absent file is a data error."""
        with pytest.raises(DataError):
            read_trajectory(temp_dir / "missing.gnst")


class TestInspectTrajectory:
    """Test non-raising inspection."""

    def test_valid_file(self, temp_dir, toy_trajectory):
        """Test inspection of a valid trajectory."""
        path = write_trajectory(temp_dir / "a.gnst", toy_trajectory)
        result = inspect_trajectory(path)
        assert isinstance(result, TrajectoryInspectResult)
        assert result.is_trajectory is True
        assert result.header_ok is True
        assert result.reason is None
        assert result.n_frames == 30
        assert result.n_particles == 12
        assert result.n_fluid == 10
        assert result.domain == (32, 32)
        np.testing.assert_allclose(result.scaled_bounds, [[0.1, 0.9], [0.1, 0.9]])

    def test_not_a_trajectory(self, temp_dir):
        """Test a file without the magic number."""
        path = temp_dir / "notes.txt"
        path.write_bytes(b"x" * 64)
        result = inspect_trajectory(path)
        assert result.is_trajectory is False
        assert result.reason == "Invalid magic number"

    def test_too_small(self, temp_dir):
        """Test a file shorter than the header."""
        path = temp_dir / "tiny.gnst"
        path.write_bytes(TRAJ_MAGIC)
        result = inspect_trajectory(path)
        assert result.header_ok is False
        assert "too small" in result.reason

    def test_directory(self, temp_dir):
        """Test that directories are not files."""
        assert inspect_trajectory(temp_dir).reason == "Not a file"

    def test_size_mismatch(self, temp_dir, toy_trajectory):
        """Test that a truncated file is recognised but not usable."""
        path = write_trajectory(temp_dir / "a.gnst", toy_trajectory)
        path.write_bytes(path.read_bytes()[:-4])
        result = inspect_trajectory(path)
        assert result.is_trajectory is True
        assert result.header_ok is False
        assert "mismatch" in result.reason


class TestManifest:
    """Test dataset manifests."""

    def test_write_read(self, temp_dir, make_toy_trajectory):
        """Test that a manifest reads back with its statistics."""
        manifest = write_dataset(temp_dir, [make_toy_trajectory(seed=s) for s in range(3)])
        loaded = read_manifest(temp_dir)
        assert loaded.files == manifest.files
        assert loaded.seed == 9
        assert loaded.domain == (32, 32)
        np.testing.assert_array_equal(loaded.stats.velocity.m2, manifest.stats.velocity.m2)
        data = json.loads((temp_dir / MANIFEST_NAME).read_text(encoding="utf-8"))
        np.testing.assert_allclose(data["scaling"]["bounds"], [[0.1, 0.9], [0.1, 0.9]])

    def test_rescan_equals_manifest(self, temp_dir, make_toy_trajectory):
        """Test that recomputed statistics equal the stored ones bit for bit."""
        write_dataset(temp_dir, [make_toy_trajectory(seed=s) for s in range(4)])
        manifest = read_manifest(temp_dir / MANIFEST_NAME)
        rescanned = rescan_stats(manifest)
        assert rescanned.count == manifest.stats.count
        np.testing.assert_array_equal(rescanned.velocity.mean, manifest.stats.velocity.mean)
        np.testing.assert_array_equal(rescanned.velocity.m2, manifest.stats.velocity.m2)
        np.testing.assert_array_equal(rescanned.acceleration.m2, manifest.stats.acceleration.m2)

    def test_load_dataset_in_order(self, temp_dir, make_toy_trajectory):
        """Test that members load in manifest order."""
        write_dataset(temp_dir, [make_toy_trajectory(seed=s) for s in (5, 6)])
        names = [t.name for t in load_dataset(read_manifest(temp_dir))]
        assert names == ["toy_5", "toy_6"]

    def test_boundary_mismatch(self, temp_dir, toy_trajectory):
        """Test that members must share the manifest's boundary representation."""
        manifest = write_dataset(temp_dir, [add_boundary_particles(toy_trajectory)])
        manifest.boundary = "distance"
        write_manifest(manifest)
        with pytest.raises(DataError):
            load_dataset(read_manifest(temp_dir))

    def test_missing_manifest(self, temp_dir):
        """Test that a directory without a manifest is a data error."""
        with pytest.raises(DataError):
            read_manifest(temp_dir)

    def test_malformed_manifest(self, temp_dir):
        """Test that missing fields are reported as data errors."""
        (temp_dir / MANIFEST_NAME).write_text('{"version": 1, "files": []}', encoding="utf-8")
        with pytest.raises(DataError):
            read_manifest(temp_dir)
