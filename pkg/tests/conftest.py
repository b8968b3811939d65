"""Pytest configuration and shared fixtures for gnslab tests."""

import sys
import tempfile
from collections.abc import Callable
from pathlib import Path
from typing import Generator

import numpy as np
import pytest

# Ensure the src directory is in the path for imports
# This helps when the package isn't installed in development mode
src_path = Path(__file__).parent.parent / "src"
if str(src_path) not in sys.path:
    sys.path.insert(0, str(src_path))

from gnslab.backend.dataset import (  # noqa: E402
    BOUNDARY_PARTICLES,
    DatasetManifest,
    Trajectory,
    add_boundary_particles,
    stats_for_trajectory,
)
from gnslab.backend.flip import ParticleType  # noqa: E402
from gnslab.backend.gns import GnsConfig  # noqa: E402
from gnslab.backend.scenes import SceneSpec  # noqa: E402
from gnslab.backend.stats import NormStats  # noqa: E402
from gnslab.backend.trajectory_io import write_manifest, write_trajectory  # noqa: E402


def _toy_trajectory(
    seed: int = 0, n_frames: int = 30, n_fluid: int = 10, n_obstacle: int = 2
) -> Trajectory:
    rng = np.random.default_rng(seed)
    start = rng.uniform(0.35, 0.65, size=(n_fluid, 2))
    velocity = rng.normal(0.0, 1e-3, size=(n_fluid, 2))
    accel = rng.normal(0.0, 2e-4, size=(n_frames - 1, n_fluid, 2))
    accel[:, :, 1] -= 1e-4
    steps = velocity + np.cumsum(accel, axis=0)
    fluid = np.concatenate([start[None], start + np.cumsum(steps, axis=0)])

    obstacles = np.broadcast_to(
        rng.uniform(0.3, 0.7, size=(n_obstacle, 2)), (n_frames, n_obstacle, 2)
    )
    types = np.concatenate(
        [
            np.full(n_fluid, ParticleType.FLUID, dtype=np.uint8),
            np.full(n_obstacle, ParticleType.OBSTACLE, dtype=np.uint8),
        ]
    )
    return Trajectory(
        frames=np.concatenate([fluid, obstacles], axis=1),
        types=types,
        domain=(32, 32),
        name=f"toy_{seed}",
    )


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for test files.

    Yields:
        Path to the temporary directory.
    """
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def make_toy_trajectory() -> Callable[..., Trajectory]:
    """Factory for small synthetic trajectories with jittered ballistic fluid.

    Returns:
        Callable taking ``seed``, ``n_frames``, ``n_fluid`` and ``n_obstacle``.
    """
    return _toy_trajectory


@pytest.fixture
def toy_trajectory() -> Trajectory:
    """A 30-frame trajectory with 10 fluid and 2 obstacle particles.

    Returns:
        The trajectory, in scaled units on the standard domain.
    """
    return _toy_trajectory(seed=0)


@pytest.fixture
def toy_stats(toy_trajectory: Trajectory) -> NormStats:
    """Normalization statistics of the toy trajectory.

    Args:
        toy_trajectory: Toy trajectory fixture.

    Returns:
        Statistics with non-degenerate standard deviations.
    """
    return stats_for_trajectory(toy_trajectory)


@pytest.fixture
def tiny_model_config() -> GnsConfig:
    """A GNS small enough for gradient checks and quick training loops.

    Returns:
        The model configuration.
    """
    return GnsConfig(
        latent_size=8,
        hidden_size=8,
        mlp_hidden_layers=1,
        message_passing_steps=2,
        connectivity_radius=0.1,
        embedding_size=4,
    )


@pytest.fixture
def tiny_scene_spec() -> SceneSpec:
    """A scene distribution on an 8 x 8 grid with short trajectories.

    Returns:
        The scene spec: one small block, at most one obstacle, 8 solver steps.
    """
    return SceneSpec(
        pool_probability=0.0,
        block_size=(2, 3),
        multi_block_probability=0.0,
        obstacle_probability=0.5,
        obstacle_count=(1, 1),
        obstacle_length=(2.0, 3.0),
        initial_velocity_probability=0.0,
        domain=(8, 8),
        max_particles=200,
        steps=8,
    )


@pytest.fixture
def write_toy_dataset(make_toy_trajectory) -> Callable[..., Path]:
    """Factory writing toy trajectories and their manifest to a directory.

    Returns:
        Callable taking ``root``, ``seeds``, ``boundary`` and ``n_frames``;
        returns ``root``.
    """

    def write(
        root: Path,
        seeds: tuple[int, ...] = (0, 1),
        boundary: str = "distance",
        n_frames: int = 30,
    ) -> Path:
        stats = NormStats()
        files: list[str] = []
        for seed in seeds:
            traj = make_toy_trajectory(seed=seed, n_frames=n_frames)
            if boundary == BOUNDARY_PARTICLES:
                traj = add_boundary_particles(traj)
            name = f"traj_{seed:05d}.gnst"
            write_trajectory(root / name, traj)
            stats.merge(stats_for_trajectory(traj.quantized()))
            files.append(name)
        write_manifest(DatasetManifest(root=root, files=files, stats=stats, boundary=boundary))
        return root

    return write
