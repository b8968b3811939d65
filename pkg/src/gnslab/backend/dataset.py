"""Trajectories in scaled units: scaling, kinematics and boundary particles."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .._errors import ContractError, DataError
from .flip import ParticleType
from .stats import NormStats, accumulate_stats

BOUNDARY_DISTANCE = "distance"
BOUNDARY_PARTICLES = "particles"
BOUNDARY_MODES = (BOUNDARY_DISTANCE, BOUNDARY_PARTICLES)

# Velocity history length fed to the network, and the window it implies.
HISTORY = 5
WINDOW = HISTORY + 1

_X_RANGE = (0.1, 0.8)  # lower edge, span


def scaled_bounds(domain: tuple[int, int]) -> np.ndarray:
    """Scaled ``[[x_lo, x_hi], [y_lo, y_hi]]`` of a ``(W, H)`` grid domain.

    x always spans [0.1, 0.9]; y spans [0.1, 0.9 * H / W], so square domains
    land in [0.1, 0.9]^2 and a 32 x 64 domain reaches y = 1.8.
    """
    width, height = domain
    if width <= 0 or height <= 0:
        raise ContractError(f"domain sides must be positive: {domain}")
    x_lo, x_span = _X_RANGE
    y_hi = 0.9 * height / width
    return np.array([[x_lo, x_lo + x_span], [x_lo, y_hi]])


def _axis_maps(domain: tuple[int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    width, height = domain
    if width <= 0 or height <= 0:
        raise ContractError(f"domain sides must be positive: {domain}")
    x_lo, x_span = _X_RANGE
    lower = np.array([x_lo, x_lo])
    span = np.array([x_span, 0.9 * height / width - x_lo])
    extent = np.array([float(width), float(height)])
    return lower, span, extent


def scale_positions(p: np.ndarray, domain: tuple[int, int]) -> np.ndarray:
    """Map grid-unit positions ``[..., 2]`` into scaled units."""
    lower, span, extent = _axis_maps(domain)
    return lower + span * (np.asarray(p, dtype=np.float64) / extent)


def unscale_positions(p: np.ndarray, domain: tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`scale_positions`."""
    lower, span, extent = _axis_maps(domain)
    return (np.asarray(p, dtype=np.float64) - lower) / span * extent


@dataclass
class Trajectory:
    """A simulated particle sequence in scaled units.

    Attributes:
        frames: Positions ``[T, N, 2]``.
        types: Per-particle :class:`ParticleType` codes ``[N]``.
        dt: Physical time step in seconds (learned units use dt = 1).
        domain: Grid domain ``(W, H)`` the positions were scaled from.
        boundary: ``"distance"`` or ``"particles"`` boundary representation.
        scene_meta: Scene description echo (spec, seed, solid cells, ...).
        name: Identifier used in reports.
    """

    frames: np.ndarray
    types: np.ndarray
    dt: float = 0.05
    domain: tuple[int, int] = (32, 32)
    boundary: str = BOUNDARY_DISTANCE
    scene_meta: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.types = np.asarray(self.types, dtype=np.uint8)
        self.domain = (int(self.domain[0]), int(self.domain[1]))
        if self.frames.ndim != 3 or self.frames.shape[2] != 2:
            raise DataError(f"frames must have shape [T, N, 2], got {self.frames.shape}")
        if self.frames.shape[0] < WINDOW + 1:
            raise DataError(
                f"trajectory needs at least {WINDOW + 1} frames, got {self.frames.shape[0]}"
            )
        if self.types.shape != (self.frames.shape[1],):
            raise DataError(
                f"types has shape {self.types.shape}, expected ({self.frames.shape[1]},)"
            )
        if self.boundary not in BOUNDARY_MODES:
            raise DataError(f"unknown boundary representation: {self.boundary}")

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def n_particles(self) -> int:
        return int(self.frames.shape[1])

    @property
    def fluid(self) -> np.ndarray:
        return self.types == ParticleType.FLUID

    @property
    def bounds(self) -> np.ndarray:
        return scaled_bounds(self.domain)

    def contained(self, tolerance: float = 0.0) -> bool:
        """Whether every fluid position lies within the scaled bounds."""
        b = self.bounds
        pos = self.frames[:, self.fluid]
        return bool(
            np.all(pos >= b[:, 0] - tolerance) and np.all(pos <= b[:, 1] + tolerance)
        )

    def quantized(self) -> Trajectory:
        """Copy with positions rounded to the 32-bit storage precision."""
        return replace(self, frames=self.frames.astype(np.float32).astype(np.float64))


def finite_difference_kinematics(
    traj: Trajectory, t: int
) -> tuple[np.ndarray, np.ndarray]:
    """Velocity history and target acceleration at frame ``t``.

    Velocities are per-step displacements ``v[k] = p[k] - p[k-1]`` and the
    acceleration is ``a[t] = v[t+1] - v[t]``.

    Args:
        traj: Source trajectory.
        t: Current frame, ``5 <= t <= n_frames - 2``.

    Returns:
        (velocities ``[5, N, 2]`` for frames t-4..t, acceleration ``[N, 2]``).
    """
    if not HISTORY <= t <= traj.n_frames - 2:
        raise ContractError(
            f"frame {t} outside [{HISTORY}, {traj.n_frames - 2}] for "
            f"a {traj.n_frames}-frame trajectory"
        )
    window = traj.frames[t - HISTORY : t + 2]
    steps = np.diff(window, axis=0)
    return steps[:HISTORY], steps[HISTORY] - steps[HISTORY - 1]


def stats_for_trajectory(traj: Trajectory, stats: NormStats | None = None) -> NormStats:
    """Accumulate fluid-particle velocity and acceleration moments of ``traj``."""
    stats = stats if stats is not None else NormStats()
    fluid = traj.frames[:, traj.fluid]
    velocities = np.diff(fluid, axis=0)
    accelerations = np.diff(velocities, axis=0)
    return accumulate_stats(stats, velocities, accelerations)


def wall_points(domain: tuple[int, int], spacing: float) -> np.ndarray:
    """Grid-unit points along the four walls, each corner counted once.

    Walks the boundary counter-clockwise from the origin with half-open sides,
    so a W x H domain with spacing 1 yields ``2 * (W + H)`` points.
    """
    if spacing <= 0.0:
        raise ContractError(f"spacing must be positive: {spacing}")
    width, height = float(domain[0]), float(domain[1])
    nx = max(int(round(width / spacing)), 1)
    ny = max(int(round(height / spacing)), 1)
    sx = np.arange(nx) * (width / nx)
    sy = np.arange(ny) * (height / ny)
    bottom = np.column_stack([sx, np.zeros(nx)])
    right = np.column_stack([np.full(ny, width), sy])
    top = np.column_stack([width - sx, np.full(nx, height)])
    left = np.column_stack([np.zeros(ny), height - sy])
    return np.concatenate([bottom, right, top, left])


def add_boundary_particles(traj: Trajectory, spacing: float = 1.0) -> Trajectory:
    """Append static obstacle particles along the domain walls.

    Scene obstacles are already particle-represented, so only the walls are
    added. Existing particles keep their indices and positions.

    Args:
        traj: Source trajectory.
        spacing: Distance between wall particles, in grid units.

    Returns:
        Trajectory: A copy tagged with the ``"particles"`` boundary representation.
    """
    walls = scale_positions(wall_points(traj.domain, spacing), traj.domain)
    static = np.broadcast_to(walls, (traj.n_frames, *walls.shape))
    frames = np.concatenate([traj.frames, static], axis=1)
    types = np.concatenate(
        [traj.types, np.full(len(walls), ParticleType.OBSTACLE, dtype=np.uint8)]
    )
    meta = dict(traj.scene_meta)
    meta["wall_particles"] = int(len(walls))
    meta["wall_spacing"] = float(spacing)
    return replace(
        traj, frames=frames, types=types, boundary=BOUNDARY_PARTICLES, scene_meta=meta
    )


@dataclass
class DatasetManifest:
    """A dataset directory's member list and statistics.

    Attributes:
        root: Directory the member paths are relative to.
        files: Trajectory file names, in generation order.
        stats: Statistics accumulated over exactly ``files``.
        domain: Grid domain of every member.
        boundary: Boundary representation of every member.
        seed: Base seed of the generation run.
        scene_spec: Scene spec echo.
        version: Manifest format version.
    """

    root: Path
    files: list[str]
    stats: NormStats
    domain: tuple[int, int] = (32, 32)
    boundary: str = BOUNDARY_DISTANCE
    seed: int = 0
    scene_spec: dict = field(default_factory=dict)
    version: int = 1

    @property
    def paths(self) -> list[Path]:
        return [self.root / name for name in self.files]
