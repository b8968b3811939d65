"""Forward 2D FLIP fluid solver on a staggered (MAC) grid.

Grid units throughout: cell size 1, domain ``[0, nx] x [0, ny]``. Horizontal
velocities ``u[i, j]`` live at ``(i, j + 0.5)``, vertical velocities ``v[i, j]``
at ``(i + 0.5, j)``, pressure at cell centres.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, cg

from .._errors import ConfigError, PressureSolveError, SimulationDivergedError

# Distance kept between particles and the domain walls.
WALL_MARGIN = 1e-3


class CellFlag(IntEnum):
    EMPTY = 0
    FLUID = 1
    SOLID = 2


class ParticleType(IntEnum):
    FLUID = 0
    OBSTACLE = 1


@dataclass(frozen=True)
class SimConfig:
    """Solver constants.

    Attributes:
        gravity: Gravity in grid units / s^2.
        flip_blend: Weight of the FLIP update against the PIC update, in [0, 1].
        pressure_tolerance: Largest allowed per-cell divergence after projection.
        max_pressure_iterations: Conjugate gradient iteration cap.
        particles_per_cell: Particles seeded per fluid cell (a perfect square).
        jitter: Uniform jitter amplitude of seeded particles, in cells.
        extrapolation_sweeps: Layers of grid velocity extrapolated past the fluid.
    """

    gravity: tuple[float, float] = (0.0, -9.81)
    flip_blend: float = 0.97
    pressure_tolerance: float = 1e-4
    max_pressure_iterations: int = 1000
    particles_per_cell: int = 4
    jitter: float = 0.05
    extrapolation_sweeps: int = 2

    def __post_init__(self) -> None:
        if not 0.0 <= self.flip_blend <= 1.0:
            raise ConfigError(f"flip_blend must lie in [0, 1]: {self.flip_blend}")
        if self.pressure_tolerance <= 0.0:
            raise ConfigError("pressure_tolerance must be positive")
        side = int(round(np.sqrt(self.particles_per_cell)))
        if self.particles_per_cell < 1 or side * side != self.particles_per_cell:
            raise ConfigError(
                f"particles_per_cell must be a perfect square: {self.particles_per_cell}"
            )
        if not 0.0 <= self.jitter < 0.5 / side:
            raise ConfigError(f"jitter must lie in [0, {0.5 / side}): {self.jitter}")


@dataclass
class MacGrid:
    """Staggered velocity grid with cell flags and the last pressure solve."""

    flags: np.ndarray
    u: np.ndarray
    v: np.ndarray
    pressure: np.ndarray

    @classmethod
    def empty(cls, nx: int, ny: int, solid: np.ndarray | None = None) -> MacGrid:
        """A zero-velocity grid whose only non-empty cells are ``solid``."""
        flags = np.full((nx, ny), CellFlag.EMPTY, dtype=np.int8)
        if solid is not None:
            flags[solid] = CellFlag.SOLID
        return cls(
            flags=flags,
            u=np.zeros((nx + 1, ny)),
            v=np.zeros((nx, ny + 1)),
            pressure=np.zeros((nx, ny)),
        )

    @property
    def resolution(self) -> tuple[int, int]:
        return int(self.flags.shape[0]), int(self.flags.shape[1])

    @property
    def solid(self) -> np.ndarray:
        return self.flags == CellFlag.SOLID

    def copy(self) -> MacGrid:
        return MacGrid(
            flags=self.flags.copy(),
            u=self.u.copy(),
            v=self.v.copy(),
            pressure=self.pressure.copy(),
        )

    def divergence(self) -> np.ndarray:
        """Per-cell velocity divergence (unit cell size)."""
        return (self.u[1:, :] - self.u[:-1, :]) + (self.v[:, 1:] - self.v[:, :-1])

    def max_fluid_divergence(self) -> float:
        fluid = self.flags == CellFlag.FLUID
        if not fluid.any():
            return 0.0
        return float(np.abs(self.divergence()[fluid]).max())


@dataclass
class ParticleState:
    """Particles of one frame, in grid units."""

    positions: np.ndarray
    velocities: np.ndarray
    types: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.velocities = np.asarray(self.velocities, dtype=np.float64).reshape(-1, 2)
        if self.types.size == 0 and len(self.positions):
            self.types = np.full(len(self.positions), ParticleType.FLUID, dtype=np.uint8)
        self.types = np.asarray(self.types, dtype=np.uint8)

    @property
    def count(self) -> int:
        return len(self.positions)

    @property
    def fluid(self) -> np.ndarray:
        return self.types == ParticleType.FLUID

    def copy(self) -> ParticleState:
        return ParticleState(
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            types=self.types.copy(),
        )


# Sample-point offsets of the two face families.
_U_OFFSET = (0.0, 0.5)
_V_OFFSET = (0.5, 0.0)


def _bilinear_stencil(
    positions: np.ndarray, offset: tuple[float, float], shape: tuple[int, int]
):
    """Yield (i, j, weight) for the four nodes around each position."""
    fx = np.clip(positions[:, 0] - offset[0], 0.0, shape[0] - 1.0)
    fy = np.clip(positions[:, 1] - offset[1], 0.0, shape[1] - 1.0)
    i0 = np.minimum(np.floor(fx).astype(np.int64), max(shape[0] - 2, 0))
    j0 = np.minimum(np.floor(fy).astype(np.int64), max(shape[1] - 2, 0))
    tx = fx - i0
    ty = fy - j0
    i1 = np.minimum(i0 + 1, shape[0] - 1)
    j1 = np.minimum(j0 + 1, shape[1] - 1)
    yield i0, j0, (1.0 - tx) * (1.0 - ty)
    yield i1, j0, tx * (1.0 - ty)
    yield i0, j1, (1.0 - tx) * ty
    yield i1, j1, tx * ty


def _splat(
    positions: np.ndarray,
    values: np.ndarray,
    offset: tuple[float, float],
    shape: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray]:
    accum = np.zeros(shape)
    weight = np.zeros(shape)
    for i, j, w in _bilinear_stencil(positions, offset, shape):
        np.add.at(accum, (i, j), w * values)
        np.add.at(weight, (i, j), w)
    known = weight > 0.0
    field_ = np.where(known, accum / np.where(known, weight, 1.0), 0.0)
    return field_, known


def _sample(field_: np.ndarray, positions: np.ndarray, offset: tuple[float, float]):
    out = np.zeros(len(positions))
    for i, j, w in _bilinear_stencil(positions, offset, field_.shape):
        out += w * field_[i, j]
    return out


def _extrapolate(field_: np.ndarray, known: np.ndarray, sweeps: int) -> np.ndarray:
    """Fill unknown faces with the mean of known 4-neighbours, layer by layer."""
    field_ = field_.copy()
    known = known.copy()
    for _ in range(sweeps):
        total = np.zeros_like(field_)
        count = np.zeros_like(field_)
        padded_f = np.pad(np.where(known, field_, 0.0), 1)
        padded_k = np.pad(known.astype(np.float64), 1)
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            sl = (
                slice(1 + di, padded_f.shape[0] - 1 + di),
                slice(1 + dj, padded_f.shape[1] - 1 + dj),
            )
            total += padded_f[sl]
            count += padded_k[sl]
        grow = ~known & (count > 0)
        if not grow.any():
            break
        field_[grow] = total[grow] / count[grow]
        known |= grow
    return field_


def _enforce_boundaries(grid: MacGrid) -> None:
    solid = grid.solid
    grid.u[0, :] = 0.0
    grid.u[-1, :] = 0.0
    grid.v[:, 0] = 0.0
    grid.v[:, -1] = 0.0
    blocked_u = solid[:-1, :] | solid[1:, :]
    grid.u[1:-1, :][blocked_u] = 0.0
    blocked_v = solid[:, :-1] | solid[:, 1:]
    grid.v[:, 1:-1][blocked_v] = 0.0


def assemble_pressure_system(grid: MacGrid) -> tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
    """Build the 5-point Poisson system over fluid cells.

    Solid cells and the domain walls are Neumann boundaries, empty cells are
    Dirichlet ``p = 0``. Solving ``A p = b`` and subtracting the pressure
    gradient leaves every fluid cell divergence free.

    Returns:
        (A, b, cells): the SPD matrix, right-hand side, and the ``(n, 2)`` grid
        indices of the unknowns in row order.
    """
    nx, ny = grid.resolution
    fluid = grid.flags == CellFlag.FLUID
    cells = np.argwhere(fluid)
    index = np.full((nx, ny), -1, dtype=np.int64)
    index[fluid] = np.arange(len(cells))

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    diag = np.zeros(len(cells))
    ci, cj = cells[:, 0], cells[:, 1]
    for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        ni, nj = ci + di, cj + dj
        inside = (ni >= 0) & (ni < nx) & (nj >= 0) & (nj < ny)
        ni_c, nj_c = np.clip(ni, 0, nx - 1), np.clip(nj, 0, ny - 1)
        open_ = inside & (grid.flags[ni_c, nj_c] != CellFlag.SOLID)
        diag += open_
        coupled = open_ & (grid.flags[ni_c, nj_c] == CellFlag.FLUID)
        rows.append(np.flatnonzero(coupled))
        cols.append(index[ni_c[coupled], nj_c[coupled]])
        vals.append(-np.ones(int(coupled.sum())))

    rows.append(np.arange(len(cells)))
    cols.append(np.arange(len(cells)))
    vals.append(diag)
    a = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(cells), len(cells)),
    )
    b = -grid.divergence()[fluid]
    return a, b, cells


def _apply_pressure_gradient(grid: MacGrid) -> None:
    p = np.where(grid.flags == CellFlag.FLUID, grid.pressure, 0.0)
    open_ = grid.flags != CellFlag.SOLID
    fluid = grid.flags == CellFlag.FLUID

    face_u = open_[:-1, :] & open_[1:, :] & (fluid[:-1, :] | fluid[1:, :])
    grid.u[1:-1, :] -= np.where(face_u, p[1:, :] - p[:-1, :], 0.0)
    face_v = open_[:, :-1] & open_[:, 1:] & (fluid[:, :-1] | fluid[:, 1:])
    grid.v[:, 1:-1] -= np.where(face_v, p[:, 1:] - p[:, :-1], 0.0)


def pressure_project(grid: MacGrid, cfg: SimConfig | None = None) -> MacGrid:
    """Make the velocity field divergence free over fluid cells.

    Solves the Poisson system with Jacobi-preconditioned conjugate gradient and
    subtracts the pressure gradient.

    Args:
        grid: Grid with transferred velocities, gravity applied and boundaries
            enforced. Not modified.
        cfg: Solver tolerances; defaults to :class:`SimConfig`.

    Returns:
        MacGrid: A projected copy with the solved pressure.

    Raises:
        PressureSolveError: The residual divergence stays above tolerance.
    """
    cfg = cfg or SimConfig()
    out = grid.copy()
    out.pressure[:] = 0.0
    a, b, cells = assemble_pressure_system(out)
    if len(cells) == 0:
        return out

    inv_diag = 1.0 / a.diagonal()
    precond = LinearOperator(a.shape, matvec=lambda x: inv_diag * x, dtype=np.float64)
    solution, _ = cg(
        a,
        b,
        rtol=0.0,
        atol=0.5 * cfg.pressure_tolerance,
        maxiter=cfg.max_pressure_iterations,
        M=precond,
    )
    out.pressure[cells[:, 0], cells[:, 1]] = solution
    _apply_pressure_gradient(out)

    residual = out.max_fluid_divergence()
    if not np.isfinite(residual) or residual > cfg.pressure_tolerance:
        raise PressureSolveError(
            f"pressure solve left divergence {residual:.3e} "
            f"(tolerance {cfg.pressure_tolerance:.1e})",
            residual=residual,
        )
    return out


def _cell_of(positions: np.ndarray, resolution: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    i = np.clip(np.floor(positions[:, 0]).astype(np.int64), 0, resolution[0] - 1)
    j = np.clip(np.floor(positions[:, 1]).astype(np.int64), 0, resolution[1] - 1)
    return i, j


def _resolve_solids(
    old: np.ndarray, new: np.ndarray, vel: np.ndarray, solid: np.ndarray
) -> None:
    """Move particles that ended inside solid cells back out, in place."""
    res = solid.shape
    i, j = _cell_of(new, res)
    stuck = np.flatnonzero(solid[i, j])
    for k in stuck:
        slide_x = np.array([new[k, 0], old[k, 1]])
        slide_y = np.array([old[k, 0], new[k, 1]])
        if not solid[_cell_of(slide_x[None], res)][0]:
            new[k] = slide_x
            vel[k, 1] = 0.0
        elif not solid[_cell_of(slide_y[None], res)][0]:
            new[k] = slide_y
            vel[k, 0] = 0.0
        else:
            new[k] = old[k]
            vel[k] = 0.0


def flip_step(
    state: ParticleState, grid: MacGrid, cfg: SimConfig, dt: float = 0.05
) -> ParticleState:
    """Advance the fluid by one time step.

    Order: particle-to-grid transfer, store the pre-projection grid, gravity,
    solid boundaries, pressure projection, FLIP/PIC grid-to-particle update,
    RK2 advection, then push particles out of solids and inside the domain.
    Obstacle particles are static.

    Args:
        state: Particles at the current frame.
        grid: Simulation grid; its solid cells are kept and every other field
            is overwritten with this step's projected values.
        cfg: Solver constants.
        dt: Time step in seconds.

    Returns:
        ParticleState: Particles at the next frame.
    """
    nx, ny = grid.resolution
    fluid_mask = state.fluid
    pos = state.positions[fluid_mask]
    vel = state.velocities[fluid_mask]
    solid = grid.solid

    u, u_known = _splat(pos, vel[:, 0], _U_OFFSET, (nx + 1, ny))
    v, v_known = _splat(pos, vel[:, 1], _V_OFFSET, (nx, ny + 1))
    grid.u = _extrapolate(u, u_known, cfg.extrapolation_sweeps)
    grid.v = _extrapolate(v, v_known, cfg.extrapolation_sweeps)

    flags = np.where(solid, CellFlag.SOLID, CellFlag.EMPTY).astype(np.int8)
    ci, cj = _cell_of(pos, (nx, ny))
    occupied = np.zeros((nx, ny), dtype=bool)
    occupied[ci, cj] = True
    flags[occupied & ~solid] = CellFlag.FLUID
    grid.flags = flags

    u_old, v_old = grid.u.copy(), grid.v.copy()

    grid.u += cfg.gravity[0] * dt
    grid.v += cfg.gravity[1] * dt
    _enforce_boundaries(grid)

    projected = pressure_project(grid, cfg)
    grid.u, grid.v, grid.pressure = projected.u, projected.v, projected.pressure

    pic = np.column_stack(
        [_sample(grid.u, pos, _U_OFFSET), _sample(grid.v, pos, _V_OFFSET)]
    )
    delta = np.column_stack(
        [
            _sample(grid.u - u_old, pos, _U_OFFSET),
            _sample(grid.v - v_old, pos, _V_OFFSET),
        ]
    )
    new_vel = cfg.flip_blend * (vel + delta) + (1.0 - cfg.flip_blend) * pic

    def grid_velocity(x: np.ndarray) -> np.ndarray:
        return np.column_stack(
            [_sample(grid.u, x, _U_OFFSET), _sample(grid.v, x, _V_OFFSET)]
        )

    midpoint = pos + 0.5 * dt * grid_velocity(pos)
    new_pos = pos + dt * grid_velocity(midpoint)

    if not np.all(np.isfinite(new_pos)):
        raise SimulationDivergedError("non-finite particle position in FLIP step")

    for axis, upper in ((0, nx), (1, ny)):
        low = new_pos[:, axis] < WALL_MARGIN
        high = new_pos[:, axis] > upper - WALL_MARGIN
        new_vel[low & (new_vel[:, axis] < 0.0), axis] = 0.0
        new_vel[high & (new_vel[:, axis] > 0.0), axis] = 0.0
        new_pos[:, axis] = np.clip(new_pos[:, axis], WALL_MARGIN, upper - WALL_MARGIN)

    _resolve_solids(pos, new_pos, new_vel, solid)

    out = state.copy()
    out.positions[fluid_mask] = new_pos
    out.velocities[fluid_mask] = new_vel
    out.velocities[~fluid_mask] = 0.0
    return out
