"""Randomised scene generation and trajectory simulation.

A scene is drawn in two stages: :func:`draw_layout` samples the pool, blocks
and obstacles from a :class:`SceneSpec`, and :func:`build_scene` rasterises the
layout and seeds particles. :func:`generate_scene` rejects layouts that exceed
the particle cap and redraws with the next sub-seed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .._errors import ConfigError, UnsatisfiableSpecError
from .._progress import ProgressCallback
from .dataset import BOUNDARY_DISTANCE, Trajectory, scale_positions
from .flip import CellFlag, MacGrid, ParticleState, ParticleType, SimConfig, flip_step

_RANGES = (
    "pool_height",
    "block_size",
    "block_count",
    "obstacle_count",
    "obstacle_length",
    "obstacle_rotation",
    "initial_velocity",
)
_PROBABILITIES = (
    "pool_probability",
    "block_probability",
    "multi_block_probability",
    "obstacle_probability",
    "initial_velocity_probability",
)


@dataclass(frozen=True)
class SceneSpec:
    """Distributions scenes are drawn from.

    Sizes are in grid cells, velocities in grid units per second and rotations
    in degrees. Ranges are inclusive ``(low, high)`` pairs.

    Attributes:
        pool_probability: Chance of a pool along the floor.
        pool_height: Pool depth range.
        block_probability: Chance of any liquid block.
        block_size: Block side length range (width and height drawn separately).
        multi_block_probability: Chance of more than one block.
        block_count: Block count range when there are several.
        obstacle_probability: Chance of obstacles.
        obstacle_count: Obstacle count range.
        obstacle_length: Obstacle length range.
        obstacle_rotation: Obstacle rotation range.
        obstacle_thickness: Width of the rotated rectangle rasterised per obstacle.
        initial_velocity_probability: Chance of a block starting with a velocity.
        initial_velocity: Per-axis initial velocity range.
        domain: Grid resolution ``(W, H)``.
        max_particles: Cap on the whole particle state. Obstacle particles count
            toward it too, so a scene may hold fewer fluid particles than the cap.
        steps: Solver steps per trajectory.
        dt: Solver time step in seconds.
        max_attempts: Redraws allowed before the spec counts as unsatisfiable.
    """

    pool_probability: float = 0.3
    pool_height: tuple[int, int] = (3, 8)
    block_probability: float = 1.0
    block_size: tuple[int, int] = (2, 20)
    multi_block_probability: float = 0.3
    block_count: tuple[int, int] = (2, 3)
    obstacle_probability: float = 0.8
    obstacle_count: tuple[int, int] = (1, 5)
    obstacle_length: tuple[float, float] = (2.0, 20.0)
    obstacle_rotation: tuple[float, float] = (0.0, 90.0)
    obstacle_thickness: float = 1.5
    initial_velocity_probability: float = 0.3
    initial_velocity: tuple[float, float] = (-5.0, 5.0)
    domain: tuple[int, int] = (32, 32)
    max_particles: int = 1300
    steps: int = 400
    dt: float = 0.05
    max_attempts: int = 100

    def __post_init__(self) -> None:
        for name in _PROBABILITIES:
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]: {p}")
        for name in _RANGES:
            low, high = getattr(self, name)
            if low > high:
                raise ConfigError(f"{name} lower bound exceeds upper bound: {(low, high)}")
        if self.domain[0] < 1 or self.domain[1] < 1:
            raise ConfigError(f"domain sides must be positive: {self.domain}")
        if self.pool_height[0] < 0 or self.block_size[0] < 1 or self.block_count[0] < 1:
            raise ConfigError("pool height, block size and block count must be positive")
        if self.obstacle_thickness <= 0.0:
            raise ConfigError("obstacle_thickness must be positive")
        if self.steps < 0 or self.dt <= 0.0 or self.max_attempts < 1:
            raise ConfigError("steps, dt and max_attempts must be positive")

    def to_dict(self) -> dict[str, object]:
        data = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in data.items()}

    @classmethod
    def from_dict(cls, data: dict) -> SceneSpec:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scene keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


@dataclass(frozen=True)
class Block:
    """A rectangle of liquid, lower-left cell ``(x, y)``."""

    x: int
    y: int
    width: int
    height: int
    velocity: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class Obstacle:
    """A static rotated bar centred at ``center``."""

    center: tuple[float, float]
    length: float
    angle: float


@dataclass(frozen=True)
class SceneLayout:
    """The drawn content of a scene, before rasterisation."""

    pool_height: int = 0
    blocks: tuple[Block, ...] = ()
    obstacles: tuple[Obstacle, ...] = ()

    def to_dict(self) -> dict[str, object]:
        return {
            "pool_height": self.pool_height,
            "blocks": [asdict(b) for b in self.blocks],
            "obstacles": [asdict(o) for o in self.obstacles],
        }


@dataclass
class Scene:
    """A ready-to-simulate scene.

    Attributes:
        state: Fluid particles followed by obstacle particles, in grid units.
        grid: Grid with solid and fluid cells flagged.
        layout: The layout the scene was built from.
        attempt: Sub-seed index of the accepted draw.
    """

    state: ParticleState
    grid: MacGrid
    layout: SceneLayout
    attempt: int = 0


@dataclass(frozen=True)
class ScenePreset:
    """A hand-designed scene."""

    name: str
    layout: SceneLayout
    domain: tuple[int, int] = (32, 32)
    description: str = field(default="", compare=False)


def _int_in(rng: np.random.Generator, bounds: tuple[int, int]) -> int:
    return int(rng.integers(bounds[0], bounds[1] + 1))


def draw_layout(rng: np.random.Generator, spec: SceneSpec) -> SceneLayout:
    """Draw pool, blocks and obstacles from ``spec``.

    Blocks rest above the pool; blocks and pools are clipped to the domain.
    """
    width, height = spec.domain

    pool_height = 0
    if rng.random() < spec.pool_probability:
        pool_height = min(_int_in(rng, spec.pool_height), height - 1)

    blocks: list[Block] = []
    if rng.random() < spec.block_probability:
        count = 1
        if rng.random() < spec.multi_block_probability:
            count = _int_in(rng, spec.block_count)
        for _ in range(count):
            w = min(_int_in(rng, spec.block_size), width)
            h = min(_int_in(rng, spec.block_size), height - pool_height)
            x = int(rng.integers(0, width - w + 1))
            y = int(rng.integers(pool_height, height - h + 1))
            velocity = (0.0, 0.0)
            if rng.random() < spec.initial_velocity_probability:
                vx, vy = rng.uniform(*spec.initial_velocity, size=2)
                velocity = (float(vx), float(vy))
            if h > 0:
                blocks.append(Block(x=x, y=y, width=w, height=h, velocity=velocity))

    obstacles: list[Obstacle] = []
    if rng.random() < spec.obstacle_probability:
        for _ in range(_int_in(rng, spec.obstacle_count)):
            cx, cy = rng.uniform(0.0, 1.0, size=2) * (width, height)
            obstacles.append(
                Obstacle(
                    center=(float(cx), float(cy)),
                    length=float(rng.uniform(*spec.obstacle_length)),
                    angle=float(rng.uniform(*spec.obstacle_rotation)),
                )
            )

    return SceneLayout(pool_height=pool_height, blocks=tuple(blocks), obstacles=tuple(obstacles))


def rasterize_obstacles(
    obstacles: tuple[Obstacle, ...], domain: tuple[int, int], thickness: float
) -> np.ndarray:
    """Solid-cell mask: cells whose centre lies inside any obstacle rectangle."""
    width, height = domain
    ci, cj = np.meshgrid(np.arange(width) + 0.5, np.arange(height) + 0.5, indexing="ij")
    solid = np.zeros((width, height), dtype=bool)
    for ob in obstacles:
        theta = np.deg2rad(ob.angle)
        dx, dy = ci - ob.center[0], cj - ob.center[1]
        along = dx * np.cos(theta) + dy * np.sin(theta)
        across = -dx * np.sin(theta) + dy * np.cos(theta)
        solid |= (np.abs(along) <= 0.5 * ob.length) & (np.abs(across) <= 0.5 * thickness)
    return solid


def _fluid_cells(
    layout: SceneLayout, domain: tuple[int, int], solid: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    width, height = domain
    mask = np.zeros((width, height), dtype=bool)
    velocity = np.zeros((width, height, 2))
    mask[:, : layout.pool_height] = True
    for b in layout.blocks:
        region = (slice(b.x, b.x + b.width), slice(b.y, b.y + b.height))
        mask[region] = True
        velocity[region] = b.velocity
    mask &= ~solid
    return mask, velocity


def count_particles(layout: SceneLayout, spec: SceneSpec, cfg: SimConfig) -> int:
    """Fluid plus obstacle particles the layout would produce.

    This is the count ``generate_scene`` holds against ``max_particles``.
    """
    solid = rasterize_obstacles(layout.obstacles, spec.domain, spec.obstacle_thickness)
    fluid, _ = _fluid_cells(layout, spec.domain, solid)
    return int(fluid.sum()) * cfg.particles_per_cell + int(solid.sum())


def build_scene(
    layout: SceneLayout,
    spec: SceneSpec,
    cfg: SimConfig,
    rng: np.random.Generator,
    attempt: int = 0,
) -> Scene:
    """Rasterise ``layout`` and seed its particles.

    Each fluid cell receives ``particles_per_cell`` particles on a regular
    sub-grid with uniform jitter; each solid cell receives one static obstacle
    particle at its centre.
    """
    width, height = spec.domain
    solid = rasterize_obstacles(layout.obstacles, spec.domain, spec.obstacle_thickness)
    fluid, cell_velocity = _fluid_cells(layout, spec.domain, solid)

    side = int(round(np.sqrt(cfg.particles_per_cell)))
    sub = (np.arange(side) + 0.5) / side
    offsets = np.stack(np.meshgrid(sub, sub, indexing="ij"), axis=-1).reshape(-1, 2)

    cells = np.argwhere(fluid)
    fluid_pos = (cells[:, None, :] + offsets[None, :, :]).reshape(-1, 2).astype(np.float64)
    fluid_pos += rng.uniform(-cfg.jitter, cfg.jitter, size=fluid_pos.shape)
    fluid_vel = np.repeat(cell_velocity[cells[:, 0], cells[:, 1]], len(offsets), axis=0)

    obstacle_pos = np.argwhere(solid).astype(np.float64) + 0.5

    state = ParticleState(
        positions=np.concatenate([fluid_pos, obstacle_pos]).reshape(-1, 2),
        velocities=np.concatenate([fluid_vel, np.zeros_like(obstacle_pos)]).reshape(-1, 2),
        types=np.concatenate(
            [
                np.full(len(fluid_pos), ParticleType.FLUID, dtype=np.uint8),
                np.full(len(obstacle_pos), ParticleType.OBSTACLE, dtype=np.uint8),
            ]
        ),
    )
    grid = MacGrid.empty(width, height, solid=solid)
    grid.flags[fluid] = CellFlag.FLUID
    return Scene(state=state, grid=grid, layout=layout, attempt=attempt)


def _minimal_particles(spec: SceneSpec) -> int:
    """Lower bound on the particle count of any draw.

    Every certain fluid cell yields at least one particle, whether it stays
    fluid or becomes an obstacle cell.
    """
    width, height = spec.domain
    cells = 0
    pool = 0
    if spec.pool_probability >= 1.0:
        pool = min(spec.pool_height[0], height - 1)
        cells += width * pool
    if spec.block_probability >= 1.0:
        cells += min(spec.block_size[0], width) * min(spec.block_size[0], height - pool)
    return cells


def generate_scene(seed: int, spec: SceneSpec, cfg: SimConfig | None = None) -> Scene:
    """Draw a scene that respects the particle cap.

    Attempt ``k`` uses the generator seeded with ``[seed, k]``; a draw over
    ``max_particles`` is rejected and the next attempt is drawn.

    Raises:
        UnsatisfiableSpecError: The minimal configuration already exceeds the
            cap, or no draw within ``max_attempts`` fits under it.
    """
    cfg = cfg or SimConfig()
    minimal = _minimal_particles(spec)
    if minimal > spec.max_particles:
        raise UnsatisfiableSpecError(
            f"minimal scene needs {minimal} particles, cap is {spec.max_particles}"
        )

    for attempt in range(spec.max_attempts):
        rng = np.random.default_rng([seed, attempt])
        layout = draw_layout(rng, spec)
        if count_particles(layout, spec, cfg) <= spec.max_particles:
            return build_scene(layout, spec, cfg, rng, attempt=attempt)

    raise UnsatisfiableSpecError(
        f"no scene under {spec.max_particles} particles in {spec.max_attempts} attempts "
        f"(seed {seed})"
    )


def simulate_scene(
    scene: Scene,
    spec: SceneSpec,
    cfg: SimConfig | None = None,
    name: str = "",
    meta: dict | None = None,
    progress: ProgressCallback | None = None,
) -> Trajectory:
    """Run ``spec.steps`` solver steps from ``scene`` and record every frame.

    Returns:
        Trajectory: ``steps + 1`` frames in scaled units.
    """
    cfg = cfg or SimConfig()
    state, grid = scene.state.copy(), scene.grid.copy()
    frames = np.empty((spec.steps + 1, state.count, 2))
    frames[0] = state.positions

    for step in range(spec.steps):
        state = flip_step(state, grid, cfg, spec.dt)
        frames[step + 1] = state.positions
        if progress is not None:
            progress((step + 1) / spec.steps, step + 1, spec.steps)

    scene_meta: dict[str, object] = {
        "spec": spec.to_dict(),
        "layout": scene.layout.to_dict(),
        "attempt": scene.attempt,
        "solid_cells": np.argwhere(scene.grid.solid).tolist(),
        **(meta or {}),
    }
    return Trajectory(
        frames=scale_positions(frames, spec.domain),
        types=state.types,
        dt=spec.dt,
        domain=spec.domain,
        boundary=BOUNDARY_DISTANCE,
        scene_meta=scene_meta,
        name=name,
    )


def simulate_trajectory(
    seed: int,
    spec: SceneSpec,
    cfg: SimConfig | None = None,
    progress: ProgressCallback | None = None,
) -> Trajectory:
    """Generate the scene for ``seed`` and simulate it. Deterministic per seed."""
    scene = generate_scene(seed, spec, cfg)
    return simulate_scene(
        scene, spec, cfg, name=f"seed_{seed}", meta={"seed": seed}, progress=progress
    )


def simulate_preset(
    preset: ScenePreset,
    spec: SceneSpec,
    cfg: SimConfig | None = None,
    seed: int = 0,
    progress: ProgressCallback | None = None,
) -> Trajectory:
    """Simulate a hand-designed scene on its own domain."""
    cfg = cfg or SimConfig()
    spec = replace(spec, domain=preset.domain)
    scene = build_scene(preset.layout, spec, cfg, np.random.default_rng([seed, 0]))
    return simulate_scene(
        scene, spec, cfg, name=preset.name, meta={"preset": preset.name}, progress=progress
    )


def challenge_scenes() -> list[ScenePreset]:
    """Hand-designed test scenes on the standard domain."""
    return [
        ScenePreset(
            name="dam_break",
            layout=SceneLayout(blocks=(Block(x=0, y=0, width=10, height=20),)),
            description="column of liquid collapsing along the floor",
        ),
        ScenePreset(
            name="block_onto_obstacle",
            layout=SceneLayout(
                blocks=(Block(x=12, y=20, width=8, height=8),),
                obstacles=(Obstacle(center=(16.0, 10.0), length=12.0, angle=20.0),),
            ),
            description="block falling onto a tilted bar",
        ),
        ScenePreset(
            name="colliding_blocks",
            layout=SceneLayout(
                blocks=(
                    Block(x=2, y=10, width=7, height=7, velocity=(4.0, 0.0)),
                    Block(x=23, y=10, width=7, height=7, velocity=(-4.0, 0.0)),
                )
            ),
            description="two blocks thrown at each other",
        ),
        ScenePreset(
            name="block_into_pool",
            layout=SceneLayout(
                pool_height=5, blocks=(Block(x=12, y=18, width=8, height=8),)
            ),
            description="block dropping into a pool",
        ),
        ScenePreset(
            name="thrown_block",
            layout=SceneLayout(
                blocks=(Block(x=4, y=16, width=6, height=6, velocity=(5.0, 3.0)),)
            ),
            description="block thrown towards the right wall",
        ),
    ]


def tall_scenes() -> list[ScenePreset]:
    """Scenes on the 32 x 64 domain that reach above the standard domain."""
    return [
        ScenePreset(
            name="tall_falling_block",
            layout=SceneLayout(
                pool_height=4, blocks=(Block(x=11, y=40, width=10, height=10),)
            ),
            domain=(32, 64),
            description="block released above the standard domain height",
        ),
        ScenePreset(
            name="tall_dam_break",
            layout=SceneLayout(blocks=(Block(x=0, y=0, width=8, height=36),)),
            domain=(32, 64),
            description="column taller than the standard domain",
        ),
    ]


PRESET_SETS = {"challenge": challenge_scenes, "tall": tall_scenes}
