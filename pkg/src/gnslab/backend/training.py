"""Training variants, losses, input noise and the training loop."""

from __future__ import annotations

from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .._errors import ConfigError, ContractError, DataError, NonFiniteLossError, ShapeError
from . import tensor as T
from .checkpoint import Checkpoint
from .dataset import BOUNDARY_DISTANCE, BOUNDARY_PARTICLES, HISTORY, WINDOW, Trajectory
from .flip import ParticleType
from .gns import GnsConfig, GnsParams, advance_window, init_gns
from .nn import AdamState, LrSchedule, adam_step, lr_at
from .stats import NormStats, normalize
from .tensor import Tensor

StepCallback = Callable[[int, float, float], None]


class TrainVariant(str, Enum):
    """The five training procedures."""

    ONE_STEP = "1s"
    ONE_STEP_NOISE = "1sn"
    ONE_STEP_NOISE_BOUNDED = "1snb"
    TWO_STEP_SCRATCH = "2ss"
    TWO_STEP_INITIALIZED = "2si"

    @property
    def uses_noise(self) -> bool:
        return self in (TrainVariant.ONE_STEP_NOISE, TrainVariant.ONE_STEP_NOISE_BOUNDED)

    @property
    def multi_step(self) -> bool:
        return self in (TrainVariant.TWO_STEP_SCRATCH, TrainVariant.TWO_STEP_INITIALIZED)

    @property
    def needs_pretrained(self) -> bool:
        return self is TrainVariant.TWO_STEP_INITIALIZED

    @property
    def boundary(self) -> str:
        if self is TrainVariant.ONE_STEP_NOISE_BOUNDED:
            return BOUNDARY_PARTICLES
        return BOUNDARY_DISTANCE

    def model_config(self, base: GnsConfig) -> GnsConfig:
        """``base`` with the boundary features this variant uses."""
        return replace(base, use_boundary_distances=self.boundary == BOUNDARY_DISTANCE)


@dataclass(frozen=True)
class NoiseConfig:
    """Random-walk input noise.

    Attributes:
        enabled: Whether noise variants add noise at all.
        accumulated_position_std: Std of the perturbation of the current
            position, in scaled units.
    """

    enabled: bool = True
    accumulated_position_std: float = 6.7e-4

    def __post_init__(self) -> None:
        if self.accumulated_position_std < 0.0:
            raise ConfigError("accumulated_position_std must be non-negative")

    @property
    def effective_std(self) -> float:
        return self.accumulated_position_std if self.enabled else 0.0


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    Attributes:
        batch_size: Samples per optimizer step.
        schedule: Learning-rate schedule.
        total_steps: Optimizer steps to run.
        seed: Seed of the sampler, the noise and the initial weights.
        checkpoint_interval: Steps between emitted checkpoints.
        unroll_steps: Extra model steps ``n`` of the multi-step loss.
        noise: Input noise of the noise variants.
    """

    batch_size: int = 2
    schedule: LrSchedule = field(default_factory=LrSchedule)
    total_steps: int = 10_000
    seed: int = 0
    checkpoint_interval: int = 1_000
    unroll_steps: int = 1
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1: {self.batch_size}")
        if self.total_steps < 0 or self.checkpoint_interval < 1:
            raise ConfigError("total_steps must be >= 0 and checkpoint_interval >= 1")
        if self.unroll_steps < 1:
            raise ConfigError(f"unroll_steps must be at least 1: {self.unroll_steps}")


def one_step_loss(pred_acc: object, gt_acc: object, fluid: np.ndarray | None = None) -> Tensor:
    """Mean squared difference over particles and axes.

    Args:
        pred_acc: Predicted normalized accelerations ``[N, 2]``.
        gt_acc: Target normalized accelerations ``[N, 2]``.
        fluid: Optional mask restricting the mean to fluid particles.
    """
    pred, gt = T.as_tensor(pred_acc), T.as_tensor(gt_acc)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {gt.shape}")
    diff = pred - gt
    if fluid is not None:
        rows = np.flatnonzero(fluid)
        if len(rows) == 0:
            raise DataError("no fluid particles to score")
        diff = T.take(diff, rows)
    return T.mean(T.square(diff))


def target_acceleration(window: np.ndarray, next_position: np.ndarray) -> np.ndarray:
    """Acceleration that carries the window's current position to ``next_position``."""
    return (next_position - window[HISTORY]) - (window[HISTORY] - window[HISTORY - 1])


def inject_noise(
    window: np.ndarray,
    cfg: NoiseConfig,
    rng: np.random.Generator,
    types: np.ndarray | None = None,
) -> np.ndarray:
    """Corrupt a six-position window with a velocity random walk.

    Each of the five velocities gets i.i.d. noise of std ``std / sqrt(5)``;
    the cumulative sum is added to positions ``1..5`` so the current position
    carries std ``std``. The oldest position and obstacle particles are left
    untouched. With zero std the window is returned unchanged and ``rng`` is
    not drawn from.
    """
    window = np.asarray(window, dtype=np.float64)
    std = cfg.effective_std
    if std == 0.0:
        return window.copy()
    steps = rng.normal(0.0, std / np.sqrt(HISTORY), size=(HISTORY, *window.shape[1:]))
    walk = np.cumsum(steps, axis=0)
    if types is not None:
        walk[:, np.asarray(types) != ParticleType.FLUID] = 0.0
    noisy = window.copy()
    noisy[1:] += walk
    return noisy


def _unrolled_terms(
    params: GnsParams,
    window: np.ndarray,
    types: np.ndarray,
    gt_future: np.ndarray,
    stats: NormStats,
    bounds: np.ndarray | None,
    n: int,
) -> list[Tensor]:
    """Per-step losses of an ``n``-step unroll (``n + 1`` terms).

    Term ``k`` compares the prediction from a window whose newest ``k``
    positions were predicted with the ground-truth acceleration at that step.
    """
    if len(gt_future) < n + 1:
        raise ContractError(f"{n + 1} future frames needed, got {len(gt_future)}")

    fluid = np.asarray(types) == ParticleType.FLUID
    sequence = np.concatenate([window, gt_future[: n + 1]], axis=0)
    mean, std = stats.acceleration_mean, stats.acceleration_std

    w = Tensor(window)
    terms: list[Tensor] = []
    for k in range(n + 1):
        accel = target_acceleration(sequence[k : k + WINDOW], sequence[k + WINDOW])
        target = normalize(accel, mean, std)
        acc_hat, next_positions = advance_window(params, w, types, stats, bounds)
        terms.append(one_step_loss(acc_hat, target, fluid))
        if k < n:
            shifted = T.reshape(next_positions, (1, *next_positions.shape))
            w = T.concat([w[1:], shifted], axis=0)
    return terms


def multi_step_loss(
    params: GnsParams,
    window: np.ndarray,
    types: np.ndarray,
    gt_future: np.ndarray,
    stats: NormStats,
    n: int = 1,
    bounds: np.ndarray | None = None,
) -> Tensor:
    """Unrolled loss: the sum of ``n + 1`` one-step terms divided by ``n``.

    Args:
        params: Model weights.
        window: Ground-truth positions ``p[t-5..t]``.
        types: Particle types.
        gt_future: Ground-truth positions ``p[t+1..t+1+n]``.
        stats: Normalization statistics.
        n: Extra steps, at least 1.
        bounds: Scaled domain bounds for boundary-distance features.
    """
    if n < 1:
        raise ContractError(f"multi_step_loss needs n >= 1, got {n}")
    terms = _unrolled_terms(params, window, types, gt_future, stats, bounds, n)
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total / float(n)


def valid_frames(traj: Trajectory, unroll: int = 0) -> np.ndarray:
    """Current-frame indices with a full window and ``unroll + 1`` future frames."""
    return np.arange(HISTORY, traj.n_frames - 1 - unroll)


def sample_batch(
    trajectories: Sequence[Trajectory],
    rng: np.random.Generator,
    batch_size: int,
    unroll: int = 0,
) -> list[tuple[int, int]]:
    """Uniform (trajectory, frame) pairs drawn with replacement."""
    counts = np.array([len(valid_frames(t, unroll)) for t in trajectories])
    total = int(counts.sum())
    if total == 0:
        raise ConfigError("no trajectory is long enough for the requested unroll")
    offsets = np.cumsum(counts) - counts
    flat = rng.integers(0, total, size=batch_size)
    traj_index = np.searchsorted(np.cumsum(counts), flat, side="right")
    return [(int(i), int(f - offsets[i]) + HISTORY) for i, f in zip(traj_index, flat)]


def sample_loss(
    params: GnsParams,
    variant: TrainVariant,
    traj: Trajectory,
    t: int,
    stats: NormStats,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> Tensor:
    """Loss of a single (trajectory, frame) sample under ``variant``."""
    window = traj.frames[t - HISTORY : t + 1]
    if variant.uses_noise:
        window = inject_noise(window, cfg.noise, rng, traj.types)
    n = cfg.unroll_steps if variant.multi_step else 0
    future = traj.frames[t + 1 : t + 2 + n]
    bounds = traj.bounds if params.config.use_boundary_distances else None
    if n == 0:
        return _unrolled_terms(params, window, traj.types, future, stats, bounds, 0)[0]
    return multi_step_loss(params, window, traj.types, future, stats, n, bounds)


def check_compatible(
    variant: TrainVariant, trajectories: Sequence[Trajectory], config: GnsConfig
) -> None:
    """Raise ConfigError unless data and model match the variant."""
    wrong = [t.name for t in trajectories if t.boundary != variant.boundary]
    if wrong:
        raise ConfigError(
            f"variant {variant.value} needs {variant.boundary!r} boundary data; "
            f"{len(wrong)} trajectory(ies) differ (e.g. {wrong[0]})"
        )
    if config.use_boundary_distances != (variant.boundary == BOUNDARY_DISTANCE):
        raise ConfigError(
            f"variant {variant.value} requires use_boundary_distances="
            f"{variant.boundary == BOUNDARY_DISTANCE}"
        )


def init_from_pretrained(checkpoint: Checkpoint, config: GnsConfig | None = None) -> GnsParams:
    """Copy a checkpoint's weights into a fresh model of ``config``.

    Optimizer state is not carried over.

    Raises:
        ConfigError: The donor was not trained as 1s.
        ArchitectureMismatchError: Tensor names or shapes differ.
    """
    if checkpoint.variant != TrainVariant.ONE_STEP.value:
        raise ConfigError(
            f"2si starts from a 1s checkpoint, got {checkpoint.variant or 'unlabelled'!r}"
        )
    target = init_gns(config or checkpoint.params.config, rng=0)
    target.load_state_dict(checkpoint.params.state_dict())
    return target


def train(
    variant: TrainVariant | str,
    trajectories: Sequence[Trajectory],
    stats: NormStats,
    cfg: TrainConfig,
    model: GnsConfig,
    pretrained: Checkpoint | None = None,
    on_step: StepCallback | None = None,
) -> Iterator[Checkpoint]:
    """Train a model, yielding a checkpoint every ``checkpoint_interval`` steps.

    Step ``s`` draws its batch from the generator seeded ``[seed, s]`` and
    sample ``b``'s noise from ``[seed, s, b]``, so results depend only on the
    inputs. The final step always yields a checkpoint.

    Args:
        variant: Training variant.
        trajectories: Training trajectories.
        stats: Normalization statistics of the training set.
        cfg: Optimization settings.
        model: Architecture; the variant decides its boundary features.
        pretrained: Donor checkpoint, required by ``2si``.
        on_step: Called with (step, lr, loss) after every optimizer step.

    Raises:
        ConfigError: Data, model or donor do not fit the variant.
        NonFiniteLossError: A batch produced a NaN or infinite loss.
    """
    variant = TrainVariant(variant)
    model = variant.model_config(model)
    check_compatible(variant, trajectories, model)

    if variant.needs_pretrained:
        if pretrained is None:
            raise ConfigError("variant 2si needs a pretrained 1s checkpoint")
        params = init_from_pretrained(pretrained, model)
    else:
        params = init_gns(model, rng=np.random.default_rng([cfg.seed]))

    tensors = params.parameters()
    adam = AdamState.zeros_like(tensors)
    unroll = cfg.unroll_steps if variant.multi_step else 0

    for step in range(cfg.total_steps):
        batch = sample_batch(
            trajectories, np.random.default_rng([cfg.seed, step]), cfg.batch_size, unroll
        )
        total: Tensor | None = None
        for b, (i, t) in enumerate(batch):
            rng = np.random.default_rng([cfg.seed, step, b])
            loss_b = sample_loss(params, variant, trajectories[i], t, stats, cfg, rng)
            total = loss_b if total is None else total + loss_b
        loss = total / float(len(batch))  # type: ignore[operator]
        value = loss.item()
        if not np.isfinite(value):
            raise NonFiniteLossError(
                f"non-finite loss {value} at step {step}", samples=batch
            )

        grads = T.backward(loss, tensors)
        lr = lr_at(cfg.schedule, step)
        adam_step(tensors, grads, adam, lr)
        if on_step is not None:
            on_step(step + 1, lr, value)

        done = step + 1
        if done % cfg.checkpoint_interval == 0 or done == cfg.total_steps:
            yield Checkpoint(
                params=_snapshot(params),
                stats=stats.copy(),
                step=done,
                variant=variant.value,
                adam=_copy_adam(adam),
                loss=value,
            )


def _snapshot(params: GnsParams) -> GnsParams:
    out = init_gns(params.config, rng=0)
    out.load_state_dict(params.state_dict())
    return out


def _copy_adam(state: AdamState) -> AdamState:
    return AdamState(
        first_moment=[m.copy() for m in state.first_moment],
        second_moment=[v.copy() for v in state.second_moment],
        step_count=state.step_count,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )


def evaluate_one_step_loss(
    params: GnsParams,
    trajectories: Sequence[Trajectory],
    stats: NormStats,
    frames: Sequence[tuple[int, int]] | None = None,
) -> float:
    """Mean one-step loss over (trajectory, frame) samples, without gradients."""
    samples = frames or [
        (i, int(t)) for i, traj in enumerate(trajectories) for t in valid_frames(traj)
    ]
    losses: list[float] = []
    for i, t in samples:
        traj = trajectories[i]
        window = traj.frames[t - HISTORY : t + 1]
        bounds = traj.bounds if params.config.use_boundary_distances else None
        term = _unrolled_terms(
            params, window, traj.types, traj.frames[t + 1 : t + 2], stats, bounds, 0
        )[0]
        losses.append(term.item())
    return float(np.mean(losses))
