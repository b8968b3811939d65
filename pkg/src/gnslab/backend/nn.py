"""Multilayer perceptrons, LayerNorm, the Adam optimizer and the LR schedule."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .._errors import ConfigError, ContractError, NonFiniteGradientError, ShapeError
from . import tensor as T
from .tensor import Tensor

LAYER_NORM_EPS = 1e-5


@dataclass
class MlpParams:
    """Weights of a ReLU multilayer perceptron.

    Attributes:
        layers: (weight [in, out], bias [out]) pairs, applied in order.
        layer_norm: Whether LayerNorm follows the output layer.
        norm_gain: LayerNorm gain [out], present iff ``layer_norm``.
        norm_bias: LayerNorm bias [out], present iff ``layer_norm``.
    """

    layers: list[tuple[Tensor, Tensor]]
    layer_norm: bool = False
    norm_gain: Tensor | None = None
    norm_bias: Tensor | None = None

    def __post_init__(self) -> None:
        for i in range(1, len(self.layers)):
            prev_out = self.layers[i - 1][0].shape[1]
            this_in = self.layers[i][0].shape[0]
            if prev_out != this_in:
                raise ShapeError(
                    f"layer {i} expects {this_in} inputs but layer {i - 1} "
                    f"produces {prev_out}"
                )
        if self.layer_norm and (self.norm_gain is None or self.norm_bias is None):
            raise ConfigError("layer_norm=True needs norm_gain and norm_bias")

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def named_parameters(self, prefix: str) -> list[tuple[str, Tensor]]:
        named: list[tuple[str, Tensor]] = []
        for i, (w, b) in enumerate(self.layers):
            named.append((f"{prefix}.layer{i}.weight", w))
            named.append((f"{prefix}.layer{i}.bias", b))
        if self.layer_norm:
            named.append((f"{prefix}.norm.gain", self.norm_gain))  # type: ignore[arg-type]
            named.append((f"{prefix}.norm.bias", self.norm_bias))  # type: ignore[arg-type]
        return named


def init_mlp(
    in_dim: int,
    hidden_sizes: Sequence[int],
    out_dim: int,
    rng: np.random.Generator,
    layer_norm: bool = False,
) -> MlpParams:
    """Create an MLP with Glorot-uniform weights and zero biases.

    Args:
        in_dim: Input width.
        hidden_sizes: Widths of the hidden layers.
        out_dim: Output width.
        rng: Seeded generator; identical seeds give identical weights.
        layer_norm: Whether to append LayerNorm (gain 1, bias 0).

    Returns:
        MlpParams: The initialised parameters, all requiring gradients.
    """
    dims = [in_dim, *hidden_sizes, out_dim]
    layers: list[tuple[Tensor, Tensor]] = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True)
        b = Tensor(np.zeros(fan_out), requires_grad=True)
        layers.append((w, b))

    if not layer_norm:
        return MlpParams(layers=layers)

    return MlpParams(
        layers=layers,
        layer_norm=True,
        norm_gain=Tensor(np.ones(out_dim), requires_grad=True),
        norm_bias=Tensor(np.zeros(out_dim), requires_grad=True),
    )


def layer_norm(
    x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS
) -> Tensor:
    """Normalize each row to zero mean and unit (population) variance.

    Args:
        x: Input [batch, d].
        gain: Per-feature gain [d].
        bias: Per-feature bias [d].
        eps: Variance floor.

    Returns:
        Tensor: ``(x - mean) / sqrt(var + eps) * gain + bias``.
    """
    if x.value.ndim != 2 or x.shape[1] < 1:
        raise ShapeError(f"layer_norm expects [batch, d>=1], got {x.shape}")
    if gain.shape != (x.shape[1],) or bias.shape != (x.shape[1],):
        raise ShapeError(
            f"layer_norm gain/bias must have shape ({x.shape[1]},), "
            f"got {gain.shape} and {bias.shape}"
        )

    centered = x - T.mean(x, axis=1, keepdims=True)
    variance = T.mean(T.square(centered), axis=1, keepdims=True)
    return centered / T.sqrt(variance + eps) * gain + bias


def mlp_forward(params: MlpParams, x: Tensor) -> Tensor:
    """Apply the MLP to a batch of row vectors.

    Args:
        params: MLP weights.
        x: Input [batch, in_dim].

    Returns:
        Tensor: Output [batch, out_dim].
    """
    h = x
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        if h.value.ndim != 2 or h.shape[1] != w.shape[0]:
            raise ShapeError(
                f"layer {i} expects input width {w.shape[0]}, got shape {h.shape}"
            )
        h = T.matmul(h, w) + b
        if i < last:
            h = T.relu(h)

    if params.layer_norm:
        h = layer_norm(h, params.norm_gain, params.norm_bias)  # type: ignore[arg-type]

    return h


@dataclass
class AdamState:
    """Optimizer state aligned with a parameter list.

    Attributes:
        first_moment: Per-parameter running mean of gradients.
        second_moment: Per-parameter running mean of squared gradients.
        step_count: Number of completed steps.
        beta1: First-moment decay.
        beta2: Second-moment decay.
        epsilon: Denominator floor.
    """

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError(f"Adam betas must lie in (0, 1): {self.beta1}, {self.beta2}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"Adam epsilon must be positive: {self.epsilon}")
        if len(self.first_moment) != len(self.second_moment):
            raise ContractError("Adam moment buffers have different lengths")

    @classmethod
    def zeros_like(
        cls,
        params: Sequence[Tensor],
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> AdamState:
        """Fresh state with zero moments for ``params``."""
        return cls(
            first_moment=[np.zeros_like(p.value) for p in params],
            second_moment=[np.zeros_like(p.value) for p in params],
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
) -> AdamState:
    """Apply one bias-corrected Adam update in place.

    Args:
        params: Parameters to update.
        grads: Gradients aligned with ``params``.
        state: Optimizer state aligned with ``params``; updated in place.
        lr: Learning rate for this step.

    Returns:
        AdamState: ``state`` after the update.
    """
    if not (len(params) == len(grads) == len(state.first_moment)):
        raise ContractError(
            f"Adam buffers misaligned: {len(params)} params, {len(grads)} grads, "
            f"{len(state.first_moment)} moments"
        )

    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ShapeError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"non-finite gradient for parameter {i} ({p.name or 'unnamed'})",
                index=i,
                name=p.name,
            )

    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t

    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        p.value -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)

    return state


@dataclass(frozen=True)
class LrSchedule:
    """Exponential decay from ``lr_start`` toward ``lr_floor``.

    Attributes:
        lr_start: Learning rate at step 0.
        lr_floor: Asymptotic learning rate.
        decay_steps: Steps per tenfold decay of the excess over the floor.
    """

    lr_start: float = 1e-4
    lr_floor: float = 1e-6
    decay_steps: int = 100_000

    def __post_init__(self) -> None:
        if self.decay_steps <= 0:
            raise ConfigError(f"decay_steps must be positive: {self.decay_steps}")
        if self.lr_floor > self.lr_start:
            raise ConfigError("lr_floor must not exceed lr_start")


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Learning rate at ``step``: floor + (start - floor) * 0.1^(step / decay_steps)."""
    if step < 0:
        raise ContractError(f"step must be non-negative: {step}")
    excess = schedule.lr_start - schedule.lr_floor
    return schedule.lr_floor + excess * 0.1 ** (step / schedule.decay_steps)
