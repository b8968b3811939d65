"""Graph Network-based Simulator: features, encode-process-decode, Euler update.

Feature construction is written with tensor operations so gradients reach
earlier predicted positions when the model is unrolled for several steps.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Any

import numpy as np

from .._errors import ArchitectureMismatchError, ConfigError, ShapeError
from . import tensor as T
from .dataset import HISTORY, WINDOW
from .flip import ParticleType
from .graph import ParticleGraph, build_graph
from .nn import MlpParams, init_mlp, mlp_forward
from .stats import NormStats, checked_std
from .tensor import Tensor

N_PARTICLE_TYPES = len(ParticleType)
EDGE_DIM = 3


@dataclass(frozen=True)
class GnsConfig:
    """Architecture of a GNS model.

    Attributes:
        latent_size: Width of node and edge latents.
        hidden_size: Width of every MLP hidden layer.
        mlp_hidden_layers: Hidden layers per MLP.
        message_passing_steps: Number of interaction networks.
        connectivity_radius: Graph radius in scaled units.
        embedding_size: Width of the learned particle-type embedding.
        use_boundary_distances: Whether nodes see their distances to the walls.
        clip_boundary: Whether wall distances are clipped to one radius.
    """

    latent_size: int = 128
    hidden_size: int = 128
    mlp_hidden_layers: int = 2
    message_passing_steps: int = 10
    connectivity_radius: float = 0.03
    embedding_size: int = 16
    use_boundary_distances: bool = True
    clip_boundary: bool = True

    def __post_init__(self) -> None:
        if min(self.latent_size, self.hidden_size, self.embedding_size) < 1:
            raise ConfigError("latent, hidden and embedding sizes must be positive")
        if self.mlp_hidden_layers < 0 or self.message_passing_steps < 0:
            raise ConfigError("layer and message-passing counts must be non-negative")
        if self.connectivity_radius <= 0.0:
            raise ConfigError(f"connectivity_radius must be positive: {self.connectivity_radius}")

    @property
    def node_input_size(self) -> int:
        return 2 * HISTORY + self.embedding_size + (4 if self.use_boundary_distances else 0)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> GnsConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class GnsParams:
    """All learnable weights of a GNS model."""

    config: GnsConfig
    node_encoder: MlpParams
    edge_encoder: MlpParams
    processor: list[tuple[MlpParams, MlpParams]]
    decoder: MlpParams
    type_embedding: Tensor

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """Parameters in a fixed order, each tagged with its name."""
        named = [("type_embedding", self.type_embedding)]
        named += self.node_encoder.named_parameters("node_encoder")
        named += self.edge_encoder.named_parameters("edge_encoder")
        for i, (edge_mlp, node_mlp) in enumerate(self.processor):
            named += edge_mlp.named_parameters(f"processor{i}.edge")
            named += node_mlp.named_parameters(f"processor{i}.node")
        named += self.decoder.named_parameters("decoder")
        for name, tensor in named:
            tensor.name = name
        return named

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        """Copy ``arrays`` into the parameters; names and shapes must match exactly."""
        named = dict(self.named_parameters())
        differing = sorted(set(named) ^ set(arrays))
        differing += sorted(
            name
            for name in set(named) & set(arrays)
            if named[name].shape != np.shape(arrays[name])
        )
        if differing:
            raise ArchitectureMismatchError(
                f"{len(differing)} tensor(s) differ: {', '.join(differing)}",
                tensors=differing,
            )
        for name, tensor in named.items():
            tensor.value = np.array(arrays[name], dtype=np.float64)


def init_gns(config: GnsConfig, rng: np.random.Generator | int = 0) -> GnsParams:
    """Seeded initial weights for ``config``."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    hidden = [config.hidden_size] * config.mlp_hidden_layers
    latent = config.latent_size

    def mlp(in_dim: int, out_dim: int, layer_norm: bool = True) -> MlpParams:
        return init_mlp(in_dim, hidden, out_dim, rng, layer_norm=layer_norm)

    node_encoder = mlp(config.node_input_size, latent)
    edge_encoder = mlp(EDGE_DIM, latent)
    processor = [
        (mlp(3 * latent, latent), mlp(2 * latent, latent))
        for _ in range(config.message_passing_steps)
    ]
    decoder = mlp(latent, 2, layer_norm=False)
    limit = np.sqrt(6.0 / (N_PARTICLE_TYPES + config.embedding_size))
    embedding = Tensor(
        rng.uniform(-limit, limit, size=(N_PARTICLE_TYPES, config.embedding_size)),
        requires_grad=True,
    )
    params = GnsParams(
        config=config,
        node_encoder=node_encoder,
        edge_encoder=edge_encoder,
        processor=processor,
        decoder=decoder,
        type_embedding=embedding,
    )
    params.named_parameters()
    return params


def _window_tensor(window: Any) -> Tensor:
    w = T.as_tensor(window)
    if w.value.ndim != 3 or w.shape[0] != WINDOW or w.shape[2] != 2:
        raise ShapeError(f"window must have shape [{WINDOW}, N, 2], got {w.shape}")
    return w


def build_node_features(
    params: GnsParams,
    window: Any,
    types: np.ndarray,
    stats: NormStats,
    bounds: np.ndarray | None = None,
) -> Tensor:
    """Node inputs: normalized velocity history, type embedding, wall distances.

    Args:
        params: Model weights (for the type embedding and config).
        window: The last six positions ``[6, N, 2]``.
        types: Particle types ``[N]``.
        stats: Normalization statistics.
        bounds: Scaled domain bounds ``[[x_lo, x_hi], [y_lo, y_hi]]``; required
            when the model uses boundary distances.

    Returns:
        Tensor: ``[N, node_input_size]``.
    """
    config = params.config
    w = _window_tensor(window)
    v_mean = stats.velocity_mean
    v_std = checked_std(stats.velocity_std)

    parts: list[Tensor] = [
        (w[k + 1] - w[k] - v_mean) / v_std for k in range(HISTORY)
    ]
    parts.append(T.take(params.type_embedding, np.asarray(types, dtype=np.int64)))

    if config.use_boundary_distances:
        if bounds is None:
            raise ConfigError("boundary-distance features need the domain bounds")
        current = w[HISTORY]
        bounds = np.asarray(bounds, dtype=np.float64)
        distances = T.concat([current - bounds[:, 0], bounds[:, 1] - current], axis=1)
        distances = distances / config.connectivity_radius
        if config.clip_boundary:
            distances = T.clip(distances, -1.0, 1.0)
        parts.append(distances)

    return T.concat(parts, axis=1)


def build_edge_features(
    positions: Any, senders: np.ndarray, receivers: np.ndarray, radius: float
) -> Tensor:
    """Edge inputs: ``(p_receiver - p_sender) / radius`` and its norm, ``[E, 3]``."""
    pos = T.as_tensor(positions)
    displacement = (T.take(pos, receivers) - T.take(pos, senders)) / radius
    distance = T.sqrt(T.sum(T.square(displacement), axis=1, keepdims=True))
    return T.concat([displacement, distance], axis=1)


def gns_forward(params: GnsParams, graph: ParticleGraph) -> Tensor:
    """Encode, run the interaction networks, decode normalized accelerations.

    Each interaction network updates edges then nodes with residuals:
    ``e' = e + f_e([e, n_s, n_r])`` and ``n' = n + f_n([n, sum_in e'])``.
    Nodes without incoming edges aggregate zeros.

    Returns:
        Tensor: ``[N, 2]`` normalized accelerations.
    """
    if graph.node_features.shape[1] != params.node_encoder.in_dim:
        raise ShapeError(
            f"node features have width {graph.node_features.shape[1]}, "
            f"encoder expects {params.node_encoder.in_dim}"
        )
    if graph.edge_features.shape[1] != params.edge_encoder.in_dim:
        raise ShapeError(
            f"edge features have width {graph.edge_features.shape[1]}, "
            f"encoder expects {params.edge_encoder.in_dim}"
        )

    nodes = mlp_forward(params.node_encoder, graph.node_features)
    edges = mlp_forward(params.edge_encoder, graph.edge_features)
    for edge_mlp, node_mlp in params.processor:
        edge_in = T.concat(
            [edges, T.take(nodes, graph.senders), T.take(nodes, graph.receivers)], axis=1
        )
        edges = edges + mlp_forward(edge_mlp, edge_in)
        incoming = T.segment_sum(edges, graph.receivers, graph.n_nodes)
        nodes = nodes + mlp_forward(node_mlp, T.concat([nodes, incoming], axis=1))
    return mlp_forward(params.decoder, nodes)


def euler_update(
    position: Any, velocity: Any, acc_hat: Any, stats: NormStats
) -> tuple[Tensor, Tensor]:
    """Semi-implicit Euler step in per-step units.

    ``a = denormalize(acc_hat)``, ``v' = v + a``, ``p' = p + v'``.
    """
    a = T.as_tensor(acc_hat) * checked_std(stats.acceleration_std) + stats.acceleration_mean
    v_next = T.as_tensor(velocity) + a
    return T.as_tensor(position) + v_next, v_next


def predict_acceleration(
    params: GnsParams,
    window: Any,
    types: np.ndarray,
    stats: NormStats,
    bounds: np.ndarray | None = None,
) -> Tensor:
    """Build the graph at the current positions and run the network."""
    w = _window_tensor(window)
    current = w[HISTORY]
    radius = params.config.connectivity_radius
    senders, receivers = build_graph(current.value, radius)
    graph = ParticleGraph(
        node_features=build_node_features(params, w, types, stats, bounds),
        edge_features=build_edge_features(current, senders, receivers, radius),
        senders=senders,
        receivers=receivers,
    )
    return gns_forward(params, graph)


def advance_window(
    params: GnsParams,
    window: Any,
    types: np.ndarray,
    stats: NormStats,
    bounds: np.ndarray | None = None,
) -> tuple[Tensor, Tensor]:
    """One differentiable model step.

    Returns:
        (normalized accelerations ``[N, 2]``, next positions ``[N, 2]``) with
        obstacle particles held in place.
    """
    w = _window_tensor(window)
    acc_hat = predict_acceleration(params, w, types, stats, bounds)
    current = w[HISTORY]
    moved, _ = euler_update(current, current - w[HISTORY - 1], acc_hat, stats)
    fluid = (np.asarray(types) == ParticleType.FLUID).astype(np.float64)[:, None]
    return acc_hat, moved * fluid + current * (1.0 - fluid)


def predict_step(
    params: GnsParams,
    window: np.ndarray,
    types: np.ndarray,
    stats: NormStats,
    bounds: np.ndarray | None = None,
) -> np.ndarray:
    """Next positions ``[N, 2]`` from the last six; obstacles are copied through."""
    window = np.asarray(window, dtype=np.float64)
    _, next_positions = advance_window(params, Tensor(window), types, stats, bounds)
    out = next_positions.value.copy()
    static = np.asarray(types) != ParticleType.FLUID
    out[static] = window[HISTORY][static]
    return out
