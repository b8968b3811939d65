"""Fixed-radius particle graphs built with a uniform spatial hash."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._errors import ContractError, ShapeError
from .tensor import Tensor

# 3 x 3 block of hash cells around each particle's own cell.
_NEIGHBOR_OFFSETS = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]


@dataclass
class ParticleGraph:
    """Radius graph with node and edge feature matrices.

    Attributes:
        node_features: Per-node inputs ``[N, node_dim]``.
        edge_features: Per-edge inputs ``[E, edge_dim]``.
        senders: Sender index of each edge.
        receivers: Receiver index of each edge.
    """

    node_features: Tensor
    edge_features: Tensor
    senders: np.ndarray
    receivers: np.ndarray

    def __post_init__(self) -> None:
        if len(self.senders) != len(self.receivers):
            raise ShapeError("senders and receivers have different lengths")
        if self.edge_features.shape[0] != len(self.senders):
            raise ShapeError(
                f"{self.edge_features.shape[0]} edge feature rows for {len(self.senders)} edges"
            )

    @property
    def n_nodes(self) -> int:
        return int(self.node_features.shape[0])

    @property
    def n_edges(self) -> int:
        return int(len(self.senders))


def build_graph(positions: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """All ordered pairs closer than ``radius``.

    Particles are bucketed into square cells of side ``radius`` so every
    neighbour lies in the 3 x 3 cells around a particle. A pair ``(i, j)``,
    ``i != j``, is an edge iff ``|p_i - p_j|^2 <= radius^2``; both directions
    are present.

    Args:
        positions: Positions ``[N, 2]``.
        radius: Connectivity radius.

    Returns:
        (senders, receivers), sorted by sender then receiver.
    """
    if radius <= 0.0:
        raise ContractError(f"radius must be positive: {radius}")
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    n = len(pos)
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy()

    cells = np.floor(pos / radius).astype(np.int64)
    cells -= cells.min(axis=0) - 1
    stride = int(cells[:, 1].max()) + 2
    keys = cells[:, 0] * stride + cells[:, 1]
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]

    senders: list[np.ndarray] = []
    receivers: list[np.ndarray] = []
    for dx, dy in _NEIGHBOR_OFFSETS:
        probe = (cells[:, 0] + dx) * stride + (cells[:, 1] + dy)
        start = np.searchsorted(sorted_keys, probe, side="left")
        stop = np.searchsorted(sorted_keys, probe, side="right")
        counts = stop - start
        total = int(counts.sum())
        if total == 0:
            continue
        i = np.repeat(np.arange(n), counts)
        first = np.repeat(start - (np.cumsum(counts) - counts), counts)
        j = order[first + np.arange(total)]
        d = pos[j] - pos[i]
        keep = (i != j) & (np.einsum("ij,ij->i", d, d) <= radius * radius)
        senders.append(i[keep])
        receivers.append(j[keep])

    s = np.concatenate(senders) if senders else np.zeros(0, dtype=np.int64)
    r = np.concatenate(receivers) if receivers else np.zeros(0, dtype=np.int64)
    canonical = np.lexsort((r, s))
    return s[canonical], r[canonical]


def neighbor_counts(positions: np.ndarray, radius: float) -> np.ndarray:
    """Number of neighbours within ``radius`` of each particle."""
    senders, _ = build_graph(positions, radius)
    return np.bincount(senders, minlength=len(positions))
