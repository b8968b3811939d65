"""Exact optimal transport between particle sets (earth mover's distance)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import ot
from scipy.spatial.distance import cdist

from .._errors import ContractError, TransportError

MARGINAL_TOLERANCE = 1e-9
_MAX_ITERATIONS = 1_000_000


@dataclass
class TransportProblem:
    """Balanced transport between weights ``r`` and ``c`` under costs ``M``.

    Attributes:
        r: Source weights, summing to one.
        c: Target weights, summing to one.
        M: Cost matrix ``[len(r), len(c)]``.
        plan: Optimal plan once solved.
    """

    r: np.ndarray
    c: np.ndarray
    M: np.ndarray
    plan: np.ndarray | None = None

    @classmethod
    def uniform(cls, source: np.ndarray, target: np.ndarray) -> TransportProblem:
        """Uniform weights and Euclidean costs between two point sets."""
        source = np.asarray(source, dtype=np.float64).reshape(-1, 2)
        target = np.asarray(target, dtype=np.float64).reshape(-1, 2)
        if len(source) == 0 or len(target) == 0:
            raise ContractError("transport needs non-empty point sets")
        return cls(
            r=np.full(len(source), 1.0 / len(source)),
            c=np.full(len(target), 1.0 / len(target)),
            M=cdist(source, target, metric="euclidean"),
        )

    def solve(self) -> np.ndarray:
        """Solve with the network simplex and verify the plan.

        Raises:
            TransportError: The plan violates the marginals or has negative mass.
        """
        plan = ot.emd(self.r, self.c, self.M, numItermax=_MAX_ITERATIONS)
        if np.any(plan < 0.0):
            raise TransportError("transport plan has negative entries")
        row_gap = np.abs(plan.sum(axis=1) - self.r).max()
        col_gap = np.abs(plan.sum(axis=0) - self.c).max()
        if max(row_gap, col_gap) > MARGINAL_TOLERANCE:
            raise TransportError(
                f"transport plan misses its marginals by {max(row_gap, col_gap):.3e}"
            )
        self.plan = plan
        return plan

    @property
    def cost(self) -> float:
        plan = self.plan if self.plan is not None else self.solve()
        return float(np.sum(plan * self.M))


def emd(pred: np.ndarray, gt: np.ndarray) -> float:
    """Earth mover's distance between two equally weighted point sets."""
    return TransportProblem.uniform(pred, gt).cost
