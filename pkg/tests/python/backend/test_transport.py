"""Tests for the transport module."""

from itertools import permutations

import numpy as np
import pytest

from gnslab._errors import ContractError
from gnslab.backend.transport import TransportProblem, emd


def brute_force_emd(a: np.ndarray, b: np.ndarray) -> float:
    """Best one-to-one matching over all n! assignments."""
    n = len(a)
    return min(
        float(np.mean(np.linalg.norm(a - b[list(p)], axis=1))) for p in permutations(range(n))
    )


class TestEmd:
    """Test the earth mover's distance."""

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force(self, seed):
        """Test equal-size sets against exhaustive matching."""
        rng = np.random.default_rng(seed)
        a = rng.uniform(size=(6, 2))
        b = rng.uniform(size=(6, 2))
        assert emd(a, b) == pytest.approx(brute_force_emd(a, b), abs=1e-12)

    def test_identical_sets(self):
        """Test that a set is at distance zero from itself."""
        a = np.random.default_rng(0).uniform(size=(20, 2))
        assert emd(a, a) == pytest.approx(0.0, abs=1e-15)

    def test_permutation_invariant(self):
        """Test that particle order does not matter."""
        rng = np.random.default_rng(1)
        a = rng.uniform(size=(15, 2))
        b = rng.uniform(size=(15, 2))
        perm = rng.permutation(15)
        assert emd(a[perm], b) == pytest.approx(emd(a, b), abs=1e-12)

    def test_translation(self):
        """Test that a rigid shift costs exactly its length."""
        a = np.random.default_rng(2).uniform(size=(25, 2))
        shift = np.array([0.03, -0.04])
        assert emd(a, a + shift) == pytest.approx(0.05, rel=1e-9)

    def test_symmetric(self):
        """Test emd(a, b) == emd(b, a)."""
        rng = np.random.default_rng(3)
        a = rng.uniform(size=(10, 2))
        b = rng.uniform(size=(14, 2))
        assert emd(a, b) == pytest.approx(emd(b, a), abs=1e-12)

    def test_unequal_sizes(self):
        """Test splitting mass between sets of different sizes."""
        a = np.array([[0.0, 0.0]])
        b = np.array([[1.0, 0.0], [0.0, 2.0]])
        assert emd(a, b) == pytest.approx(1.5)

    def test_empty_set(self):
        """Test that empty sets are refused."""
        with pytest.raises(ContractError):
            emd(np.zeros((0, 2)), np.zeros((3, 2)))


class TestTransportProblem:
    """Test the underlying transport problem."""

    def test_plan_marginals(self):
        """Test that the plan moves all mass with uniform marginals."""
        rng = np.random.default_rng(4)
        problem = TransportProblem.uniform(rng.uniform(size=(7, 2)), rng.uniform(size=(5, 2)))
        plan = problem.solve()
        np.testing.assert_allclose(plan.sum(axis=1), np.full(7, 1 / 7))
        np.testing.assert_allclose(plan.sum(axis=0), np.full(5, 1 / 5))
        assert np.all(plan >= 0.0)
        assert problem.cost == pytest.approx(float(np.sum(plan * problem.M)))
