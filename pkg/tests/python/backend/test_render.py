"""Tests for the render module."""

import numpy as np

from gnslab.backend.dataset import scaled_bounds
from gnslab.backend.evaluation import GroundTruthModel, neighbor_stats, rollout
from gnslab.backend.render import render_curves, render_frame, render_neighbors, render_rollout

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def is_png(path) -> bool:
    return path.exists() and path.read_bytes()[:8] == PNG_SIGNATURE


class TestRender:
    """Test PNG output."""

    def test_frame(self, temp_dir, toy_trajectory):
        """Test a single frame on a tall domain with a guideline."""
        path = render_frame(
            temp_dir / "sub" / "frame.png",
            toy_trajectory.frames[0],
            toy_trajectory.types,
            scaled_bounds((32, 64)),
            title="t",
            reference=toy_trajectory.frames[1],
            guideline_y=0.9,
        )
        assert is_png(path)

    def test_rollout_frames(self, temp_dir, toy_trajectory, toy_stats):
        """Test that every requested step and the last one are written."""
        result = rollout(GroundTruthModel(toy_stats), toy_trajectory, 24)
        paths = render_rollout(result, temp_dir, every=10)
        assert [p.name for p in paths] == [
            "frame_0000.png",
            "frame_0010.png",
            "frame_0020.png",
            "frame_0023.png",
        ]
        assert all(is_png(p) for p in paths)

    def test_empty_rollout(self, temp_dir, toy_trajectory, toy_stats):
        """Test that a zero-step rollout renders nothing."""
        result = rollout(GroundTruthModel(toy_stats), toy_trajectory, 0)
        assert render_rollout(result, temp_dir) == []

    def test_curves_and_neighbors(self, temp_dir, toy_trajectory):
        """Test the curve and neighbour plots."""
        summary = {"mean": np.array([1.0, 2.0]), "min": np.array([0.5, 1.0]),
                   "max": np.array([2.0, 3.0])}
        assert is_png(render_curves(temp_dir / "mse.png", {"zero": summary}, ylabel="MSE"))
        stats = neighbor_stats([toy_trajectory], radius=0.1)
        assert is_png(render_neighbors(temp_dir / "neighbors.png", stats))
