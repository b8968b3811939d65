"""Tests for the checkpoint module."""

import numpy as np
import pytest

from gnslab._errors import DataError, HeaderError
from gnslab.backend.checkpoint import (
    CKPT_HEADER_STRUCT,
    CKPT_MAGIC,
    Checkpoint,
    inspect_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from gnslab.backend.gns import init_gns, predict_step
from gnslab.backend.nn import AdamState


@pytest.fixture
def checkpoint(tiny_model_config, toy_stats) -> Checkpoint:
    """A checkpoint with non-trivial optimizer moments."""
    params = init_gns(tiny_model_config, rng=4)
    adam = AdamState.zeros_like(params.parameters())
    rng = np.random.default_rng(0)
    for m, v in zip(adam.first_moment, adam.second_moment):
        m[...] = rng.normal(size=m.shape)
        v[...] = rng.uniform(size=v.shape)
    adam.step_count = 17
    return Checkpoint(params=params, stats=toy_stats, step=17, variant="1sn", adam=adam, loss=0.25)


class TestCheckpointFiles:
    """Test saving and loading checkpoints."""

    def test_save_load_preserves_digest(self, temp_dir, checkpoint):
        """Test that a loaded checkpoint is bit-identical to the saved one."""
        path = save_checkpoint(temp_dir / "ck.gnsc", checkpoint)
        loaded = load_checkpoint(path)
        assert loaded.digest() == checkpoint.digest()
        assert loaded.step == 17
        assert loaded.variant == "1sn"
        assert loaded.loss == 0.25
        assert loaded.path == path
        assert loaded.params.config == checkpoint.params.config
        np.testing.assert_array_equal(
            loaded.stats.acceleration.m2, checkpoint.stats.acceleration.m2
        )
        assert loaded.adam.step_count == 17

    def test_loaded_model_predicts_identically(
        self, temp_dir, checkpoint, toy_trajectory, toy_stats
    ):
        """Test that predictions survive the round trip exactly."""
        loaded = load_checkpoint(save_checkpoint(temp_dir / "ck.gnsc", checkpoint))
        window = toy_trajectory.frames[:6]
        bounds = toy_trajectory.bounds
        a = predict_step(checkpoint.params, window, toy_trajectory.types, toy_stats, bounds)
        b = predict_step(loaded.params, window, toy_trajectory.types, loaded.stats, bounds)
        np.testing.assert_array_equal(a, b)

    def test_without_optimizer_state(self, temp_dir, checkpoint):
        """Test checkpoints that carry weights only."""
        checkpoint.adam = None
        loaded = load_checkpoint(save_checkpoint(temp_dir / "ck.gnsc", checkpoint))
        assert loaded.adam is None
        assert loaded.digest() == checkpoint.digest()

    def test_bad_magic(self, temp_dir, checkpoint):
        """Test that a foreign file is a header error."""
        path = save_checkpoint(temp_dir / "ck.gnsc", checkpoint)
        path.write_bytes(b"GNST" + path.read_bytes()[4:])
        with pytest.raises(HeaderError):
            load_checkpoint(path)

    def test_truncated(self, temp_dir, checkpoint):
        """Test that a short payload is a data error."""
        path = save_checkpoint(temp_dir / "ck.gnsc", checkpoint)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(DataError):
            load_checkpoint(path)


class TestDigest:
    """Test checkpoint digests."""

    def test_changes_with_weights(self, checkpoint):
        """Test that any weight change alters the digest."""
        before = checkpoint.digest()
        checkpoint.params.decoder.layers[-1][1].value[0] += 1e-12
        assert checkpoint.digest() != before

    def test_ignores_variant_label(self, checkpoint):
        """Test that the digest covers state, not labels."""
        before = checkpoint.digest()
        checkpoint.variant = "1s"
        assert checkpoint.digest() == before


class TestInspectCheckpoint:
    """Test non-raising inspection."""

    def test_valid(self, temp_dir, checkpoint):
        """Test inspection of a valid checkpoint."""
        path = save_checkpoint(temp_dir / "ck.gnsc", checkpoint)
        result = inspect_checkpoint(path)
        assert result.is_checkpoint is True
        assert result.header_ok is True
        assert result.step == 17
        assert result.variant == "1sn"
        assert result.has_optimizer is True
        assert result.n_tensors == len(checkpoint.params.parameters())
        assert result.n_values == sum(t.size for t in checkpoint.params.parameters())
        assert result.config["latent_size"] == 8

    def test_not_a_checkpoint(self, temp_dir):
        """Test a file with another magic number."""
        path = temp_dir / "x.bin"
        path.write_bytes(b"\x00" * 32)
        result = inspect_checkpoint(path)
        assert result.is_checkpoint is False
        assert result.reason == "Invalid magic number"

    def test_corrupt_metadata(self, temp_dir):
        """Test a valid header followed by garbage metadata."""
        path = temp_dir / "bad.gnsc"
        path.write_bytes(CKPT_HEADER_STRUCT.pack(CKPT_MAGIC, 1, 4) + b"\xff\xfe{{")
        result = inspect_checkpoint(path)
        assert result.is_checkpoint is True
        assert result.header_ok is False

    def test_missing(self, temp_dir):
        """Test a path that does not exist."""
        assert inspect_checkpoint(temp_dir / "none.gnsc").reason == "Not a file"
