"""Tests for PMGK checkpoint files."""

import struct

import numpy as np
import pytest

from pmgan.core.errors import (
    ArtifactNotFoundError,
    FormatError,
    TruncatedFileError,
    VersionMismatchError,
)
from pmgan.engine.optim import AdamState
from pmgan.models.checkpoint import Checkpoint, TrainingState, load_checkpoint, save_checkpoint
from pmgan.models.network import SingleHeadParams
from pmgan.schemas.configs import LossWeights, TrainConfig


@pytest.fixture
def checkpoint(tiny_params):
    """Resumable checkpoint with one single head and advanced optimizer state."""
    rng = np.random.default_rng(99)
    rng.normal(size=10)
    d_opt = AdamState.for_params(tiny_params.discriminator_arrays(), learning_rate=1e-3)
    g_opt = AdamState.for_params(tiny_params.generator_arrays(), learning_rate=1e-3)
    d_opt.step_count = 3
    d_opt.first_moment["d.bias"] = np.array(0.25)
    return Checkpoint(
        params=tiny_params,
        weights=LossWeights(w1=0.2, w2=0.8),
        heads={"infrared": SingleHeadParams.initialize(tiny_params.spec, np.random.default_rng(1))},
        train_config=TrainConfig(epochs=3, batch_size=4),
        state=TrainingState(
            epoch=2,
            rng_state=rng.bit_generator.state,
            d_optimizer=d_opt,
            g_optimizer=g_opt,
            log=[{"epoch": 1, "loss_g": 0.5}],
        ),
    )


class TestCheckpointRoundTrip:
    """save_checkpoint followed by load_checkpoint."""

    def test_parameters_survive(self, tmp_path, checkpoint):
        """Every parameter and head comes back bit-identical."""
        path = save_checkpoint(tmp_path / "model.pmgk", checkpoint)
        loaded = load_checkpoint(path)
        for name, value in checkpoint.params.arrays().items():
            np.testing.assert_array_equal(loaded.params.arrays()[name], value)
        np.testing.assert_array_equal(
            loaded.heads["infrared"].weights, checkpoint.heads["infrared"].weights
        )
        assert loaded.params.spec == checkpoint.params.spec
        assert loaded.weights == checkpoint.weights
        assert loaded.train_config == checkpoint.train_config

    def test_training_state_survives(self, tmp_path, checkpoint):
        """Epoch, optimizer moments and the rng stream are restored."""
        loaded = load_checkpoint(save_checkpoint(tmp_path / "model.pmgk", checkpoint))
        state = loaded.state
        assert state.epoch == 2
        assert state.log == checkpoint.state.log
        assert state.d_optimizer.step_count == 3
        assert state.d_optimizer.first_moment["d.bias"] == 0.25

        original = np.random.default_rng(0)
        original.bit_generator.state = checkpoint.state.rng_state
        restored = np.random.default_rng(0)
        restored.bit_generator.state = state.rng_state
        np.testing.assert_array_equal(original.normal(size=5), restored.normal(size=5))

    def test_without_state(self, tmp_path, checkpoint):
        """Parameter-only checkpoints load with no training state."""
        checkpoint.state = None
        loaded = load_checkpoint(save_checkpoint(tmp_path / "model.pmgk", checkpoint))
        assert loaded.state is None


class TestCheckpointErrors:
    """Malformed files are reported by kind."""

    def test_missing_file(self, tmp_path):
        """A path that does not exist."""
        with pytest.raises(ArtifactNotFoundError):
            load_checkpoint(tmp_path / "absent.pmgk")

    def test_wrong_magic(self, tmp_path, checkpoint):
        """Any other four leading bytes."""
        path = save_checkpoint(tmp_path / "model.pmgk", checkpoint)
        path.write_bytes(b"PMFD" + path.read_bytes()[4:])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path, checkpoint):
        """A version field other than 1."""
        path = save_checkpoint(tmp_path / "model.pmgk", checkpoint)
        blob = path.read_bytes()
        path.write_bytes(blob[:4] + struct.pack("<I", 2) + blob[8:])
        with pytest.raises(VersionMismatchError):
            load_checkpoint(path)

    def test_truncated_file(self, tmp_path, checkpoint):
        """Cutting the file short anywhere after the header."""
        path = save_checkpoint(tmp_path / "model.pmgk", checkpoint)
        blob = path.read_bytes()
        for cut in (6, 20, len(blob) // 2, len(blob) - 1):
            path.write_bytes(blob[:cut])
            with pytest.raises(TruncatedFileError):
                load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path, checkpoint):
        """Extra data after the last record."""
        path = save_checkpoint(tmp_path / "model.pmgk", checkpoint)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_undecodable_tensor_name(self, tmp_path, checkpoint):
        """A tensor name that is not UTF-8 is a format error."""
        path = save_checkpoint(tmp_path / "model.pmgk", checkpoint)
        blob = bytearray(path.read_bytes())
        (config_length,) = struct.unpack("<I", blob[8:12])
        # header, config block, tensor count, name length
        blob[12 + config_length + 8] = 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_training_state_missing_a_key(self, tmp_path, checkpoint):
        """A state block without its epoch is a format error, not a KeyError."""
        path = save_checkpoint(tmp_path / "model.pmgk", checkpoint)
        blob = path.read_bytes()
        assert blob.count(b'"epoch":') >= 1
        path.write_bytes(blob.replace(b'"epoch":', b'"epoxh":', 1))
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_malformed_head_name(self, tmp_path, checkpoint):
        """Head tensors must be named head.<mode>.<param>."""
        path = save_checkpoint(tmp_path / "model.pmgk", checkpoint)
        blob = path.read_bytes()
        old = b"head.infrared.s.bias"
        assert old in blob
        path.write_bytes(blob.replace(old, b"head.infraredxs_bias", 1))
        with pytest.raises(FormatError):
            load_checkpoint(path)
