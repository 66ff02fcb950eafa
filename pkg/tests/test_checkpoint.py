"""Binary checkpoint round-trips and corruption detection."""

import json
import struct

import numpy as np
import pytest

from hgnet.checkpoint import (
    MAGIC,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from hgnet.model import init_params, named_bn_states, named_parameters
from hgnet.training import TrainConfig, TrainState


def _saved(tmp_path, tiny_trained, name="model.hgnet"):
    params, state, optimizer, config = tiny_trained
    path = tmp_path / name
    save_checkpoint(path, params, state, optimizer, config, rng={"scheme": "counter", "seed": 5})
    return path, params, state, optimizer, config


def test_round_trip_is_bit_exact(tmp_path, tiny_trained):
    path, params, state, optimizer, config = _saved(tmp_path, tiny_trained)
    loaded = load_checkpoint(path)
    for (name, orig), (name2, back) in zip(
        named_parameters(params), named_parameters(loaded.params)
    ):
        assert name == name2
        np.testing.assert_array_equal(orig.data, back.data)
    for (_, s_orig), (_, s_back) in zip(
        named_bn_states(params), named_bn_states(loaded.params)
    ):
        np.testing.assert_array_equal(s_orig.mean, s_back.mean)
        np.testing.assert_array_equal(s_orig.var, s_back.var)
        assert s_orig.batches == s_back.batches
    for sq_orig, sq_back in zip(optimizer.state, loaded.optimizer.state):
        np.testing.assert_array_equal(sq_orig, sq_back)
    assert loaded.state.to_dict() == state.to_dict()
    assert loaded.train_config.to_dict() == config.to_dict()
    assert loaded.rng == {"scheme": "counter", "seed": 5}


def test_save_then_save_is_byte_identical(tmp_path, tiny_trained):
    p1, *_ = _saved(tmp_path, tiny_trained, "a.hgnet")
    p2, *_ = _saved(tmp_path, tiny_trained, "b.hgnet")
    assert p1.read_bytes() == p2.read_bytes()


def test_payload_corruption_is_detected(tmp_path, tiny_trained):
    path, *_ = _saved(tmp_path, tiny_trained)
    blob = bytearray(path.read_bytes())
    blob[-20] ^= 0xFF  # flip one payload byte
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)


def test_bad_magic_is_rejected(tmp_path, tiny_trained):
    path, *_ = _saved(tmp_path, tiny_trained)
    blob = bytearray(path.read_bytes())
    blob[0] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_unknown_version_is_rejected(tmp_path, tiny_trained):
    path, *_ = _saved(tmp_path, tiny_trained)
    blob = bytearray(path.read_bytes())
    blob[5:9] = struct.pack("<I", 99)
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_truncated_file_is_rejected(tmp_path, tiny_trained):
    path, *_ = _saved(tmp_path, tiny_trained)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_tampered_shape_is_rejected(tmp_path, tiny_trained):
    path, *_ = _saved(tmp_path, tiny_trained)
    blob = path.read_bytes()
    hlen = struct.unpack("<Q", blob[9:17])[0]
    header = json.loads(blob[17 : 17 + hlen])
    header["tensors"][0]["shape"][0] += 1
    raw = json.dumps(header).encode()
    path.write_bytes(blob[:9] + struct.pack("<Q", len(raw)) + raw + blob[17 + hlen :])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_model_only_checkpoint(tmp_path, tiny_config):
    # No optimizer, no train config: still loads, optimizer state fresh.
    params = init_params(tiny_config, seed=1)
    # BN stats must exist for eval-mode use after reload.
    from hgnet.model import stacked_forward
    from hgnet.tensor import Tensor

    x = Tensor(np.random.default_rng(0).standard_normal((2, 3, 32, 32)).astype(np.float32))
    stacked_forward(x, params, "train")
    path = tmp_path / "bare.hgnet"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert loaded.train_config is None
    assert loaded.state.iteration == 0
    a = stacked_forward(x, params, "eval")[-1].data
    b = stacked_forward(x, loaded.params, "eval")[-1].data
    np.testing.assert_array_equal(a, b)


def test_float64_parameters_are_rejected(tmp_path, tiny_config):
    params = init_params(tiny_config, seed=0, dtype=np.float64)
    with pytest.raises(ValueError, match="float32"):
        save_checkpoint(tmp_path / "bad.hgnet", params)


def test_state_round_trips_negative_infinity(tmp_path, tiny_trained):
    params, _, optimizer, config = tiny_trained
    state = TrainState(iteration=3, lr=2.5e-4, best_val=float("-inf"))
    path = tmp_path / "inf.hgnet"
    save_checkpoint(path, params, state, optimizer, config)
    loaded = load_checkpoint(path)
    assert loaded.state.best_val == float("-inf")
    assert loaded.state.iteration == 3
