"""Binary checkpoint persistence.

Layout: the magic string "HGNET", a uint32 format version, a uint64
header length, a JSON header, then raw little-endian float32 tensor
data back to back. The header records the model configuration, train
config and loop state, the optimizer descriptor, the rng scheme, batch
counters for the normalization statistics, a CRC-32 of the payload,
and the name/shape/offset of every stored tensor. Round-trips are
bit-exact for parameters, running statistics, and optimizer state.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import ModelConfig, init_params, named_bn_states, named_parameters
from .optim import RMSprop
from .training import TrainConfig, TrainState

MAGIC = b"HGNET"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """A structurally invalid or corrupt checkpoint file."""


@dataclass
class LoadedCheckpoint:
    params: object  # StackedModelParams
    state: TrainState
    optimizer: RMSprop
    train_config: TrainConfig | None
    rng: dict


def _collect_tensors(params, optimizer):
    """All persistable arrays in a stable order: weights, bn stats, opt."""
    items = []
    for name, tensor in named_parameters(params):
        items.append((name, tensor.data))
    for name, bn_state in named_bn_states(params):
        items.append((f"{name}.running_mean", bn_state.mean))
        items.append((f"{name}.running_var", bn_state.var))
    if optimizer is not None:
        for (name, _), sq in zip(named_parameters(params), optimizer.state):
            items.append((f"sq.{name}", sq))
    return items


def save_checkpoint(path, params, state=None, optimizer=None, train_config=None, rng=None):
    """Serialize a model (and optionally its training run) to disk."""
    state = state or TrainState()
    tensors = _collect_tensors(params, optimizer)
    entries = []
    payload = bytearray()
    for name, arr in tensors:
        if arr.dtype != np.float32:
            raise ValueError(
                f"checkpoint stores little-endian float32 tensors; '{name}' is {arr.dtype}"
            )
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload.extend(data)
    header = {
        "model_config": params.config.to_dict(),
        "train_config": train_config.to_dict() if train_config else None,
        "train_state": state.to_dict(),
        "optimizer": None
        if optimizer is None
        else {"kind": "rmsprop", "alpha": optimizer.alpha, "epsilon": optimizer.epsilon, "lr": optimizer.lr},
        "rng": rng or {"scheme": "counter", "seed": None},
        "bn_batches": [int(s.batches) for _, s in named_bn_states(params)],
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(bytes(payload)),
        "tensors": entries,
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load_checkpoint(path):
    """Reconstruct a checkpoint; raises CheckpointError on corruption."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 12:
        raise CheckpointError(f"{path}: truncated file ({len(raw)} bytes)")
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:5]!r}, not a checkpoint")
    version, header_len = struct.unpack_from("<IQ", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    start = len(MAGIC) + 12
    if start + header_len > len(raw):
        raise CheckpointError(f"{path}: header length {header_len} exceeds file size")
    try:
        header = json.loads(raw[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from None
    payload = raw[start + header_len :]
    if len(payload) != header.get("payload_bytes"):
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, header says {header.get('payload_bytes')}"
        )
    if zlib.crc32(payload) != header.get("payload_crc32"):
        raise CheckpointError(f"{path}: payload checksum mismatch, file is corrupt")

    def read_tensor(entry):
        size = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        off = entry["offset"]
        if off + 4 * size > len(payload):
            raise CheckpointError(f"{path}: tensor '{entry['name']}' overruns the payload")
        arr = np.frombuffer(payload, dtype="<f4", count=size, offset=off)
        return arr.reshape(entry["shape"]).copy()

    stored = {e["name"]: read_tensor(e) for e in header["tensors"]}

    config = ModelConfig.from_dict(header["model_config"])
    params = init_params(config, seed=0)
    for name, tensor in named_parameters(params):
        if name not in stored:
            raise CheckpointError(f"{path}: missing parameter tensor '{name}'")
        if stored[name].shape != tensor.shape:
            raise CheckpointError(
                f"{path}: tensor '{name}' has shape {stored[name].shape}, expected {tensor.shape}"
            )
        tensor.data[...] = stored[name]
    bn_batches = header.get("bn_batches", [])
    bn_items = list(named_bn_states(params))
    if len(bn_batches) != len(bn_items):
        raise CheckpointError(f"{path}: bn_batches length mismatch")
    for (name, bn_state), batches in zip(bn_items, bn_batches):
        bn_state.mean[...] = stored[f"{name}.running_mean"]
        bn_state.var[...] = stored[f"{name}.running_var"]
        bn_state.batches = int(batches)

    opt_desc = header.get("optimizer")
    optimizer = None
    if opt_desc is not None:
        if opt_desc.get("kind") != "rmsprop":
            raise CheckpointError(f"{path}: unknown optimizer kind {opt_desc.get('kind')!r}")
        optimizer = RMSprop(
            [t for _, t in named_parameters(params)],
            lr=opt_desc["lr"],
            alpha=opt_desc["alpha"],
            epsilon=opt_desc["epsilon"],
        )
        for (name, _), sq in zip(named_parameters(params), optimizer.state):
            key = f"sq.{name}"
            if key not in stored:
                raise CheckpointError(f"{path}: missing optimizer tensor '{key}'")
            sq[...] = stored[key]

    train_config = TrainConfig.from_dict(header["train_config"]) if header.get("train_config") else None
    state = TrainState.from_dict(header["train_state"])
    return LoadedCheckpoint(
        params=params,
        state=state,
        optimizer=optimizer,
        train_config=train_config,
        rng=header.get("rng", {}),
    )
