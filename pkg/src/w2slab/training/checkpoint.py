"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"W2SC" | u32 version (=1) | u32 header_len | header (UTF-8 JSON)
    | float32 parameter data, header order | float32 momentum buffers, same order

The header records the model config, each parameter's name/shape/dtype, the
epoch, optimizer hyperparameters and an RNG descriptor.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from ..models import Model, ModelConfig
from ..tensor import Tensor
from .optim import SGDState

MAGIC = b"W2SC"
VERSION = 1
_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict[str, np.ndarray]
    momentum: dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0
    optimizer: dict = field(default_factory=dict)
    rng: dict = field(default_factory=dict)
    version: int = VERSION

    def to_model(self) -> Model:
        return Model(self.model_config, {n: Tensor(a.copy(), requires_grad=True, name=n)
                                         for n, a in self.params.items()})

    def sgd_state(self) -> SGDState:
        return SGDState(velocity={n: a.copy() for n, a in self.momentum.items()})


def save_checkpoint(model: Model, state: SGDState | None, path, epoch: int = 0,
                    optimizer: dict | None = None, rng: dict | None = None) -> Path:
    path = Path(path)
    names = list(model.params)
    velocity = state.velocity if state is not None else {}
    has_momentum = bool(velocity) and all(n in velocity for n in names)
    header = {
        "model_config": model.config.to_dict(),
        "params": [{"name": n, "shape": list(model.params[n].shape), "dtype": "float32"} for n in names],
        "momentum": has_momentum,
        "epoch": int(epoch),
        "optimizer": optimizer or {},
        "rng": rng or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n].data, dtype=_DTYPE).tobytes())
        if has_momentum:
            for n in names:
                fh.write(np.ascontiguousarray(velocity[n], dtype=_DTYPE).tobytes())
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise CheckpointError(f"truncated checkpoint {path}: {len(raw)} bytes")
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r} in {path}")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    if len(raw) < 12 + hlen:
        raise CheckpointError(f"truncated checkpoint header in {path}")
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header in {path}: {exc}") from exc
    offset = 12 + hlen
    specs = header["params"]
    sections = [("params", {})] + ([("momentum", {})] if header.get("momentum") else [])
    for _, store in sections:
        for spec in specs:
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            nbytes = count * _DTYPE.itemsize
            if offset + nbytes > len(raw):
                raise CheckpointError(f"truncated checkpoint data at {spec['name']} in {path}")
            arr = np.frombuffer(raw, dtype=_DTYPE, count=count, offset=offset)
            store[spec["name"]] = arr.astype(np.float32).reshape(spec["shape"])
            offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{len(raw) - offset} trailing bytes in {path}")
    return Checkpoint(
        model_config=ModelConfig.from_dict(header["model_config"]),
        params=sections[0][1],
        momentum=sections[1][1] if len(sections) > 1 else {},
        epoch=header.get("epoch", 0),
        optimizer=header.get("optimizer", {}),
        rng=header.get("rng", {}),
        version=version,
    )


def load_into(model: Model, ckpt: Checkpoint) -> Model:
    """Copy checkpoint parameters into ``model``; rejects the first shape or name mismatch."""
    for name, p in model.params.items():
        if name not in ckpt.params:
            raise CheckpointError(f"checkpoint lacks parameter {name!r}")
        if ckpt.params[name].shape != p.shape:
            raise CheckpointError(f"shape mismatch for {name!r}: model {list(p.shape)}, "
                                  f"checkpoint {list(ckpt.params[name].shape)}")
    extra = set(ckpt.params) - set(model.params)
    if extra:
        raise CheckpointError(f"checkpoint has unexpected parameters {sorted(extra)}")
    for name, p in model.params.items():
        p.data = ckpt.params[name].astype(p.dtype, copy=True)
    return model
