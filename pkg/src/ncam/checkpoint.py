"""Versioned binary checkpoint container.

Layout: magic "NCAM1", u32 tensor count, then per tensor a length-prefixed
name, a dtype tag, the shape, and the little-endian payload; finally a
u32-length-prefixed JSON blob holding the model config and metadata
(training step, optimizer counter, rng state, training config, dataset
spec).  Parameter bytes round-trip exactly, so a reloaded model reproduces
forward outputs bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"NCAM1"

_TAG_FOR = {np.dtype("float32"): 1, np.dtype("float64"): 2, np.dtype("int64"): 3}
_DTYPE_FOR = {1: "<f4", 2: "<f8", 3: "<i8"}


def _write_tensor(out: bytearray, name: str, arr: np.ndarray) -> None:
    nb = name.encode("utf-8")
    arr = np.asarray(arr, order="C")  # keeps 0-d shapes, unlike ascontiguousarray
    if arr.dtype not in _TAG_FOR:
        raise ValueError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
    out += struct.pack("<H", len(nb)) + nb
    out += struct.pack("<BB", _TAG_FOR[arr.dtype], arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    out += arr.astype(_DTYPE_FOR[_TAG_FOR[arr.dtype]]).tobytes()


def _read_tensor(buf: memoryview, pos: int):
    (nlen,) = struct.unpack_from("<H", buf, pos)
    pos += 2
    name = bytes(buf[pos:pos + nlen]).decode("utf-8")
    pos += nlen
    tag, ndim = struct.unpack_from("<BB", buf, pos)
    pos += 2
    shape = struct.unpack_from(f"<{ndim}I", buf, pos)
    pos += 4 * ndim
    dt = np.dtype(_DTYPE_FOR[tag])
    count = int(np.prod(shape)) if ndim else 1
    arr = np.frombuffer(buf, dtype=dt, count=count, offset=pos).reshape(shape)
    pos += count * dt.itemsize
    return name, arr.astype(dt.newbyteorder("=")), pos


@dataclass
class Checkpoint:
    model_config: dict
    params: dict                      # name -> ndarray
    opt_state: dict = field(default_factory=dict)   # name -> ndarray
    meta: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        out = bytearray(MAGIC)
        entries = [(f"param.{k}", v) for k, v in sorted(self.params.items())]
        entries += [(f"opt.{k}", v) for k, v in sorted(self.opt_state.items())]
        out += struct.pack("<I", len(entries))
        for name, arr in entries:
            _write_tensor(out, name, np.asarray(arr))
        blob = json.dumps({"model_config": self.model_config, "meta": self.meta},
                          sort_keys=True).encode("utf-8")
        out += struct.pack("<I", len(blob)) + blob
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if data[:5] != MAGIC:
            raise ValueError("not an NCAM checkpoint (bad magic)")
        buf = memoryview(data)
        (count,) = struct.unpack_from("<I", buf, 5)
        pos = 9
        params, opt = {}, {}
        for _ in range(count):
            name, arr, pos = _read_tensor(buf, pos)
            if name.startswith("param."):
                params[name[6:]] = arr
            elif name.startswith("opt."):
                opt[name[4:]] = arr
            else:
                raise ValueError(f"unknown tensor section for {name!r}")
        (blen,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        blob = json.loads(bytes(buf[pos:pos + blen]).decode("utf-8"))
        return cls(model_config=blob["model_config"], params=params,
                   opt_state=opt, meta=blob.get("meta", {}))

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())

    def build_model(self):
        from .model import ModelConfig, NcamModel

        model = NcamModel(ModelConfig.from_dict(self.model_config))
        named = model.named_params()
        missing = sorted(set(named) - set(self.params))
        extra = sorted(set(self.params) - set(named))
        if missing or extra:
            raise ValueError(f"checkpoint/model mismatch: missing {missing}, extra {extra}")
        for name, tensor in named.items():
            arr = self.params[name]
            if tuple(arr.shape) != tuple(tensor.shape):
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{arr.shape} vs {tensor.shape}")
            tensor.data = arr.astype(tensor.dtype, copy=True)
            tensor.grad = None
        return model


def snapshot(model, optimizer=None, meta=None) -> Checkpoint:
    """Freeze current parameter values (and optimizer state) into a Checkpoint."""
    params = {k: np.array(v.data) for k, v in model.named_params().items()}
    opt = optimizer.state_tensors() if optimizer is not None else {}
    return Checkpoint(model_config=model.cfg.to_dict(), params=params,
                      opt_state=opt, meta=dict(meta or {}))
