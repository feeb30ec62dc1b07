"""Parameter registry with seeded initialization and checkpoint IO.

Checkpoint format: magic ``TGCKPT01``, little-endian uint32 header length,
UTF-8 JSON header {"version", "meta", "manifest": [{"name", "shape"}]},
then the raw float64 little-endian buffers concatenated in manifest order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor

MAGIC = b"TGCKPT01"
CHECKPOINT_VERSION = 1


class ParamStore:
    """Named trainable tensors; each name registers exactly once."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}

    def register(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"parameter registered twice: {name}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        return t

    def xavier(self, name: str, shape) -> np.ndarray:
        """Xavier-uniform sample (raw array; register separately if needed)."""
        fan_in, fan_out = shape[0], shape[1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return self.rng.uniform(-bound, bound, size=shape)

    def orthogonal(self, name: str, shape) -> np.ndarray:
        a = self.rng.normal(size=shape)
        q, r = np.linalg.qr(a)
        q *= np.sign(np.diag(r))
        return q[: shape[0], : shape[1]]

    def linear(self, name: str, fan_in: int, fan_out: int):
        w = self.register(f"{name}.W", self.xavier(name, (fan_in, fan_out)))
        b = self.zeros(f"{name}.b", (fan_out,))
        return w, b

    def mlp(self, name: str, sizes):
        """Chain of linear layers, e.g. sizes=(9, 32, 32) gives two layers."""
        return [self.linear(f"{name}.{i}", sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]

    def zeros(self, name: str, shape) -> Tensor:
        return self.register(name, np.zeros(shape))

    def embedding(self, name: str, rows: int, dim: int) -> Tensor:
        return self.register(name, self.rng.normal(scale=0.1, size=(rows, dim)))

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, t in self.params.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {k}: {a.shape} vs {t.data.shape}")
            t.data = a


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None):
    manifest = [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()]
    header = json.dumps(
        {"version": CHECKPOINT_VERSION, "meta": meta or {}, "manifest": manifest},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for k, _ in ((m["name"], m) for m in manifest):
            fh.write(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes())


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"not a checkpoint file: {path}")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off : off + hlen].decode("utf-8"))
    if header["version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header['version']}")
    off += hlen
    arrays = {}
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arrays[entry["name"]] = (
            np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        )
        off += count * 8
    return header["meta"], arrays
