"""Named parameter store, Adam updates, and binary checkpoints.

Checkpoint layout (all integers little-endian):

    magic   4 bytes  b"SPA1"
    version u32      currently 1
    meta    u32 byte length, then UTF-8 JSON (architecture config,
            schedule, frozen-parameter paths, code version)
    params  u32 record count, then records
    state   u32 record count, then records (Adam moments as
            "adam.m/<path>" / "adam.v/<path>", step as "adam.step")

    record  u32 path byte length, UTF-8 path,
            u32 rank, u32 dims[rank],
            raw float64 little-endian data

Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO

import numpy as np

from .autodiff import Value
from .errors import ContractError, DataError

MAGIC = b"SPA1"
VERSION = 1


class ParamStore:
    """Map from path to trainable Value plus Adam optimizer state."""

    def __init__(self):
        self.params: dict[str, Value] = {}
        self.frozen: set[str] = set()
        self.step = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def add(self, path: str, data: np.ndarray, frozen: bool = False) -> Value:
        if path in self.params:
            raise ContractError(f"duplicate parameter path {path!r}")
        val = Value(np.asarray(data, dtype=np.float64))
        self.params[path] = val
        if frozen:
            self.frozen.add(path)
        else:
            self._m[path] = np.zeros_like(val.data)
            self._v[path] = np.zeros_like(val.data)
        return val

    def __getitem__(self, path: str) -> Value:
        return self.params[path]

    def __contains__(self, path: str) -> bool:
        return path in self.params

    def trainable(self) -> dict[str, Value]:
        return {p: v for p, v in self.params.items() if p not in self.frozen}

    def n_params(self) -> int:
        return sum(v.data.size for v in self.params.values())

    def zero_grads(self) -> None:
        for v in self.params.values():
            v.zero_grad()


def adam_step(
    store: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update in place; grads are left untouched."""
    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for path, val in store.trainable().items():
        g = val.grad if val.grad is not None else np.zeros_like(val.data)
        m = store._m[path]
        v = store._v[path]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        val.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def _write_record(fh: BinaryIO, path: str, arr: np.ndarray) -> None:
    raw = path.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)
    fh.write(struct.pack("<I", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<I", d))
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_record(fh: BinaryIO) -> tuple[str, np.ndarray]:
    (plen,) = struct.unpack("<I", _read_exact(fh, 4))
    path = _read_exact(fh, plen).decode("utf-8")
    (rank,) = struct.unpack("<I", _read_exact(fh, 4))
    dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank)) if rank else ()
    count = int(np.prod(dims)) if rank else 1
    data = np.frombuffer(_read_exact(fh, 8 * count), dtype="<f8").reshape(dims)
    return path, data.astype(np.float64)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError(f"checkpoint truncated: wanted {n} bytes, got {len(buf)}")
    return buf


def save_checkpoint(path, store: ParamStore, meta: dict) -> None:
    meta = dict(meta)
    meta["frozen"] = sorted(store.frozen)
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(store.params)))
        for p in sorted(store.params):
            _write_record(fh, p, store.params[p].data)
        state_records = [("adam.step", np.asarray(float(store.step)))]
        for p in sorted(store._m):
            state_records.append((f"adam.m/{p}", store._m[p]))
            state_records.append((f"adam.v/{p}", store._v[p]))
        fh.write(struct.pack("<I", len(state_records)))
        for name, arr in state_records:
            _write_record(fh, name, arr)


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise DataError(f"not a checkpoint file: bad magic {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        (mlen,) = struct.unpack("<I", _read_exact(fh, 4))
        meta = json.loads(_read_exact(fh, mlen).decode("utf-8"))
        frozen = set(meta.get("frozen", []))
        store = ParamStore()
        (n,) = struct.unpack("<I", _read_exact(fh, 4))
        for _ in range(n):
            p, data = _read_record(fh)
            store.add(p, data, frozen=p in frozen)
        (nstate,) = struct.unpack("<I", _read_exact(fh, 4))
        for _ in range(nstate):
            name, data = _read_record(fh)
            if name == "adam.step":
                store.step = int(data)
            elif name.startswith("adam.m/"):
                store._m[name[len("adam.m/") :]] = data.copy()
            elif name.startswith("adam.v/"):
                store._v[name[len("adam.v/") :]] = data.copy()
            else:
                raise DataError(f"unknown optimizer record {name!r}")
    return store, meta
