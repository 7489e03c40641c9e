"""Versioned binary model container.

Layout: magic "MDL1", one model-kind byte, then a length-prefixed
canonical encoding of the parameter tree (nested dicts/lists of scalars,
strings and ndarrays). Round-trips are exact: arrays come back with the
same dtype, shape and bytes.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataError
from . import forest as _forest
from . import gbdt as _gbdt
from . import svc as _svc

MODEL_MAGIC = b"MDL1"

KIND_GBDT = 1
KIND_FOREST = 2
KIND_SVC = 3


class BadModelFile(DataError):
    pass


def _enc_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _encode(obj) -> bytes:
    if obj is None:
        return b"N"
    if isinstance(obj, bool):
        return b"B" + (b"\x01" if obj else b"\x00")
    if isinstance(obj, (int, np.integer)):
        return b"I" + struct.pack("<q", int(obj))
    if isinstance(obj, (float, np.floating)):
        return b"F" + struct.pack("<d", float(obj))
    if isinstance(obj, str):
        return b"S" + _enc_str(obj)
    if isinstance(obj, np.ndarray):
        arr = np.ascontiguousarray(obj)
        head = (b"A" + _enc_str(arr.dtype.str) + struct.pack("<B", arr.ndim)
                + b"".join(struct.pack("<I", dim) for dim in arr.shape))
        return head + arr.tobytes(order="C")
    if isinstance(obj, (list, tuple)):
        return b"L" + struct.pack("<I", len(obj)) + b"".join(_encode(v) for v in obj)
    if isinstance(obj, dict):
        body = b"".join(_enc_str(k) + _encode(v) for k, v in obj.items())
        return b"D" + struct.pack("<I", len(obj)) + body
    raise TypeError(f"cannot encode {type(obj).__name__}")


class _Reader:
    def __init__(self, buf: bytes, pos: int = 0):
        self.buf = buf
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise BadModelFile("model file ends mid-value")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def read_str(self) -> str:
        (n,) = struct.unpack("<I", self.take(4))
        return self.take(n).decode("utf-8")

    def read_value(self):
        tag = self.take(1)
        if tag == b"N":
            return None
        if tag == b"B":
            return self.take(1) == b"\x01"
        if tag == b"I":
            return struct.unpack("<q", self.take(8))[0]
        if tag == b"F":
            return struct.unpack("<d", self.take(8))[0]
        if tag == b"S":
            return self.read_str()
        if tag == b"A":
            dtype = np.dtype(self.read_str())
            (ndim,) = struct.unpack("<B", self.take(1))
            shape = tuple(struct.unpack("<I", self.take(4))[0] for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            raw = self.take(count * dtype.itemsize)
            return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        if tag == b"L":
            (n,) = struct.unpack("<I", self.take(4))
            return [self.read_value() for _ in range(n)]
        if tag == b"D":
            (n,) = struct.unpack("<I", self.take(4))
            return {self.read_str(): self.read_value() for _ in range(n)}
        raise BadModelFile(f"unknown value tag {tag!r}")


_SAVERS = {
    _gbdt.GbdtModel: (KIND_GBDT, _gbdt.gbdt_to_params),
    _forest.ForestModel: (KIND_FOREST, _forest.forest_to_params),
    _svc.LinearSvcModel: (KIND_SVC, _svc.svc_to_params),
}

_LOADERS = {
    KIND_GBDT: _gbdt.gbdt_from_params,
    KIND_FOREST: _forest.forest_from_params,
    KIND_SVC: _svc.svc_from_params,
}


def save_model(model, path: str) -> None:
    try:
        kind, to_params = _SAVERS[type(model)]
    except KeyError:
        raise TypeError(f"cannot serialize {type(model).__name__}") from None
    payload = _encode(to_params(model))
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<B", kind))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)


def load_model(path: str):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise BadModelFile(f"bad magic {blob[:4]!r}")
    if len(blob) < 13:
        raise BadModelFile("header incomplete")
    kind = blob[4]
    (length,) = struct.unpack("<Q", blob[5:13])
    if len(blob) != 13 + length:
        raise BadModelFile(
            f"payload length {len(blob) - 13} disagrees with header {length}")
    if kind not in _LOADERS:
        raise BadModelFile(f"unknown model kind {kind}")
    params = _Reader(blob, 13).read_value()
    return _LOADERS[kind](params)
