"""Versioned binary checkpoint container.

Layout: magic ``SNLSCKPT``, uint32 version, uint32 parameter count,
then per parameter (sorted by name): uint16 name length + UTF-8 name,
uint8 ndim, uint32 dims, raw float32 little-endian values; finally a
uint32-length-prefixed JSON trailer with the config snapshot.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"SNLSCKPT"
VERSION = 1


def save_checkpoint(path: str, params: dict[str, np.ndarray], config: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            # asarray keeps 0-dim shapes (ascontiguousarray promotes to 1-d)
            arr = np.asarray(params[name], dtype="<f4", order="C")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes())
        trailer = json.dumps(config, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(trailer)))
        fh.write(trailer)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a {MAGIC.decode()} checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (count,) = struct.unpack("<I", fh.read(4))
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            size = int(np.prod(shape, dtype=np.int64)) if shape else 1
            data = np.frombuffer(fh.read(size * 4), dtype="<f4")
            params[name] = data.astype(np.float32).reshape(shape)
        (trailer_len,) = struct.unpack("<I", fh.read(4))
        config = json.loads(fh.read(trailer_len).decode("utf-8"))
    return params, config
