"""Network checkpoint container (magic S3CK).

Layout: magic, version u32, named-tensor table (parameters and buffers),
optional optimizer section (step count + moment tables), a JSON config
echo, and the checkpoint's verification loss.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from ..errors import CheckpointFormatError

MAGIC = b"S3CK"
VERSION = 1

_DTYPES = {0: "<f8", 1: "<f4"}
_DTYPE_CODES = {"float64": 0, "float32": 1}


def _write_table(f, arrays: Dict[str, np.ndarray]) -> None:
    f.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        code = _DTYPE_CODES.get(arr.dtype.name)
        if code is None:
            raise CheckpointFormatError(f"unsupported dtype {arr.dtype} for {name!r}")
        raw_name = name.encode("utf-8")
        f.write(struct.pack("<H", len(raw_name)))
        f.write(raw_name)
        f.write(struct.pack("<BB", code, arr.ndim))
        for d in arr.shape:
            f.write(struct.pack("<I", d))
        f.write(arr.astype(_DTYPES[code]).tobytes())


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.off = 0
        self.path = path

    def take(self, count, what):
        if self.off + count > len(self.blob):
            raise CheckpointFormatError(
                f"{self.path}: truncated while reading {what} at offset {self.off}"
            )
        piece = self.blob[self.off:self.off + count]
        self.off += count
        return piece

    def table(self) -> Dict[str, np.ndarray]:
        (count,) = struct.unpack("<I", self.take(4, "table size"))
        out = {}
        for _ in range(count):
            (ln,) = struct.unpack("<H", self.take(2, "tensor name length"))
            name = self.take(ln, "tensor name").decode("utf-8")
            code, ndim = struct.unpack("<BB", self.take(2, f"dtype of {name}"))
            if code not in _DTYPES:
                raise CheckpointFormatError(f"{self.path}: unknown dtype code {code}")
            shape = tuple(
                struct.unpack("<I", self.take(4, f"shape of {name}"))[0] for _ in range(ndim)
            )
            n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
            itemsize = 8 if code == 0 else 4
            raw = self.take(n_items * itemsize, f"payload of {name}")
            out[name] = np.frombuffer(raw, dtype=_DTYPES[code]).reshape(shape).astype(np.float64)
        return out


@dataclass
class Checkpoint:
    arrays: Dict[str, np.ndarray]             # param/<name> and buffer/<name>
    config: dict                              # training/run configuration echo
    verification_loss: float
    optimizer: Optional[Dict[str, np.ndarray]] = None
    step_count: int = 0


def save_checkpoint(path, arrays: Dict[str, np.ndarray], config: dict,
                    verification_loss: float,
                    optimizer: Optional[Dict[str, np.ndarray]] = None,
                    step_count: int = 0) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        _write_table(f, arrays)
        if optimizer is not None:
            f.write(struct.pack("<B", 1))
            f.write(struct.pack("<Q", step_count))
            _write_table(f, optimizer)
        else:
            f.write(struct.pack("<B", 0))
        raw_cfg = json.dumps(config, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(raw_cfg)))
        f.write(raw_cfg)
        f.write(struct.pack("<d", verification_loss))


def load_checkpoint(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic")
    (version,) = struct.unpack("<I", r.take(4, "version"))
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    arrays = r.table()
    (has_opt,) = struct.unpack("<B", r.take(1, "optimizer flag"))
    optimizer = None
    step_count = 0
    if has_opt:
        (step_count,) = struct.unpack("<Q", r.take(8, "step count"))
        optimizer = r.table()
    (cfg_len,) = struct.unpack("<I", r.take(4, "config length"))
    try:
        config = json.loads(r.take(cfg_len, "config echo").decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointFormatError(f"{path}: bad config echo: {exc}") from exc
    (vloss,) = struct.unpack("<d", r.take(8, "verification loss"))
    if r.off != len(r.blob):
        raise CheckpointFormatError(f"{path}: {len(r.blob) - r.off} trailing bytes")
    return Checkpoint(arrays=arrays, config=config, verification_loss=float(vloss),
                      optimizer=optimizer, step_count=step_count)
