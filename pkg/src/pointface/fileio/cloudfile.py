"""Binary point-cloud container (magic S3PC).

Layout: magic, version u32, N u32, flags u32, then little-endian f32
blocks in flag order: points (always), normals, eigenvalues, nose tip,
labels (two length-prefixed UTF-8 strings). f32 on disk, f64 in memory.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import CloudFormatError
from ..geometry.cloud import PointCloud

MAGIC = b"S3PC"
VERSION = 1

FLAG_NORMALS = 1
FLAG_EIGENVALUES = 2
FLAG_NOSE_TIP = 4
FLAG_LABELS = 8


def _write_string(f, text: str) -> None:
    raw = (text or "").encode("utf-8")
    if len(raw) > 0xFFFF:
        raise CloudFormatError("label longer than 65535 bytes")
    f.write(struct.pack("<H", len(raw)))
    f.write(raw)


def save_cloud(cloud: PointCloud, path) -> None:
    flags = 0
    if cloud.normals is not None:
        flags |= FLAG_NORMALS
    if cloud.eigenvalues is not None:
        flags |= FLAG_EIGENVALUES
    if cloud.nose_tip is not None:
        flags |= FLAG_NOSE_TIP
    if cloud.id_label is not None or cloud.expr_label is not None:
        flags |= FLAG_LABELS
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, cloud.n_points, flags))
        f.write(cloud.points.astype("<f4").tobytes())
        if flags & FLAG_NORMALS:
            f.write(cloud.normals.astype("<f4").tobytes())
        if flags & FLAG_EIGENVALUES:
            f.write(cloud.eigenvalues.astype("<f4").tobytes())
        if flags & FLAG_NOSE_TIP:
            f.write(cloud.nose_tip.astype("<f4").tobytes())
        if flags & FLAG_LABELS:
            _write_string(f, cloud.id_label or "")
            _write_string(f, cloud.expr_label or "")


def load_cloud(path) -> PointCloud:
    blob = Path(path).read_bytes()
    off = 0

    def take(count, what):
        nonlocal off
        if off + count > len(blob):
            raise CloudFormatError(f"{path}: truncated while reading {what} at offset {off}")
        piece = blob[off:off + count]
        off += count
        return piece

    if take(4, "magic") != MAGIC:
        raise CloudFormatError(f"{path}: bad magic")
    version, n, flags = struct.unpack("<III", take(12, "header"))
    if version != VERSION:
        raise CloudFormatError(f"{path}: unsupported version {version}")
    if n == 0:
        raise CloudFormatError(f"{path}: empty cloud")

    def block(count, what):
        raw = take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)

    points = block(3 * n, "points").reshape(n, 3)
    normals = block(3 * n, "normals").reshape(n, 3) if flags & FLAG_NORMALS else None
    eigenvalues = block(n, "eigenvalues") if flags & FLAG_EIGENVALUES else None
    nose_tip = block(3, "nose tip") if flags & FLAG_NOSE_TIP else None
    id_label = expr_label = None
    if flags & FLAG_LABELS:
        (ln,) = struct.unpack("<H", take(2, "id label length"))
        id_label = take(ln, "id label").decode("utf-8") or None
        (ln,) = struct.unpack("<H", take(2, "expr label length"))
        expr_label = take(ln, "expr label").decode("utf-8") or None
    if off != len(blob):
        raise CloudFormatError(f"{path}: {len(blob) - off} trailing bytes")
    if eigenvalues is not None:
        # f32 rounding may nudge values a hair outside [0, 1]
        eigenvalues = np.clip(eigenvalues, 0.0, 1.0)
    if normals is not None:
        norms = np.linalg.norm(normals, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise CloudFormatError(f"{path}: zero-length normal")
        normals = normals / norms
    return PointCloud(points=points, normals=normals, eigenvalues=eigenvalues,
                      nose_tip=nose_tip, id_label=id_label, expr_label=expr_label)
