"""PLY reader for dataset interoperability.

Handles ASCII and binary-little-endian files with float/double x,y,z
vertex properties and optional nx,ny,nz normals. Faces and other elements
after the vertex element are ignored.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import PlyParseError
from ..geometry.cloud import PointCloud

_SCALAR_SIZES = {
    "char": 1, "int8": 1, "uchar": 1, "uint8": 1,
    "short": 2, "int16": 2, "ushort": 2, "uint16": 2,
    "int": 4, "int32": 4, "uint": 4, "uint32": 4,
    "float": 4, "float32": 4,
    "double": 8, "float64": 8,
}
_FLOAT_FORMATS = {"float": "f", "float32": "f", "double": "d", "float64": "d"}


class _Element:
    def __init__(self, name, count):
        self.name = name
        self.count = count
        self.properties = []      # (type, name) or ("list", count_type, item_type, name)


def _parse_header(blob: bytes, path):
    end = blob.find(b"end_header")
    if end < 0:
        raise PlyParseError(f"{path}: no end_header", line=1)
    header_end = blob.find(b"\n", end)
    if header_end < 0:
        raise PlyParseError(f"{path}: unterminated header", offset=end)
    lines = blob[:end].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0].strip() != "ply":
        raise PlyParseError(f"{path}: missing 'ply' signature", line=1)
    fmt = None
    elements = []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.strip().split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if len(parts) < 2:
                raise PlyParseError(f"{path}: malformed format line", line=ln)
            fmt = parts[1]
            if fmt not in ("ascii", "binary_little_endian"):
                raise PlyParseError(f"{path}: unsupported format {fmt!r}", line=ln)
        elif parts[0] == "element":
            if len(parts) != 3:
                raise PlyParseError(f"{path}: malformed element line", line=ln)
            try:
                elements.append(_Element(parts[1], int(parts[2])))
            except ValueError:
                raise PlyParseError(f"{path}: bad element count", line=ln) from None
        elif parts[0] == "property":
            if not elements:
                raise PlyParseError(f"{path}: property before any element", line=ln)
            if parts[1] == "list":
                if len(parts) != 5:
                    raise PlyParseError(f"{path}: malformed list property", line=ln)
                elements[-1].properties.append(("list", parts[2], parts[3], parts[4]))
            else:
                if len(parts) != 3:
                    raise PlyParseError(f"{path}: malformed property line", line=ln)
                elements[-1].properties.append((parts[1], parts[2]))
    if fmt is None:
        raise PlyParseError(f"{path}: no format line", line=1)
    return fmt, elements, header_end + 1


def read_ply(path):
    """Return (points (N,3), normals (N,3) or None), both float64."""
    blob = Path(path).read_bytes()
    fmt, elements, body_off = _parse_header(blob, path)
    vertex = next((e for e in elements if e.name == "vertex"), None)
    if vertex is None:
        raise PlyParseError(f"{path}: no vertex element")
    names = [p[-1] for p in vertex.properties]
    try:
        cols = {axis: names.index(axis) for axis in ("x", "y", "z")}
    except ValueError:
        raise PlyParseError(f"{path}: vertex element lacks x,y,z properties") from None
    has_normals = all(n in names for n in ("nx", "ny", "nz"))
    normal_cols = {n: names.index(n) for n in ("nx", "ny", "nz")} if has_normals else None
    for p in vertex.properties:
        if p[0] == "list":
            raise PlyParseError(f"{path}: list property inside vertex element unsupported")
        if p[-1] in ("x", "y", "z") and p[0] not in _FLOAT_FORMATS:
            raise PlyParseError(f"{path}: coordinate property {p[-1]} must be float/double")

    if fmt == "ascii":
        return _read_ascii(blob, body_off, elements, vertex, cols, normal_cols, path)
    return _read_binary(blob, body_off, elements, vertex, cols, normal_cols, path)


def _read_ascii(blob, body_off, elements, vertex, cols, normal_cols, path):
    text = blob[body_off:].decode("ascii", errors="replace").splitlines()
    row = 0
    pts = None
    normals = None
    for elem in elements:
        if elem.name == "vertex":
            pts = np.empty((elem.count, 3))
            if normal_cols:
                normals = np.empty((elem.count, 3))
            for i in range(elem.count):
                if row >= len(text):
                    raise PlyParseError(f"{path}: vertex data ends early", line=row + 1)
                fields = text[row].split()
                row += 1
                if len(fields) < len(vertex.properties):
                    raise PlyParseError(f"{path}: short vertex row", line=row)
                try:
                    pts[i] = [float(fields[cols[a]]) for a in ("x", "y", "z")]
                    if normal_cols:
                        normals[i] = [float(fields[normal_cols[n]]) for n in ("nx", "ny", "nz")]
                except ValueError:
                    raise PlyParseError(f"{path}: non-numeric vertex field", line=row) from None
            break  # remaining elements are irrelevant
        row += elem.count
    return pts, normals


def _read_binary(blob, body_off, elements, vertex, cols, normal_cols, path):
    off = body_off
    for elem in elements:
        if elem.name != "vertex":
            # fixed-size elements can be skipped; list elements cannot
            if any(p[0] == "list" for p in elem.properties):
                raise PlyParseError(
                    f"{path}: element {elem.name!r} with list properties precedes vertex data"
                )
            off += elem.count * sum(_SCALAR_SIZES[p[0]] for p in elem.properties)
            continue
        fmt_codes = []
        for p in elem.properties:
            size = _SCALAR_SIZES.get(p[0])
            if size is None:
                raise PlyParseError(f"{path}: unknown property type {p[0]!r}")
            fmt_codes.append(_FLOAT_FORMATS.get(p[0], f"{size}x"))
        rec = struct.Struct("<" + "".join(fmt_codes))
        # map property index -> position among parsed (non-padding) fields
        parsed_pos = {}
        pos = 0
        for i, p in enumerate(elem.properties):
            if p[0] in _FLOAT_FORMATS:
                parsed_pos[i] = pos
                pos += 1
        need = elem.count * rec.size
        if off + need > len(blob):
            raise PlyParseError(f"{path}: vertex data ends early", offset=off)
        pts = np.empty((elem.count, 3))
        normals = np.empty((elem.count, 3)) if normal_cols else None
        for i, rec_vals in enumerate(rec.iter_unpack(blob[off:off + need])):
            pts[i] = [rec_vals[parsed_pos[cols[a]]] for a in ("x", "y", "z")]
            if normal_cols:
                normals[i] = [rec_vals[parsed_pos[normal_cols[n]]] for n in ("nx", "ny", "nz")]
        return pts, normals
    raise PlyParseError(f"{path}: no vertex element in body")


def nose_tip_heuristic(points: np.ndarray) -> np.ndarray:
    """Fallback anchor: the maximum-z point after centering. Documented as
    a heuristic for frontal scans; prefer explicit metadata."""
    centered = points - points.mean(axis=0)
    return points[int(np.argmax(centered[:, 2]))].copy()


def statistical_outlier_filter(points: np.ndarray, k: int = 8,
                               n_sigma: float = 2.0) -> np.ndarray:
    """Keep points whose mean k-NN distance is within n_sigma of the
    population mean. Returns the kept row indices."""
    from scipy.spatial import cKDTree

    k = min(k + 1, points.shape[0])
    d, _ = cKDTree(points).query(points, k=k, workers=1)
    mean_d = d[:, 1:].mean(axis=1) if k > 1 else np.zeros(points.shape[0])
    bound = mean_d.mean() + n_sigma * mean_d.std()
    return np.flatnonzero(mean_d <= bound)


def import_ply(path, scale: float = 1.0,
               nose_tip: Optional[np.ndarray] = None,
               nose_heuristic: bool = False,
               outlier_filter: bool = False) -> PointCloud:
    """Convert a PLY file to a point cloud, scaling coordinates into
    millimeters. The nose tip comes from explicit metadata or, when
    requested, the max-z-after-centering heuristic."""
    pts, normals = read_ply(path)
    if pts.shape[0] == 0:
        raise PlyParseError(f"{path}: empty vertex element")
    pts = pts * scale
    if outlier_filter:
        keep = statistical_outlier_filter(pts)
        pts = pts[keep]
        if normals is not None:
            normals = normals[keep]
    if normals is not None:
        norms = np.linalg.norm(normals, axis=1, keepdims=True)
        if np.any(norms == 0):
            normals = None
        else:
            normals = normals / norms
    nt = None
    if nose_tip is not None:
        nt = np.asarray(nose_tip, dtype=np.float64) * scale
    elif nose_heuristic:
        nt = nose_tip_heuristic(pts)
    return PointCloud(points=pts, normals=normals, nose_tip=nt)
