"""Pure-numpy kernel backend.

Mirrors the compiled extension's semantics exactly: identical distance
arithmetic (dx*dx + dy*dy + dz*dz in f64), identical (distance, index)
tie-breaking, identical padding. Used when the extension is unavailable
or when POINTFACE_BACKEND=numpy is set.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"

_MAX_CELLS_FACTOR = 8


class _Grid:
    """Uniform grid over the cloud's bounding box, CSR cell layout.

    Points within each cell are stored in ascending index order so that
    candidate gathering is deterministic.
    """

    __slots__ = ("origin", "h", "dims", "cell_start", "order")

    def __init__(self, points: np.ndarray):
        n = points.shape[0]
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        extent = hi - lo
        pos = extent[extent > 0.0]
        if pos.size == 3:
            h = float(np.cbrt(pos.prod() / n))
        elif pos.size > 0:
            h = float(pos.max() / max(np.cbrt(n), 1.0))
        else:
            h = 1.0
        h = max(h, 1e-12)
        dims = np.maximum(1, np.ceil(extent / h).astype(np.int64))
        total = int(dims.prod())
        if total > _MAX_CELLS_FACTOR * n:
            h *= float(np.cbrt(total / (_MAX_CELLS_FACTOR * n)))
            dims = np.maximum(1, np.ceil(extent / h).astype(np.int64))
            total = int(dims.prod())

        self.origin = lo
        self.h = h
        self.dims = dims
        cells = self._cell_of(points)
        flat = (cells[:, 0] * dims[1] + cells[:, 1]) * dims[2] + cells[:, 2]
        # Stable sort keeps per-cell point lists in ascending index order.
        self.order = np.argsort(flat, kind="stable").astype(np.int64)
        counts = np.bincount(flat, minlength=total)
        self.cell_start = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)

    def _cell_of(self, pts: np.ndarray) -> np.ndarray:
        c = np.floor((pts - self.origin) / self.h).astype(np.int64)
        return np.clip(c, 0, self.dims - 1)

    def candidates(self, center: np.ndarray, r: float) -> np.ndarray:
        """Indices of all points in cells overlapping the query ball."""
        lo = np.floor((center - r - self.origin) / self.h).astype(np.int64)
        hi = np.floor((center + r - self.origin) / self.h).astype(np.int64)
        lo = np.clip(lo, 0, self.dims - 1)
        hi = np.clip(hi, 0, self.dims - 1)
        ny, nz = int(self.dims[1]), int(self.dims[2])
        chunks = []
        for cx in range(int(lo[0]), int(hi[0]) + 1):
            for cy in range(int(lo[1]), int(hi[1]) + 1):
                base = (cx * ny + cy) * nz
                s = self.cell_start[base + int(lo[2])]
                e = self.cell_start[base + int(hi[2]) + 1]
                if e > s:
                    chunks.append(self.order[s:e])
        if not chunks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(chunks)


def build(points: np.ndarray):
    return _Grid(points)


def _dist2(points, center):
    d = points - center
    return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]


def _sorted_in_radius(grid, points, center, r):
    cand = grid.candidates(center, r)
    if cand.size == 0:
        return cand
    d2 = _dist2(points[cand], center)
    keep = d2 <= r * r
    cand = cand[keep]
    if cand.size == 0:
        return cand
    d2 = d2[keep]
    # candidates are not index-sorted across cells; lexsort gives (d2, idx)
    order = np.lexsort((cand, d2))
    return cand[order]


def radius_neighbors(grid, points, center, r):
    return _sorted_in_radius(grid, points, center, float(r))


def k_nearest(grid, points, center, k):
    n = points.shape[0]
    k = min(int(k), n)
    r = grid.h
    while True:
        cand = _sorted_in_radius(grid, points, center, r)
        if cand.size >= k:
            return cand[:k]
        if r > 4.0 * _bbox_reach(grid, center):
            # ball covers the whole cloud; fewer than k points exist
            return cand
        r *= 2.0


def _bbox_reach(grid, center):
    far = grid.origin + grid.dims * grid.h
    return float(np.sqrt(max(_dist2(np.vstack([grid.origin, far]), center).max(), 1.0)))


def k_nearest_many(grid, points, queries, k):
    """(M, k) nearest-neighbor indices for many query points.

    Falls back to scipy's kd-tree for throughput; rows are re-sorted by
    (distance, index) to pin tie order.
    """
    from scipy.spatial import cKDTree

    n = points.shape[0]
    k = min(int(k), n)
    tree = cKDTree(points)
    d, idx = tree.query(queries, k=k, workers=1)
    if k == 1:
        idx = idx[:, None]
        d = d[:, None]
    order = np.lexsort((idx, d), axis=1)
    return np.take_along_axis(idx.astype(np.int64), order, axis=1)


def ball_query_many(grid, points, centers, r, k):
    """In-radius nearest-first neighbors for each center, padded to k.

    Returns (indices (M, k) int64, counts (M,) int64). Rows with count 0
    are filled with -1; padded slots repeat the nearest neighbor.
    """
    m = centers.shape[0]
    idx = np.full((m, k), -1, dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)
    for i in range(m):
        cand = _sorted_in_radius(grid, points, centers[i], float(r))
        if cand.size == 0:
            continue
        take = min(k, cand.size)
        idx[i, :take] = cand[:take]
        if take < k:
            idx[i, take:] = cand[0]
        counts[i] = take
    return idx, counts


def fps(points: np.ndarray, nb: int, seed_index: int) -> np.ndarray:
    selected = np.empty(nb, dtype=np.int64)
    selected[0] = seed_index
    mind2 = _dist2(points, points[seed_index])
    mind2[seed_index] = -1.0
    for t in range(1, nb):
        j = int(np.argmax(mind2))
        selected[t] = j
        np.minimum(mind2, _dist2(points, points[j]), out=mind2)
        mind2[j] = -1.0
    return selected


def dfps(points: np.ndarray, weights: np.ndarray, nb: int, seed_index: int) -> np.ndarray:
    selected = np.empty(nb, dtype=np.int64)
    selected[0] = seed_index
    alive = weights > 0.0
    alive[seed_index] = False
    mind2 = _dist2(points, points[seed_index])
    for t in range(1, nb):
        score = np.where(alive, weights * np.sqrt(np.maximum(mind2, 0.0)), -1.0)
        j = int(np.argmax(score))
        if score[j] < 0.0:
            raise RuntimeError("dithered sampling ran out of candidates")
        selected[t] = j
        alive[j] = False
        np.minimum(mind2, _dist2(points, points[j]), out=mind2)
    return selected
