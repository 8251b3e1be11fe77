"""Spatial acceleration structure over a point cloud."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInput
from . import backends
from .cloud import PointCloud


class SpatialIndex:
    """Immutable uniform-grid index over a cloud's points.

    Radius queries return exactly what a brute-force scan returns,
    ordered by (distance, index). Safe to share across threads after
    construction.
    """

    def __init__(self, points: np.ndarray, backend: str | None = None):
        points = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
        if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] < 1:
            raise InvalidInput("index requires a nonempty N x 3 point array")
        self._backend = backends.get_backend(backend)
        self.points = points
        self._grid = self._backend.build(points)

    @property
    def backend_name(self) -> str:
        return self._backend.NAME

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def radius_neighbors(self, center, r: float) -> np.ndarray:
        """Indices of points within r of center, sorted by (distance, index)."""
        if not r > 0.0:
            raise InvalidInput("query radius must be positive")
        center = np.asarray(center, dtype=np.float64).reshape(3)
        return self._backend.radius_neighbors(self._grid, self.points, center, float(r))

    def k_nearest(self, center, k: int) -> np.ndarray:
        """Indices of the k nearest points, sorted by (distance, index)."""
        if k < 1:
            raise InvalidInput("k must be at least 1")
        center = np.asarray(center, dtype=np.float64).reshape(3)
        return self._backend.k_nearest(self._grid, self.points, center, int(k))

    def k_nearest_many(self, queries, k: int) -> np.ndarray:
        if k < 1:
            raise InvalidInput("k must be at least 1")
        queries = np.ascontiguousarray(np.asarray(queries, dtype=np.float64))
        return self._backend.k_nearest_many(self._grid, self.points, queries, int(k))

    def ball_query_many(self, centers, r: float, k: int):
        """(indices (M,k), counts (M,)) of in-radius nearest-first neighbors."""
        if not r > 0.0 or k < 1:
            raise InvalidInput("ball query needs r > 0 and k >= 1")
        centers = np.ascontiguousarray(np.asarray(centers, dtype=np.float64))
        if centers.ndim != 2 or centers.shape[1] != 3:
            raise InvalidInput("centers must be M x 3")
        return self._backend.ball_query_many(self._grid, self.points, centers, float(r), int(k))


def build_index(cloud, backend: str | None = None) -> SpatialIndex:
    """Build an immutable spatial index over a cloud (or raw N x 3 array)."""
    points = cloud.points if isinstance(cloud, PointCloud) else cloud
    return SpatialIndex(points, backend=backend)
