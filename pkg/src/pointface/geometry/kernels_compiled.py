"""Compiled kernel backend: Cython extension for the hot loops, shared
numpy code for grid construction and the cold query paths."""

from __future__ import annotations

import numpy as np

from . import _kernels
from . import kernels_numpy as _shared

NAME = "compiled"

build = _shared.build
radius_neighbors = _shared.radius_neighbors
k_nearest = _shared.k_nearest
k_nearest_many = _shared.k_nearest_many


def ball_query_many(grid, points, centers, r, k):
    return _kernels.ball_query_many(
        grid.origin,
        grid.h,
        grid.dims,
        grid.cell_start,
        grid.order,
        np.ascontiguousarray(points),
        np.ascontiguousarray(centers),
        float(r),
        int(k),
    )


def fps(points, nb, seed_index):
    return _kernels.fps(np.ascontiguousarray(points), int(nb), int(seed_index))


def dfps(points, weights, nb, seed_index):
    return _kernels.dfps(
        np.ascontiguousarray(points),
        np.ascontiguousarray(weights, dtype=np.float64),
        int(nb),
        int(seed_index),
    )
