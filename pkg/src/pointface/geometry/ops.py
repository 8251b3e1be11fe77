"""Sampling and neighborhood kernels on millimeter-scale point clouds."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..diagnostics import Diagnostics
from ..errors import InsufficientPoints, InvalidInput
from . import backends
from .cloud import EIGENVALUE_FLOOR, PointCloud, SamplingParams
from .index import SpatialIndex, build_index


def ball_query(index: SpatialIndex, center, r: float, k: int,
               diag: Optional[Diagnostics] = None) -> list:
    """Up to k in-radius points nearest the center, as (index, offset) pairs.

    Offsets are neighbor - center in millimeters, unnormalized. Short
    results are padded by repeating the nearest in-radius point; with no
    in-radius point at all the list is empty and the caller pads.
    """
    center = np.asarray(center, dtype=np.float64).reshape(3)
    idx, counts = index.ball_query_many(center[None, :], r, k)
    if counts[0] == 0:
        return []
    if counts[0] < k and diag is not None:
        diag.padded_queries += 1
    row = idx[0]
    offsets = index.points[row] - center
    return [(int(row[i]), offsets[i]) for i in range(k)]


def ball_query_grouped(index: SpatialIndex, centers, r: float, k: int,
                       diag: Optional[Diagnostics] = None):
    """Batched ball query used by the network layers.

    Returns (indices (M,k), offsets (M,k,3), counts (M,)). Every center is
    expected to be a cloud point, so counts are always >= 1.
    """
    centers = np.ascontiguousarray(np.asarray(centers, dtype=np.float64))
    idx, counts = index.ball_query_many(centers, r, k)
    if np.any(counts == 0):
        raise InvalidInput("ball_query_grouped centers must themselves be in-radius cloud points")
    if diag is not None:
        diag.padded_queries += int(np.count_nonzero(counts < k))
    offsets = index.points[idx] - centers[:, None, :]
    return idx, offsets, counts


def fps(cloud, count: int, seed_index: int = 0, backend: str | None = None) -> np.ndarray:
    """Farthest point sampling: iteratively take the point maximizing its
    minimum distance to everything already taken. Ties go to the smallest
    index; the first element is seed_index."""
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= count <= n:
        raise InvalidInput(f"sample count {count} must be in [1, {n}]")
    if not 0 <= seed_index < n:
        raise InvalidInput(f"seed index {seed_index} out of range")
    kern = backends.get_backend(backend)
    return kern.fps(np.ascontiguousarray(points), int(count), int(seed_index))


def dfps_weights(cloud: PointCloud, radius: float, exponent: float):
    """Per-point selection weights: eigenvalue**exponent inside the
    nose-tip radius, zero outside."""
    if cloud.eigenvalues is None or cloud.nose_tip is None:
        raise InvalidInput("dithered sampling needs eigenvalues and a nose tip")
    d = cloud.points - cloud.nose_tip
    d2 = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]
    in_radius = d2 <= radius * radius
    ev = np.clip(cloud.eigenvalues, EIGENVALUE_FLOOR, 1.0)
    weights = np.where(in_radius, ev ** exponent, 0.0)
    return weights, in_radius, d2


def dfps(cloud: PointCloud, count: int, params: SamplingParams,
         rng: Optional[np.random.Generator] = None,
         backend: str | None = None) -> np.ndarray:
    """Dithered farthest point sampling.

    Each iteration takes the point maximizing weight * min-distance, where
    the weight gates by distance to the nose tip (radius R) and scales by
    the surface-variation eigenvalue raised to exponent p. Zero-weight
    points are never selected. Seeded at the in-radius point nearest the
    nose tip. With params.dither set, (R, p) are drawn once per call from
    the configured ranges using rng.
    """
    n = cloud.n_points
    if not 1 <= count <= n:
        raise InvalidInput(f"sample count {count} must be in [1, {n}]")
    if params.dither:
        if rng is None:
            raise InvalidInput("dithered sampling requires an RNG stream")
        params = params.draw(rng)
    weights, in_radius, d2 = dfps_weights(cloud, params.radius, params.exponent)
    n_in = int(np.count_nonzero(in_radius))
    if n_in < count:
        raise InsufficientPoints(
            f"only {n_in} points within {params.radius} mm of the nose tip, need {count}"
        )
    seed = int(np.argmin(np.where(in_radius, d2, np.inf)))
    kern = backends.get_backend(backend)
    return kern.dfps(np.ascontiguousarray(cloud.points), weights, int(count), seed)


__all__ = [
    "ball_query",
    "ball_query_grouped",
    "build_index",
    "dfps",
    "dfps_weights",
    "fps",
    "SpatialIndex",
]
