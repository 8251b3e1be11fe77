"""Geometry kernels: clouds, spatial index, sampling, normals."""

from .backends import DEFAULT_BACKEND, HAVE_COMPILED, available_backends, get_backend
from .cloud import EIGENVALUE_FLOOR, NeighborhoodSpec, PointCloud, SamplingParams
from .index import SpatialIndex, build_index
from .normals import estimate_normals
from .ops import ball_query, ball_query_grouped, dfps, dfps_weights, fps

__all__ = [
    "DEFAULT_BACKEND",
    "EIGENVALUE_FLOOR",
    "HAVE_COMPILED",
    "NeighborhoodSpec",
    "PointCloud",
    "SamplingParams",
    "SpatialIndex",
    "available_backends",
    "ball_query",
    "ball_query_grouped",
    "build_index",
    "dfps",
    "dfps_weights",
    "estimate_normals",
    "fps",
    "get_backend",
]
