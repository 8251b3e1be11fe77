"""Point-cloud face embedding pipeline: geometry kernels, morphable-model
synthetic data generation, a small point network with dithered sampling,
and gallery/probe verification metrics."""

__version__ = "0.1.0"

from .diagnostics import Diagnostics
from .geometry import (
    NeighborhoodSpec,
    PointCloud,
    SamplingParams,
    SpatialIndex,
    ball_query,
    build_index,
    dfps,
    estimate_normals,
    fps,
)

__all__ = [
    "Diagnostics",
    "NeighborhoodSpec",
    "PointCloud",
    "SamplingParams",
    "SpatialIndex",
    "ball_query",
    "build_index",
    "dfps",
    "estimate_normals",
    "fps",
    "__version__",
]
