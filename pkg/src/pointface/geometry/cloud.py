"""Point-cloud container and sampling-parameter types.

Coordinates are always millimeters; clouds keep their physical scale end to
end (no normalization into a unit box anywhere in the library).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..errors import InvalidInput

UNIT_NORM_TOL = 1e-6
EIGENVALUE_FLOOR = 1e-6


@dataclass(frozen=True)
class PointCloud:
    """N x 3 millimeter coordinates plus optional per-point attributes.

    normals: unit vectors, one per point.
    eigenvalues: surface-variation scalars in [0, 1] (smallest local
        covariance eigenvalue over the eigenvalue sum).
    nose_tip: 3-vector anchor in the same millimeter frame.
    """

    points: np.ndarray
    normals: Optional[np.ndarray] = None
    eigenvalues: Optional[np.ndarray] = None
    nose_tip: Optional[np.ndarray] = None
    id_label: Optional[str] = None
    expr_label: Optional[str] = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInput(f"points must be N x 3, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise InvalidInput("point cloud must contain at least one point")
        if not np.isfinite(pts).all():
            raise InvalidInput("point coordinates must be finite")
        object.__setattr__(self, "points", pts)

        if self.normals is not None:
            nrm = np.ascontiguousarray(np.asarray(self.normals, dtype=np.float64))
            if nrm.shape != pts.shape:
                raise InvalidInput(f"normals shape {nrm.shape} != points shape {pts.shape}")
            lengths = np.linalg.norm(nrm, axis=1)
            if not np.all(np.abs(lengths - 1.0) <= UNIT_NORM_TOL):
                raise InvalidInput("normals must have unit Euclidean norm (tol 1e-6)")
            object.__setattr__(self, "normals", nrm)

        if self.eigenvalues is not None:
            ev = np.ascontiguousarray(np.asarray(self.eigenvalues, dtype=np.float64)).reshape(-1)
            if ev.shape[0] != pts.shape[0]:
                raise InvalidInput("eigenvalues must have one entry per point")
            if np.any(ev < 0.0) or np.any(ev > 1.0) or not np.isfinite(ev).all():
                raise InvalidInput("eigenvalues must lie in [0, 1]")
            object.__setattr__(self, "eigenvalues", ev)

        if self.nose_tip is not None:
            nt = np.asarray(self.nose_tip, dtype=np.float64).reshape(-1)
            if nt.shape != (3,) or not np.isfinite(nt).all():
                raise InvalidInput("nose_tip must be a finite 3-vector")
            object.__setattr__(self, "nose_tip", nt)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def with_fields(self, **kwargs) -> "PointCloud":
        """Return a copy with the given fields replaced."""
        return replace(self, **kwargs)

    def select(self, indices) -> "PointCloud":
        """Subset cloud by point indices, carrying per-point attributes."""
        idx = np.asarray(indices, dtype=np.intp)
        return PointCloud(
            points=self.points[idx],
            normals=None if self.normals is None else self.normals[idx],
            eigenvalues=None if self.eigenvalues is None else self.eigenvalues[idx],
            nose_tip=self.nose_tip,
            id_label=self.id_label,
            expr_label=self.expr_label,
        )

    def translated(self, offset) -> "PointCloud":
        """Rigid translation of points and nose tip together."""
        off = np.asarray(offset, dtype=np.float64).reshape(3)
        return self.with_fields(
            points=self.points + off,
            nose_tip=None if self.nose_tip is None else self.nose_tip + off,
        )


@dataclass(frozen=True)
class SamplingParams:
    """Dithered-sampling configuration.

    radius gates candidates by distance to the nose tip; exponent weights
    each candidate's score by its surface-variation eigenvalue raised to
    this power. With dither set, both are drawn uniformly once per call
    from the configured ranges.
    """

    radius: float = 65.0
    exponent: float = 0.0
    seed_index: int = 0
    dither: bool = False
    radius_range: tuple = (50.0, 80.0)
    exponent_range: tuple = (-0.2, 0.2)

    def __post_init__(self):
        if not self.radius > 0.0:
            raise InvalidInput("sampling radius must be positive")
        if self.dither:
            rlo, rhi = self.radius_range
            plo, phi = self.exponent_range
            if not (rlo < rhi and plo < phi):
                raise InvalidInput("dither ranges must satisfy low < high")
            if not rlo > 0.0:
                raise InvalidInput("dithered radius range must be positive")

    def draw(self, rng) -> "SamplingParams":
        """Resolve dithering: one (radius, exponent) draw from the ranges."""
        if not self.dither:
            return self
        r = rng.uniform(*self.radius_range)
        p = rng.uniform(*self.exponent_range)
        return replace(self, radius=float(r), exponent=float(p), dither=False)


@dataclass(frozen=True)
class NeighborhoodSpec:
    """k-nearest or fixed-radius neighborhood selection for normal estimation."""

    k: Optional[int] = 16
    radius: Optional[float] = None

    def __post_init__(self):
        if (self.k is None) == (self.radius is None):
            raise InvalidInput("specify exactly one of k or radius")
        if self.k is not None and self.k < 3:
            raise InvalidInput("k must be at least 3")
        if self.radius is not None and not self.radius > 0.0:
            raise InvalidInput("radius must be positive")
