"""Per-point normal and surface-variation estimation via local PCA."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..diagnostics import Diagnostics
from ..errors import InvalidInput
from .cloud import EIGENVALUE_FLOOR, NeighborhoodSpec, PointCloud
from .index import SpatialIndex

# A neighborhood is degenerate (collinear or collapsed) when its middle
# covariance eigenvalue carries essentially none of the total variance.
_DEGENERACY_RATIO = 1e-12


def _orient_up(normals: np.ndarray) -> np.ndarray:
    """Flip normals into the +z half-space (sensor-facing convention).

    Exact zeros fall back to +y, then +x, so orientation stays deterministic.
    """
    nz = normals[:, 2]
    ny = normals[:, 1]
    nx = normals[:, 0]
    flip = (nz < 0) | ((nz == 0) & ((ny < 0) | ((ny == 0) & (nx < 0))))
    normals[flip] *= -1.0
    return normals


def estimate_normals(cloud: PointCloud,
                     neighborhood: NeighborhoodSpec = NeighborhoodSpec(k=16),
                     index: Optional[SpatialIndex] = None,
                     diag: Optional[Diagnostics] = None) -> PointCloud:
    """Return a copy of the cloud with normals and eigenvalue fields filled.

    Per point, the normal is the eigenvector of the neighborhood covariance
    with the smallest eigenvalue, oriented toward +z; the eigenvalue field
    is the surface variation lambda_min / (l1+l2+l3), clamped to
    [EIGENVALUE_FLOOR, 1]. Degenerate neighborhoods get normal +z and the
    floor value, and are tallied in diag.
    """
    n = cloud.n_points
    if n < 3:
        raise InvalidInput("normal estimation needs at least 3 points")
    if index is None:
        index = SpatialIndex(cloud.points)
    points = cloud.points

    if neighborhood.k is not None:
        k = min(neighborhood.k, n)
        nbr_idx = index.k_nearest_many(points, k)
        nbrs = points[nbr_idx]                       # (N, k, 3)
        mean = nbrs.mean(axis=1, keepdims=True)
        centered = nbrs - mean
        cov = np.einsum("nki,nkj->nij", centered, centered) / k
    else:
        cov = np.empty((n, 3, 3))
        short = 0
        for i in range(n):
            nbr = index.radius_neighbors(points[i], neighborhood.radius)
            if nbr.size < 3:
                cov[i] = 0.0
                short += 1
                continue
            local = points[nbr]
            centered = local - local.mean(axis=0)
            cov[i] = centered.T @ centered / nbr.size
        if short and diag is not None:
            diag.warn(f"{short} radius neighborhoods had fewer than 3 points")

    evals, evecs = np.linalg.eigh(cov)               # ascending eigenvalues
    total = evals.sum(axis=1)
    lam_min = evals[:, 0]
    lam_mid = evals[:, 1]
    degenerate = (total <= 0.0) | (lam_mid <= _DEGENERACY_RATIO * np.maximum(total, 0.0))

    normals = evecs[:, :, 0].copy()
    normals = _orient_up(normals)
    with np.errstate(invalid="ignore", divide="ignore"):
        surf_var = np.where(total > 0.0, lam_min / total, 0.0)
    surf_var = np.clip(surf_var, EIGENVALUE_FLOOR, 1.0)

    n_deg = int(np.count_nonzero(degenerate))
    if n_deg:
        normals[degenerate] = (0.0, 0.0, 1.0)
        surf_var[degenerate] = EIGENVALUE_FLOOR
        if diag is not None:
            diag.degenerate_neighborhoods += n_deg

    # eigh returns unit vectors; renormalize to keep the unit invariant airtight
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return cloud.with_fields(normals=normals, eigenvalues=surf_var)
