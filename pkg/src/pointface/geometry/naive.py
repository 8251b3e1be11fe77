"""Naive reference kernels used by the benchmark command as the slow
baseline. Full scans and per-iteration recomputes, vectorized with numpy
but with no incremental state and no spatial index."""

from __future__ import annotations

import numpy as np


def fps_naive(points: np.ndarray, count: int, seed_index: int = 0) -> np.ndarray:
    """FPS recomputing every candidate-to-selected distance each iteration."""
    n = points.shape[0]
    selected = [int(seed_index)]
    mask = np.ones(n, dtype=bool)
    mask[seed_index] = False
    for _ in range(count - 1):
        sel = points[selected]                       # (t, 3)
        d2 = ((points[:, None, :] - sel[None, :, :]) ** 2).sum(axis=2)
        mind2 = d2.min(axis=1)
        mind2[~mask] = -1.0
        j = int(np.argmax(mind2))
        selected.append(j)
        mask[j] = False
    return np.asarray(selected, dtype=np.int64)


def dfps_naive(points: np.ndarray, weights: np.ndarray, count: int,
               seed_index: int) -> np.ndarray:
    """Dithered FPS recomputing all selected-set distances each iteration."""
    n = points.shape[0]
    selected = [int(seed_index)]
    dead = weights <= 0.0
    dead[seed_index] = True
    for _ in range(count - 1):
        sel = points[selected]
        d2 = ((points[:, None, :] - sel[None, :, :]) ** 2).sum(axis=2)
        score = weights * np.sqrt(d2.min(axis=1))
        score[dead] = -1.0
        j = int(np.argmax(score))
        selected.append(j)
        dead[j] = True
    return np.asarray(selected, dtype=np.int64)


def ball_query_naive(points: np.ndarray, centers: np.ndarray, r: float, k: int):
    """Per-center full scan, (distance, index) sort, nearest-repeat padding."""
    m = centers.shape[0]
    idx = np.full((m, k), -1, dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)
    r2 = r * r
    for i in range(m):
        d = points - centers[i]
        d2 = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2]
        cand = np.flatnonzero(d2 <= r2)
        if cand.size == 0:
            continue
        order = np.lexsort((cand, d2[cand]))
        cand = cand[order]
        take = min(k, cand.size)
        idx[i, :take] = cand[:take]
        if take < k:
            idx[i, take:] = cand[0]
        counts[i] = take
    return idx, counts
