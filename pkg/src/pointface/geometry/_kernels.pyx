# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops: ball query over a uniform grid, farthest point
sampling, and its dithered variant.

Arithmetic mirrors kernels_numpy bit for bit: squared distances as
dx*dx + dy*dy + dz*dz in f64, first-maximum selection, (distance, index)
tie-breaking.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


cdef inline double _d2(const double* a, const double* b) nogil:
    cdef double dx = a[0] - b[0]
    cdef double dy = a[1] - b[1]
    cdef double dz = a[2] - b[2]
    return dx * dx + dy * dy + dz * dz


cdef inline cnp.int64_t _clampi(cnp.int64_t v, cnp.int64_t lo, cnp.int64_t hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def ball_query_many(cnp.ndarray[cnp.float64_t, ndim=1] origin,
                    double h,
                    cnp.ndarray[cnp.int64_t, ndim=1] dims,
                    cnp.ndarray[cnp.int64_t, ndim=1] cell_start,
                    cnp.ndarray[cnp.int64_t, ndim=1] order,
                    cnp.ndarray[cnp.float64_t, ndim=2] points,
                    cnp.ndarray[cnp.float64_t, ndim=2] centers,
                    double r,
                    int k):
    """Per center: up to k in-radius points nearest-first, padded by the
    nearest. Returns (indices (M,k), true counts (M,))."""
    cdef Py_ssize_t m = centers.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.full((m, k), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(m, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf_d2 = np.empty(k, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] buf_ix = np.empty(k, dtype=np.int64)

    cdef double r2 = r * r
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef cnp.int64_t nx = dims[0], ny = dims[1], nz = dims[2]
    cdef Py_ssize_t i, s, e, t, pos, q
    cdef cnp.int64_t cx0, cx1, cy0, cy1, cz0, cz1, cx, cy, cz, base, pj
    cdef double px, py, pz, d2
    cdef int cnt
    cdef const double* c
    cdef const double* pts = &points[0, 0]

    for i in range(m):
        c = &centers[i, 0]
        px = c[0]; py = c[1]; pz = c[2]
        cx0 = _clampi(<cnp.int64_t>floor((px - r - ox) / h), 0, nx - 1)
        cx1 = _clampi(<cnp.int64_t>floor((px + r - ox) / h), 0, nx - 1)
        cy0 = _clampi(<cnp.int64_t>floor((py - r - oy) / h), 0, ny - 1)
        cy1 = _clampi(<cnp.int64_t>floor((py + r - oy) / h), 0, ny - 1)
        cz0 = _clampi(<cnp.int64_t>floor((pz - r - oz) / h), 0, nz - 1)
        cz1 = _clampi(<cnp.int64_t>floor((pz + r - oz) / h), 0, nz - 1)
        cnt = 0
        for cx in range(cx0, cx1 + 1):
            for cy in range(cy0, cy1 + 1):
                base = (cx * ny + cy) * nz
                s = cell_start[base + cz0]
                e = cell_start[base + cz1 + 1]
                for t in range(s, e):
                    pj = order[t]
                    d2 = _d2(pts + 3 * pj, c)
                    if d2 <= r2:
                        # keep the k smallest by (d2, index)
                        if cnt < k:
                            pos = cnt
                            while pos > 0 and (buf_d2[pos - 1] > d2 or
                                               (buf_d2[pos - 1] == d2 and buf_ix[pos - 1] > pj)):
                                buf_d2[pos] = buf_d2[pos - 1]
                                buf_ix[pos] = buf_ix[pos - 1]
                                pos -= 1
                            buf_d2[pos] = d2
                            buf_ix[pos] = pj
                            cnt += 1
                        elif (buf_d2[k - 1] > d2 or
                              (buf_d2[k - 1] == d2 and buf_ix[k - 1] > pj)):
                            pos = k - 1
                            while pos > 0 and (buf_d2[pos - 1] > d2 or
                                               (buf_d2[pos - 1] == d2 and buf_ix[pos - 1] > pj)):
                                buf_d2[pos] = buf_d2[pos - 1]
                                buf_ix[pos] = buf_ix[pos - 1]
                                pos -= 1
                            buf_d2[pos] = d2
                            buf_ix[pos] = pj
        counts[i] = cnt
        for q in range(cnt):
            out[i, q] = buf_ix[q]
        if cnt > 0:
            for q in range(cnt, k):
                out[i, q] = buf_ix[0]
    return out, counts


def fps(cnp.ndarray[cnp.float64_t, ndim=2] points, int nb, cnp.int64_t seed_index):
    cdef Py_ssize_t n = points.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] selected = np.empty(nb, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mind2 = np.empty(n, dtype=np.float64)
    cdef const double* pts = &points[0, 0]
    cdef Py_ssize_t j, t
    cdef cnp.int64_t bj
    cdef double best, d2

    selected[0] = seed_index
    for j in range(n):
        mind2[j] = _d2(pts + 3 * j, pts + 3 * seed_index)
    mind2[seed_index] = -1.0
    for t in range(1, nb):
        best = mind2[0]
        bj = 0
        for j in range(1, n):
            if mind2[j] > best:
                best = mind2[j]
                bj = j
        selected[t] = bj
        for j in range(n):
            d2 = _d2(pts + 3 * j, pts + 3 * bj)
            if d2 < mind2[j]:
                mind2[j] = d2
        mind2[bj] = -1.0
    return selected


def dfps(cnp.ndarray[cnp.float64_t, ndim=2] points,
         cnp.ndarray[cnp.float64_t, ndim=1] weights,
         int nb,
         cnp.int64_t seed_index):
    cdef Py_ssize_t n = points.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] selected = np.empty(nb, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] mind2 = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] alive = np.empty(n, dtype=np.uint8)
    cdef const double* pts = &points[0, 0]
    cdef Py_ssize_t j, t
    cdef cnp.int64_t bj
    cdef double best, d2, m, s

    selected[0] = seed_index
    for j in range(n):
        alive[j] = 1 if weights[j] > 0.0 else 0
        mind2[j] = _d2(pts + 3 * j, pts + 3 * seed_index)
    alive[seed_index] = 0
    for t in range(1, nb):
        best = -1.0
        bj = -1
        for j in range(n):
            if alive[j]:
                m = mind2[j] if mind2[j] > 0.0 else 0.0
                s = weights[j] * sqrt(m)
                if s > best:
                    best = s
                    bj = j
        if bj < 0:
            raise RuntimeError("dithered sampling ran out of candidates")
        selected[t] = bj
        alive[bj] = 0
        for j in range(n):
            d2 = _d2(pts + 3 * j, pts + 3 * bj)
            if d2 < mind2[j]:
                mind2[j] = d2
    return selected
