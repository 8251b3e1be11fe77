"""Wall-clock benchmarks for the geometry kernels and the forward pass.

Each row reports the median and variance of >= 10 repetitions; "naive"
rows time the in-package brute-force references at the same sizes so
speedups can be read straight off the CSV.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import (
    NeighborhoodSpec,
    PointCloud,
    SamplingParams,
    available_backends,
    build_index,
    dfps,
    dfps_weights,
    estimate_normals,
    fps,
)
from .geometry.naive import ball_query_naive, dfps_naive, fps_naive
from .morphable import make_toy_model, synthesize
from .network import Network, micro_spec, preprocess, full_scale_spec

CSV_FIELDS = ("kernel", "implementation", "n", "count", "radius", "k",
              "repeats", "median_ms", "variance_ms2")


@dataclass
class BenchRow:
    kernel: str
    implementation: str
    n: int
    count: int = 0
    radius: float = 0.0
    k: int = 0
    repeats: int = 0
    median_ms: float = 0.0
    variance_ms2: float = 0.0

    def csv_row(self):
        return [self.kernel, self.implementation, self.n, self.count,
                self.radius, self.k, self.repeats, self.median_ms,
                self.variance_ms2]


def _time(fn, repeats: int):
    samples = []
    fn()  # warm-up outside the timed set
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) * 1e3)
    arr = np.asarray(samples)
    return float(np.median(arr)), float(arr.var())


def _cloud(n: int, seed: int = 0) -> PointCloud:
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 3)) * 30.0
    ev = rng.uniform(1e-4, 0.33, size=n)
    return PointCloud(points=pts, eigenvalues=ev, nose_tip=np.zeros(3))


def bench_fps(n: int, count: int, repeats: int = 10,
              include_naive: bool = True) -> list:
    cloud = _cloud(n)
    rows = []
    for backend in available_backends():
        med, var = _time(lambda: fps(cloud, count, backend=backend), repeats)
        rows.append(BenchRow("fps", backend, n, count=count, repeats=repeats,
                             median_ms=med, variance_ms2=var))
    if include_naive:
        reps = max(3, repeats // 3)
        med, var = _time(lambda: fps_naive(cloud.points, count), reps)
        rows.append(BenchRow("fps", "naive", n, count=count, repeats=reps,
                             median_ms=med, variance_ms2=var))
    return rows


def bench_dfps(n: int, count: int, radius: float = 65.0, exponent: float = 0.1,
               repeats: int = 10, include_naive: bool = True) -> list:
    cloud = _cloud(n)
    params = SamplingParams(radius=radius, exponent=exponent)
    rows = []
    for backend in available_backends():
        med, var = _time(lambda: dfps(cloud, count, params, backend=backend), repeats)
        rows.append(BenchRow("dfps", backend, n, count=count, radius=radius,
                             repeats=repeats, median_ms=med, variance_ms2=var))
    if include_naive:
        weights, in_r, d2 = dfps_weights(cloud, radius, exponent)
        seed = int(np.argmin(np.where(in_r, d2, np.inf)))
        reps = max(3, repeats // 3)
        med, var = _time(lambda: dfps_naive(cloud.points, weights, count, seed), reps)
        rows.append(BenchRow("dfps", "naive", n, count=count, radius=radius,
                             repeats=reps, median_ms=med, variance_ms2=var))
    return rows


def bench_ball_query(n: int, m: int, radius: float, k: int, repeats: int = 10,
                     include_naive: bool = True) -> list:
    cloud = _cloud(n)
    rng = np.random.default_rng(1)
    centers = cloud.points[rng.choice(n, size=min(m, n), replace=False)]
    rows = []
    for backend in available_backends():
        index = build_index(cloud.points, backend=backend)
        med, var = _time(lambda: index.ball_query_many(centers, radius, k), repeats)
        rows.append(BenchRow("ball_query", backend, n, count=centers.shape[0],
                             radius=radius, k=k, repeats=repeats,
                             median_ms=med, variance_ms2=var))
    if include_naive:
        reps = max(3, repeats // 3)
        med, var = _time(lambda: ball_query_naive(cloud.points, centers, radius, k), reps)
        rows.append(BenchRow("ball_query", "naive", n, count=centers.shape[0],
                             radius=radius, k=k, repeats=reps,
                             median_ms=med, variance_ms2=var))
    return rows


def bench_normals(n: int, k: int = 16, repeats: int = 10) -> list:
    cloud = _cloud(n)
    med, var = _time(lambda: estimate_normals(cloud, NeighborhoodSpec(k=k)), repeats)
    return [BenchRow("estimate_normals", "library", n, k=k, repeats=repeats,
                     median_ms=med, variance_ms2=var)]


def bench_forward(n: int, repeats: int = 10, arch: str = "micro") -> list:
    model = make_toy_model(max(n, 200), 4, 4, seed=0)
    cloud = preprocess(synthesize(model, np.zeros(4), np.zeros(4)))
    spec = full_scale_spec(4) if arch == "full" else micro_spec(4)
    net = Network(spec, seed=0)
    med, var = _time(lambda: net.forward([cloud], train=False), repeats)
    return [BenchRow("forward", arch, cloud.n_points, repeats=repeats,
                     median_ms=med, variance_ms2=var)]


def standard_suite(repeats: int = 10, full_scale: bool = False) -> list:
    """The default bench: sampling and query kernels at a mid size, plus
    the full-scale comparison rows when requested."""
    rows = []
    rows += bench_fps(4096, 512, repeats)
    rows += bench_dfps(4096, 512, repeats=repeats)
    rows += bench_ball_query(4096, 512, 8.0, 16, repeats)
    rows += bench_normals(4096, 16, repeats)
    rows += bench_forward(2048, max(3, repeats // 3), arch="micro")
    if full_scale:
        rows += bench_fps(24576, 256, repeats)
        rows += bench_ball_query(24576, 4096, 4.0, 24, repeats)
    return rows


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_FIELDS)
        for row in rows:
            writer.writerow(row.csv_row())


def median_of(rows, kernel: str, implementation: str) -> Optional[float]:
    for row in rows:
        if row.kernel == kernel and row.implementation == implementation:
            return row.median_ms
    return None
