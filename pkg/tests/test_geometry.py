"""Sampling and neighbor-search kernels against brute-force oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointface.errors import InsufficientPoints, InvalidInput
from pointface.geometry import (
    PointCloud,
    SamplingParams,
    available_backends,
    ball_query,
    ball_query_grouped,
    build_index,
    dfps,
    dfps_weights,
    fps,
)
from pointface.diagnostics import Diagnostics

from oracles import brute_ball_query, brute_dfps, brute_fps, brute_knn, brute_radius_members

BACKENDS = available_backends()


def random_cloud(rng, n, scale=50.0):
    return rng.normal(size=(n, 3)) * scale


# ---------------------------------------------------------------- index


@pytest.mark.parametrize("backend", BACKENDS)
def test_singleton_radius_query(backend):
    idx = build_index(np.array([[1.0, 2.0, 3.0]]), backend=backend)
    got = idx.radius_neighbors([1.0, 2.0, 3.0], 0.5)
    assert got.tolist() == [0]


@pytest.mark.parametrize("backend", BACKENDS)
def test_radius_membership_matches_bruteforce(backend):
    rng = np.random.default_rng(7)
    pts = random_cloud(rng, 100, scale=12.0)
    idx = build_index(pts, backend=backend)
    for i in range(100):
        got = set(idx.radius_neighbors(pts[i], 10.0).tolist())
        assert got == brute_radius_members(pts, pts[i], 10.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_unit_cube_corner_query(backend):
    # corner (0,0,0): edge neighbors at 1 mm, face diagonals at ~1.414
    corners = np.array(
        [[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)]
    )
    idx = build_index(corners, backend=backend)
    got = set(idx.radius_neighbors(corners[0], 1.05).tolist())
    assert got == {0, 1, 2, 4}


@pytest.mark.parametrize("backend", BACKENDS)
def test_k_nearest_matches_bruteforce(backend):
    rng = np.random.default_rng(11)
    pts = random_cloud(rng, 64, scale=5.0)
    idx = build_index(pts, backend=backend)
    for i in range(0, 64, 7):
        got = idx.k_nearest(pts[i], 5)
        assert got.tolist() == brute_knn(pts, pts[i], 5).tolist()


def test_index_rejects_empty():
    with pytest.raises(InvalidInput):
        build_index(np.empty((0, 3)))


# ---------------------------------------------------------------- ball query


@pytest.mark.parametrize("backend", BACKENDS)
def test_ball_query_pads_with_self(backend):
    pts = np.array([[0.0, 0.0, 0.0], [100.0, 0.0, 0.0]])
    idx = build_index(pts, backend=backend)
    result = ball_query(idx, pts[0], 1.0, 4)
    assert [i for i, _ in result] == [0, 0, 0, 0]
    for _, off in result:
        assert np.allclose(off, 0.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_ball_query_collinear_padding(backend):
    pts = np.zeros((10, 3))
    pts[:, 0] = np.arange(10.0)  # 1 mm spacing
    idx = build_index(pts, backend=backend)
    result = ball_query(idx, pts[0], 2.5, 8)
    assert [i for i, _ in result] == [0, 1, 2, 0, 0, 0, 0, 0]
    offs = np.array([off for _, off in result])
    assert np.array_equal(offs[:, 0], [0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0])


@pytest.mark.parametrize("backend", BACKENDS)
def test_ball_query_empty_when_center_not_cloud_point(backend):
    pts = np.array([[0.0, 0.0, 0.0]])
    idx = build_index(pts, backend=backend)
    assert ball_query(idx, [50.0, 0.0, 0.0], 1.0, 4) == []


@pytest.mark.parametrize("backend", BACKENDS)
def test_ball_query_matches_bruteforce(backend):
    rng = np.random.default_rng(23)
    pts = random_cloud(rng, 300, scale=8.0)
    idx = build_index(pts, backend=backend)
    for i in range(0, 300, 17):
        got = ball_query(idx, pts[i], 6.0, 10)
        exp_idx, exp_off = brute_ball_query(pts, pts[i], 6.0, 10)
        assert [g for g, _ in got] == exp_idx.tolist()
        np.testing.assert_allclose(np.array([o for _, o in got]), exp_off)


@pytest.mark.parametrize("backend", BACKENDS)
def test_ball_query_offsets_within_radius(backend):
    # layer-1 style configuration: r=4 mm, k=24
    rng = np.random.default_rng(3)
    pts = random_cloud(rng, 4000, scale=30.0)
    idx = build_index(pts, backend=backend)
    centers = pts[rng.choice(4000, size=64, replace=False)]
    _, offsets, _ = ball_query_grouped(idx, centers, 4.0, 24)
    norms = np.linalg.norm(offsets, axis=2)
    assert norms.max() <= 4.0 + 1e-12


def test_ball_query_grouped_counts_and_diagnostics():
    pts = np.zeros((10, 3))
    pts[:, 0] = np.arange(10.0) * 3.0
    idx = build_index(pts)
    diag = Diagnostics()
    got, offs, counts = ball_query_grouped(idx, pts[[0, 5]], 3.5, 4, diag=diag)
    assert counts.tolist() == [2, 3]
    assert diag.padded_queries == 2
    assert got[0].tolist() == [0, 1, 0, 0]
    assert got[1].tolist() == [5, 4, 6, 5]  # ties at 3 mm: smaller index first


# ---------------------------------------------------------------- fps


@pytest.mark.parametrize("backend", BACKENDS)
def test_fps_exhaustion_is_permutation(backend):
    rng = np.random.default_rng(5)
    pts = random_cloud(rng, 40)
    out = fps(pts, 40, seed_index=3, backend=backend)
    assert sorted(out.tolist()) == list(range(40))
    assert out[0] == 3


def test_fps_square_hand_case():
    pts = np.array([[0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [10.0, 10.0, 0.0]])
    out = fps(pts, 3, seed_index=0)
    # diagonal corner first, then the tie resolves to the smaller index
    assert out.tolist() == [0, 3, 1]


@pytest.mark.parametrize("backend", BACKENDS)
def test_fps_matches_bruteforce_oracle(backend):
    rng = np.random.default_rng(42)
    pts = random_cloud(rng, 1000)
    out = fps(pts, 32, seed_index=0, backend=backend)
    assert out.tolist() == brute_fps(pts, 32, 0).tolist()


def test_fps_min_distance_monotone():
    rng = np.random.default_rng(9)
    pts = random_cloud(rng, 200)
    out = fps(pts, 50)
    dmins = []
    for t in range(1, 50):
        sel = pts[out[:t]]
        d = np.linalg.norm(sel - pts[out[t]], axis=1).min()
        dmins.append(d)
    assert all(a >= b - 1e-12 for a, b in zip(dmins, dmins[1:]))


def test_fps_rejects_bad_count():
    pts = np.zeros((5, 3))
    with pytest.raises(InvalidInput):
        fps(pts, 6)
    with pytest.raises(InvalidInput):
        fps(pts, 0)


# ---------------------------------------------------------------- dfps


def synthetic_face_cloud(rng, n=200, spread=40.0):
    pts = rng.normal(size=(n, 3)) * spread
    ev = rng.uniform(1e-4, 0.33, size=n)
    return PointCloud(points=pts, eigenvalues=ev, nose_tip=rng.normal(size=3) * 5.0)


def test_dfps_p_zero_equals_radius_restricted_fps():
    rng = np.random.default_rng(17)
    cloud = synthetic_face_cloud(rng)
    params = SamplingParams(radius=45.0, exponent=0.0)
    out = dfps(cloud, 24, params)
    weights, in_radius, d2 = dfps_weights(cloud, 45.0, 0.0)
    sub = np.flatnonzero(in_radius)
    seed_local = int(np.argmin(d2[sub]))
    sub_out = fps(cloud.points[sub], 24, seed_index=seed_local)
    assert out.tolist() == sub[sub_out].tolist()


@pytest.mark.parametrize("backend", BACKENDS)
def test_dfps_radius_exclusion(backend):
    rng = np.random.default_rng(29)
    cloud = synthetic_face_cloud(rng, n=400, spread=60.0)
    out = dfps(cloud, 32, SamplingParams(radius=65.0), backend=backend)
    d = np.linalg.norm(cloud.points[out] - cloud.nose_tip, axis=1)
    assert d.max() <= 65.0


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("p", [-0.2, 0.2])
def test_dfps_matches_bruteforce_oracle(backend, p):
    rng = np.random.default_rng(int(10 * abs(p)) + 1)
    cloud = synthetic_face_cloud(rng)
    params = SamplingParams(radius=50.0, exponent=p)
    out = dfps(cloud, 20, params, backend=backend)
    weights, in_radius, d2 = dfps_weights(cloud, 50.0, p)
    seed = int(np.argmin(np.where(in_radius, d2, np.inf)))
    assert out.tolist() == brute_dfps(cloud.points, weights, 20, seed).tolist()


def test_dfps_no_duplicates_and_count():
    rng = np.random.default_rng(31)
    cloud = synthetic_face_cloud(rng, n=300)
    out = dfps(cloud, 64, SamplingParams(radius=80.0))
    assert len(set(out.tolist())) == 64


def test_dfps_dither_draws_from_ranges():
    rng = np.random.default_rng(101)
    cloud = synthetic_face_cloud(rng, n=300, spread=20.0)
    params = SamplingParams(dither=True, radius_range=(30.0, 60.0), exponent_range=(-0.2, 0.2))
    draw_rng = np.random.default_rng(0)
    out1 = dfps(cloud, 16, params, rng=draw_rng)
    # same stream state reproduces the draw
    out2 = dfps(cloud, 16, params, rng=np.random.default_rng(0))
    assert out1.tolist() == out2.tolist()
    with pytest.raises(InvalidInput):
        dfps(cloud, 16, params)  # dither without an RNG


def test_dfps_requires_metadata_and_candidates():
    rng = np.random.default_rng(13)
    bare = PointCloud(points=rng.normal(size=(50, 3)))
    with pytest.raises(InvalidInput):
        dfps(bare, 8, SamplingParams())
    cloud = synthetic_face_cloud(rng, n=50, spread=100.0)
    with pytest.raises(InsufficientPoints):
        dfps(cloud, 49, SamplingParams(radius=30.0))


# ---------------------------------------------------------------- properties


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(min_value=4, max_value=48),
    nb=st.integers(min_value=1, max_value=8),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_fps_output_properties(n, nb, seed):
    rng = np.random.default_rng(seed)
    pts = random_cloud(rng, n, scale=10.0)
    nb = min(nb, n)
    out = fps(pts, nb)
    assert out.shape == (nb,)
    assert len(set(out.tolist())) == nb


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_ball_query_membership_property(seed):
    rng = np.random.default_rng(seed)
    pts = random_cloud(rng, 60, scale=4.0)
    idx = build_index(pts)
    center = pts[int(rng.integers(60))]
    r = float(rng.uniform(0.5, 8.0))
    members = set(idx.radius_neighbors(center, r).tolist())
    assert members == brute_radius_members(pts, center, r)


def test_backend_outputs_identical():
    if len(BACKENDS) < 2:
        pytest.skip("only one backend built")
    rng = np.random.default_rng(77)
    cloud = synthetic_face_cloud(rng, n=500, spread=30.0)
    params = SamplingParams(radius=60.0, exponent=-0.15)
    a = dfps(cloud, 40, params, backend="compiled")
    b = dfps(cloud, 40, params, backend="numpy")
    assert a.tolist() == b.tolist()
    ia = build_index(cloud.points, backend="compiled")
    ib = build_index(cloud.points, backend="numpy")
    ga, ca = ia.ball_query_many(cloud.points[:100], 7.0, 16)
    gb, cb = ib.ball_query_many(cloud.points[:100], 7.0, 16)
    assert np.array_equal(ga, gb) and np.array_equal(ca, cb)
