"""Morphable-model synthesis, fitting, and dataset generation."""

import numpy as np
import pytest

from pointface.errors import InvalidInput, ModelFormatError, SingularSystem
from pointface.morphable import (
    DatasetManifest,
    GenParams,
    MorphableModel,
    euler_rotation,
    fit_coeffs,
    generate_dataset,
    generate_face,
    iter_faces,
    load_model,
    make_toy_model,
    mix_expression,
    save_model,
    synthesize,
    synthesize_vector,
)


@pytest.fixture(scope="module")
def toy():
    return make_toy_model(n_vertices=400, n_shape=8, n_expr=6, seed=11)


# ------------------------------------------------------------- toy model


def test_toy_model_deterministic():
    a = make_toy_model(300, 5, 4, seed=3)
    b = make_toy_model(300, 5, 4, seed=3)
    assert np.array_equal(a.mean, b.mean)
    assert np.array_equal(a.shape_basis, b.shape_basis)
    assert np.array_equal(a.expr_var, b.expr_var)
    assert a.nose_tip_vertex == b.nose_tip_vertex


def test_toy_model_orthonormal_bases(toy):
    for basis in (toy.shape_basis, toy.expr_basis):
        gram = basis.T @ basis
        np.testing.assert_allclose(gram, np.eye(basis.shape[1]), atol=1e-10)


def test_toy_model_zero_coeffs_reproduce_mean():
    model = make_toy_model(2000, 20, 20, seed=0)
    cloud = synthesize(model, np.zeros(20), np.zeros(20))
    assert np.array_equal(cloud.points.reshape(-1), model.mean)
    assert np.array_equal(cloud.nose_tip, cloud.points[model.nose_tip_vertex])


def test_toy_model_minimum_size():
    with pytest.raises(InvalidInput):
        make_toy_model(50)


def test_toy_nose_is_forward_extreme(toy):
    # the anchor should protrude: locally maximal z in its neighborhood
    pts = toy.mean.reshape(-1, 3)
    nose = pts[toy.nose_tip_vertex]
    d = np.linalg.norm(pts - nose, axis=1)
    nearby = d < 10.0
    assert nose[2] >= pts[nearby, 2].max()


# ------------------------------------------------------------- container IO


def test_container_round_trip(tmp_path, toy):
    path = tmp_path / "toy.gpmm"
    save_model(toy, path)
    back = load_model(path)
    assert np.array_equal(back.mean, toy.mean)
    assert np.array_equal(back.shape_basis, toy.shape_basis)
    assert np.array_equal(back.shape_var, toy.shape_var)
    assert np.array_equal(back.expr_basis, toy.expr_basis)
    assert np.array_equal(back.expr_var, toy.expr_var)
    assert back.nose_tip_vertex == toy.nose_tip_vertex


def test_container_truncated_mid_basis(tmp_path, toy):
    path = tmp_path / "toy.gpmm"
    save_model(toy, path)
    blob = path.read_bytes()
    cut = 20 + 8 * (3 * toy.n_vertices) + 8 * 100  # partway into the shape basis
    (tmp_path / "short.gpmm").write_bytes(blob[:cut])
    with pytest.raises(ModelFormatError, match="shape basis"):
        load_model(tmp_path / "short.gpmm")


def test_container_zero_dimension_rejected(tmp_path, toy):
    path = tmp_path / "toy.gpmm"
    save_model(toy, path)
    blob = bytearray(path.read_bytes())
    blob[12:16] = (0).to_bytes(4, "little")  # dS = 0
    (tmp_path / "bad.gpmm").write_bytes(bytes(blob))
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "bad.gpmm")


def test_container_bad_magic(tmp_path):
    (tmp_path / "junk.gpmm").write_bytes(b"NOPE" + b"\0" * 64)
    with pytest.raises(ModelFormatError):
        load_model(tmp_path / "junk.gpmm")


# ------------------------------------------------------------- synthesis


def test_synthesize_unit_coefficient_matches_matrix_arithmetic(toy):
    alpha = np.zeros(toy.n_shape)
    alpha[0] = 1.0
    cloud = synthesize(toy, alpha, np.zeros(toy.n_expr))
    expected = toy.mean + np.sqrt(toy.shape_var[0]) * toy.shape_basis[:, 0]
    np.testing.assert_allclose(cloud.points.reshape(-1), expected, rtol=0, atol=1e-12)


def test_synthesize_linearity(toy):
    rng = np.random.default_rng(5)
    a1 = rng.normal(size=toy.n_shape)
    a2 = rng.normal(size=toy.n_shape)
    z = np.zeros(toy.n_expr)
    lhs = synthesize_vector(toy, a1 + a2, z) - toy.mean
    rhs = (synthesize_vector(toy, a1, z) - toy.mean) + (synthesize_vector(toy, a2, z) - toy.mean)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_synthesize_dimension_mismatch(toy):
    with pytest.raises(InvalidInput):
        synthesize(toy, np.zeros(toy.n_shape + 1), np.zeros(toy.n_expr))


# ------------------------------------------------------------- generation


def test_generate_face_all_randomness_off(toy):
    params = GenParams(sigma_alpha=0, sigma_beta=0, sigma_delta=0, rotation_limits=(0, 0, 0))
    cloud = generate_face(toy, params, np.random.default_rng(0))
    assert np.array_equal(cloud.points.reshape(-1), toy.mean)


def test_expression_mixing_endpoints(toy):
    rng = np.random.default_rng(1)
    b_real = rng.normal(size=toy.n_expr)
    b_rand = rng.normal(size=toy.n_expr)
    assert np.array_equal(mix_expression(b_real, b_rand, 0.0), b_rand)
    assert np.array_equal(mix_expression(b_real, b_rand, 1.0), b_real)


def test_guided_pool_with_forced_lambda(toy):
    rng = np.random.default_rng(2)
    beta_star = rng.normal(size=toy.n_expr)
    # sigma_beta = 0 makes the random component exactly zero: beta = lam*beta_star
    mixed = mix_expression(beta_star, np.zeros(toy.n_expr), 1.0)
    ref = synthesize(toy, np.zeros(toy.n_shape), beta_star)
    got = synthesize(toy, np.zeros(toy.n_shape), mixed)
    assert np.array_equal(got.points, ref.points)


def test_rotation_is_proper_and_rigid(toy):
    rot = euler_rotation(17.0, -8.0, 5.0)
    np.testing.assert_allclose(rot @ rot.T, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(rot) - 1.0) < 1e-12

    params = GenParams(sigma_alpha=1.0, sigma_beta=0, sigma_delta=0,
                       rotation_limits=(20, 20, 20))
    rng = np.random.default_rng(3)
    alpha = rng.normal(size=toy.n_shape)
    cloud = generate_face(toy, params, rng, alpha=alpha)
    ref = synthesize(toy, alpha, np.zeros(toy.n_expr))
    sub = np.arange(0, 400, 13)
    d_got = np.linalg.norm(cloud.points[sub][:, None] - cloud.points[sub][None, :], axis=2)
    d_ref = np.linalg.norm(ref.points[sub][:, None] - ref.points[sub][None, :], axis=2)
    np.testing.assert_allclose(d_got, d_ref, atol=1e-9)


def test_nose_tip_transforms_consistently(toy):
    params = GenParams(sigma_delta=0.5, rotation_limits=(15, 15, 15))
    cloud = generate_face(toy, params, np.random.default_rng(4))
    assert np.array_equal(cloud.nose_tip, cloud.points[toy.nose_tip_vertex])


# ------------------------------------------------------------- fitting


def test_fit_expression_noiseless_round_trip(toy):
    rng = np.random.default_rng(6)
    beta_star = rng.normal(size=toy.n_expr)
    target = synthesize(toy, np.zeros(toy.n_shape), beta_star)
    fit = fit_coeffs(toy, target, "expression", ridge=0.0)
    assert np.abs(fit.beta - beta_star).max() < 1e-6
    assert fit.residual_rms < 1e-8


def test_fit_shape_of_mean_is_zero(toy):
    target = synthesize(toy, np.zeros(toy.n_shape), np.zeros(toy.n_expr))
    fit = fit_coeffs(toy, target, "shape", ridge=0.5)
    assert np.array_equal(fit.alpha, np.zeros(toy.n_shape))


def test_two_stage_fit_under_noise(toy):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        alpha_star = rng.normal(size=toy.n_shape)
        beta_star = rng.normal(size=toy.n_expr)
        neutral = synthesize_vector(toy, alpha_star, np.zeros(toy.n_expr))
        expressive = synthesize_vector(toy, alpha_star, beta_star)
        noise = rng.normal(0, 0.1, size=neutral.size)
        fit_a = fit_coeffs(toy, (neutral + noise).reshape(-1, 3), "shape", ridge=1e-6)
        fit_b = fit_coeffs(
            toy, (expressive + rng.normal(0, 0.1, size=neutral.size)).reshape(-1, 3),
            "expression", fixed=fit_a, ridge=1e-6,
        )
        worst = max(worst, fit_b.residual_rms)
    assert worst < 0.2


def test_fit_vertex_mismatch(toy):
    with pytest.raises(InvalidInput):
        fit_coeffs(toy, np.zeros((toy.n_vertices + 1, 3)), "shape")


def test_fit_singular_without_ridge():
    base = make_toy_model(200, 4, 3, seed=9)
    var = base.shape_var.copy()
    var[-1] = 0.0  # zero-variance column makes the scaled basis rank-deficient
    model = MorphableModel(base.mean, base.shape_basis, var,
                           base.expr_basis, base.expr_var, base.nose_tip_vertex)
    target = synthesize(model, np.zeros(4), np.zeros(3))
    with pytest.raises(SingularSystem):
        fit_coeffs(model, target, "shape", ridge=0.0)
    fit = fit_coeffs(model, target, "shape", ridge=1e-8)
    assert fit.residual_rms < 1e-9


# ------------------------------------------------------------- dataset


def collect_sink(store):
    def sink(cloud, id_label, expr_label):
        key = f"{id_label}_{expr_label}.bin"
        store[key] = cloud.points.astype("<f4").tobytes()
        return key
    return sink


def test_generate_dataset_counts_and_determinism(toy):
    params = GenParams(sigma_delta=0.1)
    store_a, store_b = {}, {}
    man_a = generate_dataset(toy, 6, 4, params, seed=77, sink=collect_sink(store_a))
    man_b = generate_dataset(toy, 6, 4, params, seed=77, sink=collect_sink(store_b))
    assert len(man_a.records) == 24
    assert len(man_a.identities()) == 6
    assert man_a.to_json() == man_b.to_json()
    assert store_a == store_b


def test_generate_dataset_thread_count_invariance(toy):
    params = GenParams()
    store_a, store_b = {}, {}
    generate_dataset(toy, 4, 5, params, seed=3, sink=collect_sink(store_a), workers=1)
    generate_dataset(toy, 4, 5, params, seed=3, sink=collect_sink(store_b), workers=4)
    assert store_a == store_b


def test_generate_dataset_degenerate_scale(toy):
    params = GenParams(sigma_alpha=0, sigma_beta=0, sigma_delta=0, rotation_limits=(0, 0, 0))
    store = {}
    generate_dataset(toy, 3, 1, params, seed=0, sink=collect_sink(store))
    expected = toy.mean.reshape(-1, 3).astype("<f4").tobytes()
    assert all(v == expected for v in store.values())


def test_iter_faces_streams_large_scale(toy):
    gen = iter_faces(toy, 3000, 200, GenParams(), seed=1)
    first = [next(gen) for _ in range(3)]
    assert [f[1] for f in first] == ["id0000", "id0000", "id0000"]
    assert [f[2] for f in first] == ["e0000", "e0001", "e0002"]


def test_generate_dataset_rejects_zero_counts(toy):
    with pytest.raises(InvalidInput):
        generate_dataset(toy, 0, 5, GenParams(), seed=0, sink=lambda *a: "x")


def test_manifest_round_trip(tmp_path, toy):
    store = {}
    man = generate_dataset(toy, 2, 2, GenParams(), seed=5, sink=collect_sink(store))
    man.save(tmp_path / "manifest.json")
    back = DatasetManifest.load(tmp_path / "manifest.json")
    assert back.seed == 5
    assert back.records == man.records
