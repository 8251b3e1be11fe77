"""Network assembly: shape chain, reference-forward equivalence,
invariances, and training behavior."""

import numpy as np
import pytest

from pointface.errors import InsufficientPoints, InvalidInput
from pointface.geometry import PointCloud, SamplingParams
from pointface.morphable import GenParams, generate_face, make_toy_model, synthesize
from pointface.network import (
    LayerSpec,
    Network,
    NetworkSpec,
    micro_spec,
    preprocess,
    full_scale_spec,
)
from pointface.training import FitConfig, fit, resample_to, split_gallery_probe, train_step

from oracles import brute_ball_query, brute_dfps, max_rel_err


def tiny_two_layer_spec(n_classes=3):
    return NetworkSpec(
        layers=(
            LayerSpec(128, 32, 15.0, 4, 0, 8),
            LayerSpec(32, 8, 25.0, 4, 8, 16),
        ),
        fc_widths=(16, 8),
        n_classes=n_classes,
        n0=128,
        dropout_rate=0.5,
        eval_sampling=SamplingParams(radius=100.0, exponent=-0.1),
    )


def overfit_spec(n_classes):
    return NetworkSpec(
        layers=(
            LayerSpec(256, 64, 10.0, 6, 0, 16),
            LayerSpec(64, 16, 20.0, 8, 16, 32),
        ),
        fc_widths=(64, 32),
        n_classes=n_classes,
        n0=256,
        dropout_rate=0.0,
        train_sampling=SamplingParams(radius=65.0, exponent=0.0),
        eval_sampling=SamplingParams(radius=65.0, exponent=0.0),
    )


def random_face_cloud(rng, n=128, scale=25.0):
    pts = rng.normal(size=(n, 3)) * scale
    cloud = PointCloud(points=pts, nose_tip=pts[int(rng.integers(n))] + 1.0)
    return preprocess(cloud, normals_k=8)


@pytest.fixture(scope="module")
def toy_model():
    return make_toy_model(2000, 20, 20, seed=5)


# -------------------------------------------------------------- shape chain


def test_full_scale_shape_chain():
    model = make_toy_model(24576, 4, 4, seed=1)
    cloud = preprocess(synthesize(model, np.zeros(4), np.zeros(4)))
    net = Network(full_scale_spec(n_classes=10), seed=0)
    trace = []
    emb, logits = net.forward([cloud], train=False, shape_trace=trace)
    assert trace == [
        (1, 4096, 32), (1, 1024, 64), (1, 256, 128), (1, 64, 256),
        (1, 256), (1, 256),
    ]
    assert logits is None
    assert emb.data.shape == (1, 256)
    assert np.isfinite(emb.data).all()


def test_spec_chain_validation():
    with pytest.raises(InvalidInput):
        NetworkSpec(
            layers=(LayerSpec(128, 32, 5.0, 4, 0, 8), LayerSpec(64, 8, 5.0, 4, 8, 16)),
            fc_widths=(16, 8), n_classes=2, n0=128,
        )
    with pytest.raises(InvalidInput):
        NetworkSpec(
            layers=(LayerSpec(128, 32, 5.0, 4, 0, 8), LayerSpec(32, 8, 5.0, 4, 4, 16)),
            fc_widths=(16, 8), n_classes=2, n0=128,
        )


def test_spec_round_trips_through_dict():
    spec = micro_spec(17)
    back = NetworkSpec.from_dict(spec.to_dict())
    assert back == spec


# ------------------------------------------------------- naive reference


def naive_reference_forward(net, cloud):
    """Straight-line eval forward with no indexing acceleration: plain
    scans, explicit loops, eval batch norm."""
    spec = net.spec
    params = {k: t.data for k, t in net.store.params.items()}
    buffers = net.store.buffers
    eps = 1e-8

    def bn_eval(x, prefix):
        rm = buffers[f"{prefix}.running_mean"]
        rv = buffers[f"{prefix}.running_var"]
        xh = (x - rm) / np.sqrt(rv + eps)
        return params[f"{prefix}.gamma"] * xh + params[f"{prefix}.beta"]

    def mlp(x, layer_name, n_sub):
        for s in range(n_sub):
            x = x @ params[f"{layer_name}.mlp{s}.w"] + params[f"{layer_name}.mlp{s}.b"]
            x = bn_eval(x, f"{layer_name}.bn{s}")
            x = np.maximum(x, 0.0)
        return x

    pts = cloud.points
    ev = cloud.eigenvalues
    feats = None
    attrs = np.column_stack([cloud.normals, cloud.eigenvalues])
    sp = spec.eval_sampling
    for li, layer in enumerate(spec.layers):
        d_nose = np.linalg.norm(pts - cloud.nose_tip, axis=1)
        in_r = d_nose <= sp.radius
        weights = np.where(in_r, np.clip(ev, 1e-6, 1.0) ** sp.exponent, 0.0)
        seed = int(np.argmin(np.where(in_r, ((pts - cloud.nose_tip) ** 2).sum(1), np.inf)))
        sel = brute_dfps(pts, weights, layer.n_out, seed)
        centers = pts[sel]
        rows = []
        for ci in range(layer.n_out):
            nbr_idx, offs = brute_ball_query(pts, centers[ci], layer.radius, layer.k)
            if li == 0:
                row = np.concatenate([offs, attrs[nbr_idx]], axis=1)
            else:
                row = np.concatenate([offs, feats[nbr_idx]], axis=1)
            rows.append(row)
        x = np.stack(rows)                       # (NB, k, Cin)
        x = mlp(x, f"layer{li + 1}", len(net.mlps[li].blocks))
        feats = x.max(axis=1)                    # (NB, m)
        pts, ev = centers, ev[sel]
        if li == 0:
            attrs = None
    g = feats.max(axis=0)
    h = np.maximum(bn_eval(g @ params["head.fc1.w"] + params["head.fc1.b"], "head.bn1"), 0.0)
    return np.maximum(bn_eval(h @ params["head.fc2.w"] + params["head.fc2.b"], "head.bn2"), 0.0)


def test_forward_matches_naive_reference():
    rng = np.random.default_rng(7)
    cloud = random_face_cloud(rng)
    net = Network(tiny_two_layer_spec(), seed=3)
    emb, _ = net.forward([cloud], train=False)
    ref = naive_reference_forward(net, cloud)
    assert max_rel_err(emb.data[0], ref) < 1e-9


# ------------------------------------------------------------- invariances


def test_permutation_invariance(toy_model):
    rng = np.random.default_rng(11)
    cloud = generate_face(toy_model, GenParams(sigma_delta=0.2), np.random.default_rng(0))
    cloud = resample_to(cloud, 2048, rng)
    net = Network(micro_spec(5), seed=2)
    emb_a = net.embed(cloud)
    perm = rng.permutation(cloud.n_points)
    shuffled = PointCloud(points=cloud.points[perm], nose_tip=cloud.nose_tip)
    emb_b = net.embed(shuffled)
    assert np.abs(emb_a - emb_b).max() < 1e-6


def test_translation_invariance(toy_model):
    cloud = generate_face(toy_model, GenParams(sigma_delta=0.2), np.random.default_rng(1))
    cloud = resample_to(cloud, 2048, np.random.default_rng(3))
    net = Network(micro_spec(5), seed=2)
    emb_a = net.embed(cloud)
    emb_b = net.embed(cloud.translated([40.0, -25.0, 60.0]))
    assert np.abs(emb_a - emb_b).max() < 1e-9


def test_embed_deterministic_and_finite(toy_model):
    cloud = generate_face(toy_model, GenParams(), np.random.default_rng(2))
    net = Network(micro_spec(5), seed=0)
    a = net.embed(cloud)
    b = net.embed(cloud)
    assert np.array_equal(a, b)
    assert a.shape == (128,)
    assert np.isfinite(a).all()


def test_insufficient_points_propagates():
    rng = np.random.default_rng(13)
    pts = rng.normal(size=(128, 3)) * 200.0   # spread far beyond the 100mm gate
    cloud = preprocess(PointCloud(points=pts, nose_tip=pts[0]), normals_k=8)
    net = Network(tiny_two_layer_spec(), seed=0)
    with pytest.raises(InsufficientPoints):
        net.forward([cloud], train=False)


# ------------------------------------------------------------- gradients


def test_full_network_gradient_matches_finite_differences():
    rng = np.random.default_rng(17)
    spec = NetworkSpec(
        layers=(
            LayerSpec(96, 24, 15.0, 4, 0, 8),
            LayerSpec(24, 8, 30.0, 4, 8, 16),
        ),
        fc_widths=(16, 8),
        n_classes=3,
        n0=96,
        dropout_rate=0.0,     # keep the train-mode map differentiable
        train_sampling=SamplingParams(radius=100.0, exponent=0.05),
        eval_sampling=SamplingParams(radius=100.0, exponent=0.0),
    )
    net = Network(spec, seed=5)
    clouds = [random_face_cloud(rng, n=96) for _ in range(2)]
    labels = np.array([0, 2])

    def run_loss():
        return net.loss(clouds, labels, rng=np.random.default_rng(0))

    loss = run_loss()
    loss.backward()
    grads = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
             for k, t in net.store.params.items()}
    net.store.zero_grad()

    # central-difference noise is ulp(loss)/2h ~ 1e-11, so denominators are
    # floored at 1e-5: relative 1e-4 above that scale, absolute 1e-9 below
    h = 1e-5
    worst = 0.0
    for name, t in net.store.params.items():
        flat = t.data.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(run_loss().data)
            flat[i] = orig - h
            fm = float(run_loss().data)
            flat[i] = orig
            fd = (fp - fm) / (2 * h)
            err = abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i]), 1e-5)
            worst = max(worst, err)
    assert worst < 1e-4, f"worst relative gradient error {worst}"


# ------------------------------------------------------------- training


def make_labeled_dataset(model, n_ids, n_expr, seed, id_offset=0):
    clouds = []
    params = GenParams(sigma_delta=0.2, rotation_limits=(10.0, 10.0, 10.0))
    for i in range(n_ids):
        rng = np.random.default_rng([seed, i])
        alpha = rng.normal(size=model.n_shape)
        for e in range(n_expr):
            cloud = generate_face(model, params, np.random.default_rng([seed, i, e]),
                                  alpha=alpha, neutral=(e == 0))
            clouds.append(cloud.with_fields(id_label=f"id{i + id_offset:04d}",
                                            expr_label=f"e{e:04d}"))
    return clouds


def test_zero_lr_step_leaves_parameters_identical(toy_model):
    clouds = make_labeled_dataset(toy_model, 2, 2, seed=1)
    net = Network(overfit_spec(2), seed=1)
    before = {k: t.data.copy() for k, t in net.store.params.items()}
    loss = train_step(net, clouds, np.array([0, 0, 1, 1]),
                      np.random.default_rng(0), lr=0.0, weight_decay=0.0)
    assert np.isfinite(loss)
    for k, t in net.store.params.items():
        assert np.array_equal(before[k], t.data), k


def test_overfit_small_set(toy_model):
    # capacity check: clouds pre-resampled to n0, so every step sees the
    # same 16 inputs and the optimizer can actually memorize them
    raw = make_labeled_dataset(toy_model, 4, 4, seed=2)
    sampler = np.random.default_rng(7)
    clouds = [resample_to(c, 256, sampler) for c in raw]
    labels = np.array([i // 4 for i in range(16)])
    net = Network(overfit_spec(4), seed=1)
    rng = np.random.default_rng(42)
    losses = []
    for step in range(200):
        losses.append(train_step(net, clouds, labels, rng, lr=3e-3, weight_decay=0.0))
    assert min(losses[-20:]) < 0.05, f"final losses {losses[-5:]}"


def test_fit_schedule_best_selection_and_resume(toy_model, tmp_path):
    train_clouds = make_labeled_dataset(toy_model, 6, 4, seed=3)
    val_clouds = make_labeled_dataset(toy_model, 3, 3, seed=4, id_offset=100)
    cfg = FitConfig(epochs=4, batch_size=8, lr=3e-3, lr_decay=0.1,
                    lr_decay_every=2, weight_decay=1e-4, seed=9)

    net = Network(overfit_spec(6), seed=2)
    result = fit(net, train_clouds, val_clouds, cfg)
    assert [r.lr for r in result.records] == pytest.approx([3e-3, 3e-3, 3e-4, 3e-4])
    losses = [r.verification_loss for r in result.records]
    assert result.best_verification_loss == min(losses)
    assert result.records[result.best_epoch - 1].verification_loss == min(losses)
    assert result.best_verification_loss <= result.records[0].verification_loss

    # resume: replay epochs 3-4 from a snapshot taken after epoch 2
    net2 = Network(overfit_spec(6), seed=2)
    snapshots = {}

    def capture(record, network, is_best):
        if record.epoch == 2:
            snapshots["state"] = {k: v.copy() for k, v in network.store.state_arrays().items()}
            snapshots["opt"] = {k: v.copy() for k, v in network.store.optimizer_arrays().items()}
            snapshots["steps"] = network.store.step_count

    first_half = fit(net2, train_clouds, val_clouds,
                     FitConfig(**{**cfg.__dict__, "epochs": 2}), on_epoch=capture)

    net3 = Network(overfit_spec(6), seed=2)
    net3.store.load_state(snapshots["state"], snapshots["opt"], snapshots["steps"])
    best2 = min(first_half.records, key=lambda r: r.verification_loss)
    resumed = fit(net3, train_clouds, val_clouds, cfg, start_epoch=3,
                  best_so_far=(best2.epoch, best2.verification_loss, snapshots["state"]))
    for a, b in zip(result.records[2:], resumed.records):
        assert a.epoch == b.epoch
        assert a.train_loss == b.train_loss
        assert a.verification_loss == b.verification_loss
    assert resumed.best_epoch == result.best_epoch
    assert resumed.best_verification_loss == result.best_verification_loss


def test_fit_rejects_identity_overlap(toy_model):
    train_clouds = make_labeled_dataset(toy_model, 3, 2, seed=5)
    val_clouds = make_labeled_dataset(toy_model, 2, 2, seed=6)  # same id labels
    net = Network(overfit_spec(3), seed=0)
    with pytest.raises(InvalidInput, match="overlap"):
        fit(net, train_clouds, val_clouds, FitConfig(epochs=1, batch_size=4))


def test_split_gallery_probe_uses_first_expression(toy_model):
    clouds = make_labeled_dataset(toy_model, 3, 3, seed=7)
    gallery, probes = split_gallery_probe(clouds)
    assert len(gallery) == 3
    assert len(probes) == 6
    assert all(g.expr_label == "e0000" for g in gallery)


def test_resample_to_up_and_down(toy_model):
    cloud = synthesize(toy_model, np.zeros(20), np.zeros(20))
    rng = np.random.default_rng(0)
    up = resample_to(cloud, 3000, rng)
    down = resample_to(cloud, 500, rng)
    assert up.n_points == 3000
    assert down.n_points == 500
    assert len(np.unique(down.points, axis=0)) == 500  # sampled without replacement


def test_lr_schedule_default_recipe():
    cfg = FitConfig()
    assert cfg.lr_at(1) == 1e-3
    assert cfg.lr_at(10) == 1e-3
    assert cfg.lr_at(11) == 1e-4
    assert cfg.lr_at(21) == pytest.approx(1e-5)
    assert cfg.lr_at(31) == pytest.approx(1e-6)
    assert cfg.lr_at(35) == pytest.approx(1e-6)
