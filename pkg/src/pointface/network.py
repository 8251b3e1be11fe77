"""The point-cloud face embedding network.

Four point layers, each: dithered farthest point sampling selects NB
centroids, a millimeter-radius ball query gathers k neighbors, a shared
MLP lifts per-neighbor features, and a max-pool over neighbors produces
the centroid's feature. A global max-pool and a small FC head then yield
the embedding (penultimate FC activation) and, in training, class logits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .diagnostics import Diagnostics
from .errors import InvalidInput, PreprocessError, ShapeError
from .geometry import (
    NeighborhoodSpec,
    PointCloud,
    SamplingParams,
    ball_query_grouped,
    build_index,
    dfps,
    estimate_normals,
)
from .nn import (
    BatchNorm,
    Dropout,
    Linear,
    ParamStore,
    SharedMLP,
    Tensor,
    concat,
    gather_points,
    max_axis,
    relu,
    softmax_xent,
)


@dataclass(frozen=True)
class LayerSpec:
    """One point layer: n_in points down to n_out centroids, ball query of
    k neighbors within radius millimeters, f_in learned channels in,
    m_out channels out."""

    n_in: int
    n_out: int
    radius: float
    k: int
    f_in: int
    m_out: int

    def __post_init__(self):
        if self.n_out > self.n_in:
            raise InvalidInput(f"layer cannot upsample: {self.n_out} > {self.n_in}")
        if not self.radius > 0 or self.k < 1 or self.m_out < 1:
            raise InvalidInput("layer needs radius > 0, k >= 1, m_out >= 1")


_TRAIN_SAMPLING = SamplingParams(dither=True, radius_range=(50.0, 80.0),
                                 exponent_range=(-0.2, 0.2))
_EVAL_SAMPLING = SamplingParams(radius=65.0, exponent=0.0)


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture parameters; defaults follow the reference four-layer
    configuration (full_scale_spec)."""

    layers: tuple
    fc_widths: tuple
    n_classes: int
    n0: int
    use_surface_attributes: bool = True   # feed normals+eigenvalue into layer 1
    dropout_rate: float = 0.5
    normals_k: int = 16
    train_sampling: SamplingParams = _TRAIN_SAMPLING
    eval_sampling: SamplingParams = _EVAL_SAMPLING

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "fc_widths", tuple(self.fc_widths))
        for a, b in zip(layers[:-1], layers[1:]):
            if a.n_out != b.n_in:
                raise InvalidInput(f"layer chain broken: {a.n_out} -> {b.n_in}")
            if a.m_out != b.f_in:
                raise InvalidInput(f"feature chain broken: {a.m_out} -> {b.f_in}")
        if layers[0].f_in != 0:
            raise InvalidInput("first layer consumes no learned features (f_in = 0)")
        if len(self.fc_widths) != 2:
            raise InvalidInput("fc_widths is (hidden, embedding)")

    @property
    def embedding_dim(self) -> int:
        return self.fc_widths[1]

    def to_dict(self) -> dict:
        return {
            "layers": [
                [l.n_in, l.n_out, l.radius, l.k, l.f_in, l.m_out] for l in self.layers
            ],
            "fc_widths": list(self.fc_widths),
            "n_classes": self.n_classes,
            "n0": self.n0,
            "use_surface_attributes": self.use_surface_attributes,
            "dropout_rate": self.dropout_rate,
            "normals_k": self.normals_k,
            "train_sampling": {
                "dither": self.train_sampling.dither,
                "radius": self.train_sampling.radius,
                "exponent": self.train_sampling.exponent,
                "radius_range": list(self.train_sampling.radius_range),
                "exponent_range": list(self.train_sampling.exponent_range),
            },
            "eval_sampling": {
                "radius": self.eval_sampling.radius,
                "exponent": self.eval_sampling.exponent,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        ts = data["train_sampling"]
        return cls(
            layers=tuple(LayerSpec(*row) for row in data["layers"]),
            fc_widths=tuple(data["fc_widths"]),
            n_classes=data["n_classes"],
            n0=data["n0"],
            use_surface_attributes=data["use_surface_attributes"],
            dropout_rate=data["dropout_rate"],
            normals_k=data["normals_k"],
            train_sampling=SamplingParams(
                radius=ts["radius"], exponent=ts["exponent"], dither=ts["dither"],
                radius_range=tuple(ts["radius_range"]),
                exponent_range=tuple(ts["exponent_range"]),
            ),
            eval_sampling=SamplingParams(
                radius=data["eval_sampling"]["radius"],
                exponent=data["eval_sampling"]["exponent"],
            ),
        )


def full_scale_spec(n_classes: int) -> NetworkSpec:
    """The reference full-scale configuration: 24576 input points, four
    layers thinning to 64 points of 256 channels, 256-d embedding."""
    rows = [
        (24576, 4096, 4.0, 24, 0, 32),
        (4096, 1024, 8.0, 32, 32, 64),
        (1024, 256, 16.0, 48, 64, 128),
        (256, 64, 32.0, 64, 128, 256),
    ]
    return NetworkSpec(
        layers=tuple(LayerSpec(*r) for r in rows),
        fc_widths=(512, 256),
        n_classes=n_classes,
        n0=24576,
    )


def micro_spec(n_classes: int,
               radii=(4.0, 9.0, 20.0, 45.0),
               eval_sampling: SamplingParams = _EVAL_SAMPLING,
               train_sampling: SamplingParams = _TRAIN_SAMPLING) -> NetworkSpec:
    """Desk-scale twin of the reference network: 2048 points, k=8/12/16/24,
    widths 16/32/64/128, 128-d embedding."""
    rows = [
        (2048, 512, radii[0], 8, 0, 16),
        (512, 128, radii[1], 12, 16, 32),
        (128, 32, radii[2], 16, 32, 64),
        (32, 8, radii[3], 24, 64, 128),
    ]
    return NetworkSpec(
        layers=tuple(LayerSpec(*r) for r in rows),
        fc_widths=(256, 128),
        n_classes=n_classes,
        n0=2048,
        train_sampling=train_sampling,
        eval_sampling=eval_sampling,
    )


def nano_spec(n_classes: int,
              eval_sampling: SamplingParams = _EVAL_SAMPLING,
              train_sampling: SamplingParams = _TRAIN_SAMPLING) -> NetworkSpec:
    """Two-layer smoke-test configuration for fast end-to-end runs."""
    rows = [
        (256, 64, 10.0, 6, 0, 16),
        (64, 16, 20.0, 8, 16, 32),
    ]
    return NetworkSpec(
        layers=tuple(LayerSpec(*r) for r in rows),
        fc_widths=(64, 32),
        n_classes=n_classes,
        n0=256,
        train_sampling=train_sampling,
        eval_sampling=eval_sampling,
    )


def preprocess(cloud: PointCloud, normals_k: int = 16,
               diag: Optional[Diagnostics] = None) -> PointCloud:
    """Fill normals and eigenvalues if absent; the nose tip must already be
    present (it is input metadata, not detected here)."""
    if cloud.nose_tip is None:
        raise PreprocessError("cloud has no nose tip; supply one or use the import heuristic")
    if cloud.normals is None or cloud.eigenvalues is None:
        cloud = estimate_normals(cloud, NeighborhoodSpec(k=normals_k), diag=diag)
    return cloud


@dataclass
class _CloudState:
    points: np.ndarray
    eigenvalues: np.ndarray
    nose_tip: np.ndarray


class Network:
    """Parameter container plus the forward pass."""

    def __init__(self, spec: NetworkSpec, seed: int = 0):
        self.spec = spec
        self.store = ParamStore()
        rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
        self.mlps = []
        for i, layer in enumerate(spec.layers):
            c_in = 3 + layer.f_in + (4 if i == 0 and spec.use_surface_attributes else 0)
            widths = [c_in, max(layer.m_out // 2, 1), layer.m_out]
            self.mlps.append(SharedMLP(self.store, f"layer{i + 1}", widths, rng))
        m_last = spec.layers[-1].m_out
        hidden, emb = spec.fc_widths
        self.fc1 = Linear(self.store, "head.fc1", m_last, hidden, rng)
        self.bn1 = BatchNorm(self.store, "head.bn1", hidden)
        self.fc2 = Linear(self.store, "head.fc2", hidden, emb, rng)
        self.bn2 = BatchNorm(self.store, "head.bn2", emb)
        self.fc3 = Linear(self.store, "head.fc3", emb, spec.n_classes, rng)
        self.drop = Dropout(spec.dropout_rate)

    # ------------------------------------------------------------ forward

    def forward(self, clouds: Sequence[PointCloud], train: bool,
                rng: Optional[np.random.Generator] = None,
                diag: Optional[Diagnostics] = None,
                shape_trace: Optional[list] = None):
        """Run the batch through all layers.

        Returns (embedding Tensor (B, emb_dim), logits Tensor or None).
        Clouds must share one point count and carry normals, eigenvalues,
        and nose tips.
        """
        if not clouds:
            raise InvalidInput("empty batch")
        n = clouds[0].n_points
        for c in clouds:
            if c.n_points != n:
                raise InvalidInput("all clouds in a batch must have the same point count")
            if c.normals is None or c.eigenvalues is None or c.nose_tip is None:
                raise PreprocessError("clouds must be preprocessed (normals, eigenvalues, nose tip)")
        if train and rng is None:
            raise InvalidInput("training forward requires an RNG stream")

        b = len(clouds)
        base = self.spec.train_sampling if train else self.spec.eval_sampling
        resolved = [base.draw(rng) if base.dither else base for _ in range(b)]

        states = [
            _CloudState(c.points, c.eigenvalues, c.nose_tip) for c in clouds
        ]
        feats: Optional[Tensor] = None
        attrs = None
        if self.spec.use_surface_attributes:
            attrs = np.stack(
                [np.column_stack([c.normals, c.eigenvalues]) for c in clouds]
            )  # (B, N, 4)

        for li, layer in enumerate(self.spec.layers):
            idx_all = np.empty((b, layer.n_out, layer.k), dtype=np.int64)
            off_all = np.empty((b, layer.n_out, layer.k, 3))
            new_states = []
            for bi, st in enumerate(states):
                sub = PointCloud(points=st.points, eigenvalues=st.eigenvalues,
                                 nose_tip=st.nose_tip)
                sel = dfps(sub, layer.n_out, resolved[bi])
                index = build_index(st.points)
                centers = st.points[sel]
                gi, go, _ = ball_query_grouped(index, centers, layer.radius, layer.k, diag=diag)
                idx_all[bi] = gi
                off_all[bi] = go
                new_states.append(
                    _CloudState(centers, st.eigenvalues[sel], st.nose_tip)
                )

            offs = Tensor(off_all)
            if li == 0:
                parts = [offs]
                if attrs is not None:
                    gathered_attrs = np.stack(
                        [attrs[bi][idx_all[bi]] for bi in range(b)]
                    )  # (B, NB, k, 4)
                    parts.append(Tensor(gathered_attrs))
                x = concat(parts, axis=-1) if len(parts) > 1 else offs
            else:
                x = concat([offs, gather_points(feats, idx_all)], axis=-1)

            x = self.mlps[li](x, train, diag)
            x = max_axis(x, axis=2)  # pool over neighbors -> (B, NB, m)
            if x.data.shape != (b, layer.n_out, layer.m_out):
                raise ShapeError(
                    f"layer {li + 1} produced {x.data.shape}, "
                    f"expected {(b, layer.n_out, layer.m_out)}"
                )
            if shape_trace is not None:
                shape_trace.append(x.data.shape)
            feats = x
            states = new_states

        g = max_axis(feats, axis=1)  # pool over points -> (B, m_last)
        if shape_trace is not None:
            shape_trace.append(g.data.shape)
        h = relu(self.bn1(self.fc1(g), train, diag))
        h = self.drop(h, train, rng)
        embedding = relu(self.bn2(self.fc2(h), train, diag))
        if embedding.data.shape != (b, self.spec.embedding_dim):
            raise ShapeError(f"embedding shape {embedding.data.shape}")
        if shape_trace is not None:
            shape_trace.append(embedding.data.shape)
        if not train:
            return embedding, None
        logits = self.fc3(self.drop(embedding, train, rng))
        return embedding, logits

    # ------------------------------------------------------------ inference

    def embed(self, cloud: PointCloud, diag: Optional[Diagnostics] = None) -> np.ndarray:
        """Eval-mode embedding of one cloud at its native point count."""
        cloud = preprocess(cloud, self.spec.normals_k, diag=diag)
        embedding, _ = self.forward([cloud], train=False, diag=diag)
        out = embedding.data[0].copy()
        if not np.isfinite(out).all():
            raise ShapeError("non-finite embedding")
        return out

    def loss(self, clouds: Sequence[PointCloud], labels: np.ndarray,
             rng: np.random.Generator, diag: Optional[Diagnostics] = None):
        """Train-mode forward plus softmax cross-entropy."""
        _, logits = self.forward(clouds, train=True, rng=rng, diag=diag)
        return softmax_xent(logits, labels)
