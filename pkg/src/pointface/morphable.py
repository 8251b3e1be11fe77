"""Linear morphable face model: container IO, synthesis, augmentation,
coefficient fitting, and labeled synthetic-dataset generation.

A face is mean + shape_basis * sqrt(shape_var) * alpha
           + expr_basis * sqrt(expr_var) * beta,
with alpha fixing identity and beta fixing expression. Vectors are stacked
(x1, y1, z1, ..., xN, yN, zN) in millimeters.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import InvalidInput, ModelFormatError, SingularSystem
from .geometry.cloud import PointCloud

_MAGIC = b"GPMM"
_VERSION = 1


@dataclass(frozen=True)
class MorphableModel:
    mean: np.ndarray              # (3N,)
    shape_basis: np.ndarray       # (3N, dS)
    shape_var: np.ndarray         # (dS,)
    expr_basis: np.ndarray        # (3N, dE)
    expr_var: np.ndarray          # (dE,)
    nose_tip_vertex: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        if mean.size % 3 != 0 or mean.size == 0:
            raise InvalidInput("mean length must be a positive multiple of 3")
        bs = np.asarray(self.shape_basis, dtype=np.float64)
        be = np.asarray(self.expr_basis, dtype=np.float64)
        vs = np.asarray(self.shape_var, dtype=np.float64).reshape(-1)
        ve = np.asarray(self.expr_var, dtype=np.float64).reshape(-1)
        if bs.shape != (mean.size, vs.size) or be.shape != (mean.size, ve.size):
            raise InvalidInput("basis shapes must be (3N, d) matching their variances")
        if vs.size < 1 or ve.size < 1:
            raise InvalidInput("shape and expression dimensions must be at least 1")
        if np.any(vs < 0) or np.any(ve < 0):
            raise InvalidInput("variances must be nonnegative")
        for name, arr in (("mean", mean), ("shape_basis", bs), ("expr_basis", be),
                          ("shape_var", vs), ("expr_var", ve)):
            if not np.isfinite(arr).all():
                raise InvalidInput(f"{name} contains non-finite entries")
        if not 0 <= self.nose_tip_vertex < mean.size // 3:
            raise InvalidInput("nose_tip_vertex out of range")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "shape_basis", bs)
        object.__setattr__(self, "expr_basis", be)
        object.__setattr__(self, "shape_var", vs)
        object.__setattr__(self, "expr_var", ve)

    @property
    def n_vertices(self) -> int:
        return self.mean.size // 3

    @property
    def n_shape(self) -> int:
        return self.shape_var.size

    @property
    def n_expr(self) -> int:
        return self.expr_var.size


@dataclass(frozen=True)
class GenParams:
    """Sampling distribution for synthetic faces.

    sigma_alpha/sigma_beta scale the unit-normal coefficient draws,
    sigma_delta is additive coordinate noise in millimeters, and
    rotation_limits bound the uniform (yaw, pitch, roll) draw in degrees.
    guided_pool holds fitted expression coefficients mixed into the draw.
    """

    sigma_alpha: float = 1.0
    sigma_beta: float = 1.0
    sigma_delta: float = 0.3
    rotation_limits: tuple = (20.0, 20.0, 20.0)
    guided_pool: Optional[Sequence[np.ndarray]] = None

    def __post_init__(self):
        if min(self.sigma_alpha, self.sigma_beta, self.sigma_delta) < 0:
            raise InvalidInput("sigmas must be nonnegative")
        lims = tuple(float(v) for v in self.rotation_limits)
        if len(lims) != 3 or any(v < 0 or v >= 90 for v in lims):
            raise InvalidInput("rotation limits must lie in [0, 90) degrees")
        object.__setattr__(self, "rotation_limits", lims)

    def as_dict(self) -> dict:
        return {
            "sigma_alpha": self.sigma_alpha,
            "sigma_beta": self.sigma_beta,
            "sigma_delta": self.sigma_delta,
            "rotation_limits": list(self.rotation_limits),
            "guided_pool_size": 0 if self.guided_pool is None else len(self.guided_pool),
        }


@dataclass(frozen=True)
class FittedCoeffs:
    alpha: np.ndarray
    beta: np.ndarray
    residual_rms: float

    def __post_init__(self):
        if self.residual_rms < 0:
            raise InvalidInput("residual_rms must be nonnegative")


# ------------------------------------------------------------- container IO


def save_model(model: MorphableModel, path) -> None:
    """Write the binary container: header, then little-endian f64 arrays
    mean, shape basis (column-major), shape variances, expression basis
    (column-major), expression variances, then the nose-tip vertex index."""
    n = model.n_vertices
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIII", _VERSION, n, model.n_shape, model.n_expr))
        f.write(model.mean.astype("<f8").tobytes())
        f.write(np.asfortranarray(model.shape_basis.astype("<f8")).tobytes(order="F"))
        f.write(model.shape_var.astype("<f8").tobytes())
        f.write(np.asfortranarray(model.expr_basis.astype("<f8")).tobytes(order="F"))
        f.write(model.expr_var.astype("<f8").tobytes())
        f.write(struct.pack("<I", model.nose_tip_vertex))


def load_model(path) -> MorphableModel:
    """Read the container written by save_model, validating as it goes."""
    blob = Path(path).read_bytes()
    off = 0

    def take(count, what):
        nonlocal off
        if off + count > len(blob):
            raise ModelFormatError(f"file truncated while reading {what}", offset=off)
        piece = blob[off:off + count]
        off += count
        return piece

    if take(4, "magic") != _MAGIC:
        raise ModelFormatError("bad magic, not a morphable-model container", offset=0)
    version, n, ds, de = struct.unpack("<IIII", take(16, "header"))
    if version != _VERSION:
        raise ModelFormatError(f"unsupported version {version}", offset=4)
    if n == 0 or ds == 0 or de == 0:
        raise ModelFormatError(f"degenerate dimensions N={n} dS={ds} dE={de}", offset=8)

    def array(count, what):
        start = off
        raw = take(8 * count, what)
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        if not np.isfinite(arr).all():
            raise ModelFormatError(f"non-finite entries in {what}", offset=start)
        return arr

    mean = array(3 * n, "mean")
    shape_basis = array(3 * n * ds, "shape basis").reshape((3 * n, ds), order="F")
    shape_var = array(ds, "shape variances")
    expr_basis = array(3 * n * de, "expression basis").reshape((3 * n, de), order="F")
    expr_var = array(de, "expression variances")
    (ntv,) = struct.unpack("<I", take(4, "nose tip vertex"))
    if off != len(blob):
        raise ModelFormatError(f"{len(blob) - off} trailing bytes", offset=off)
    if ntv >= n:
        raise ModelFormatError(f"nose tip vertex {ntv} out of range", offset=off - 4)
    try:
        return MorphableModel(mean, shape_basis, shape_var, expr_basis, expr_var, int(ntv))
    except InvalidInput as exc:
        raise ModelFormatError(str(exc), offset=len(blob)) from exc


# ------------------------------------------------------------ toy model


def _smooth_fields(points: np.ndarray, n_columns: int, rng) -> np.ndarray:
    """Random low-frequency displacement fields, one flattened column each."""
    n = points.shape[0]
    cols = np.empty((3 * n, n_columns))
    for j in range(n_columns):
        disp = np.zeros((n, 3))
        for _ in range(4):
            k = rng.normal(size=3)
            k *= rng.uniform(0.01, 0.05) / np.linalg.norm(k)  # wavelengths ~125-600 mm
            phase = rng.uniform(0, 2 * np.pi)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            disp += np.sin(points @ k + phase)[:, None] * direction
        cols[:, j] = disp.reshape(-1)
    return cols


def make_toy_model(n_vertices: int, n_shape: int = 20, n_expr: int = 20,
                   seed: int = 0, shape_scale: float = 160.0,
                   expr_scale: float = 80.0) -> MorphableModel:
    """Procedural stand-in for an externally trained face model.

    The mean is a front-facing half-ellipsoid shell with a protruding nose;
    bases are orthonormalized smooth random deformation fields. Fully
    deterministic in the seed.
    """
    if n_vertices < 100:
        raise InvalidInput("toy model needs at least 100 vertices")
    rng = np.random.default_rng(seed)

    # facial shell: spherical cap pushed onto ellipsoid semi-axes, +z forward;
    # sized so the bulk of the surface sits within ~50 mm of the nose tip
    a, b, c = 41.0, 52.0, 34.0
    cos_min = np.cos(np.radians(100.0))
    cos_t = rng.uniform(cos_min, 1.0, size=n_vertices)
    sin_t = np.sqrt(1.0 - cos_t**2)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n_vertices)
    pts = np.column_stack([a * sin_t * np.cos(phi), b * sin_t * np.sin(phi), c * cos_t])

    # protruding nose below face center; Gaussian bump, peak at the anchor
    target = np.array([0.0, -11.0, c])
    d2 = ((pts - target) ** 2).sum(axis=1)
    nose_vertex = int(np.argmin(d2))
    bump = 8.0 * np.exp(-d2 / (2.0 * 5.0**2))
    pts[:, 2] += bump
    pts[nose_vertex, 2] += 2.0  # keep the anchor strictly proud of the bump

    mean = pts.reshape(-1)

    def basis(d):
        raw = _smooth_fields(pts, d, rng)
        q, r = np.linalg.qr(raw)
        return q * np.sign(np.diag(r))  # deterministic column signs

    shape_basis = basis(n_shape)
    expr_basis = basis(n_expr)
    decay = 0.9 ** np.arange(n_shape)
    shape_var = (shape_scale * decay) ** 2
    expr_var = (expr_scale * 0.9 ** np.arange(n_expr)) ** 2
    return MorphableModel(mean, shape_basis, shape_var, expr_basis, expr_var, nose_vertex)


# ------------------------------------------------------------- synthesis


def synthesize_vector(model: MorphableModel, alpha, beta) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64).reshape(-1)
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if alpha.size != model.n_shape or beta.size != model.n_expr:
        raise InvalidInput(
            f"coefficient sizes ({alpha.size}, {beta.size}) do not match model "
            f"({model.n_shape}, {model.n_expr})"
        )
    s = model.mean.copy()
    s += model.shape_basis @ (np.sqrt(model.shape_var) * alpha)
    s += model.expr_basis @ (np.sqrt(model.expr_var) * beta)
    return s


def synthesize(model: MorphableModel, alpha, beta) -> PointCloud:
    """Deterministic face for the given coefficients; nose tip anchored at
    the model's nose vertex."""
    pts = synthesize_vector(model, alpha, beta).reshape(-1, 3)
    return PointCloud(points=pts, nose_tip=pts[model.nose_tip_vertex].copy())


def mix_expression(beta_real: np.ndarray, beta_random: np.ndarray, lam: float) -> np.ndarray:
    """Blend a fitted real-scan expression with a random draw:
    lam * beta_real + (1 - lam) * beta_random."""
    return lam * np.asarray(beta_real, dtype=np.float64) \
        + (1.0 - lam) * np.asarray(beta_random, dtype=np.float64)


def euler_rotation(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Rotation matrix for degrees yaw (about y), pitch (about x), roll
    (about z), composed R = Rz @ Rx @ Ry."""
    y, p, r = np.radians([yaw, pitch, roll])
    cy, sy = np.cos(y), np.sin(y)
    cp, sp = np.cos(p), np.sin(p)
    cr, sr = np.cos(r), np.sin(r)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return rz @ rx @ ry


def _draw_beta(model: MorphableModel, params: GenParams, rng) -> np.ndarray:
    beta_random = rng.normal(0.0, params.sigma_beta, size=model.n_expr)
    if params.guided_pool:
        lam = rng.uniform(0.0, 1.0)
        pick = int(rng.integers(len(params.guided_pool)))
        return mix_expression(params.guided_pool[pick], beta_random, lam)
    return beta_random


def generate_face(model: MorphableModel, params: GenParams, rng,
                  alpha: Optional[np.ndarray] = None,
                  neutral: bool = False) -> PointCloud:
    """One randomized face: coefficient draws, additive noise, then a rigid
    rotation about the nose tip. With neutral=True the expression is zero
    and no rotation is applied (enrollment-style capture); noise still
    applies. Passing alpha pins the identity (used for per-identity batches).
    """
    if alpha is None:
        alpha = rng.normal(0.0, params.sigma_alpha, size=model.n_shape)
    beta = np.zeros(model.n_expr) if neutral else _draw_beta(model, params, rng)
    s = synthesize_vector(model, alpha, beta)
    if params.sigma_delta > 0:
        s = s + rng.normal(0.0, params.sigma_delta, size=s.size)
    pts = s.reshape(-1, 3)
    pivot = pts[model.nose_tip_vertex].copy()
    if not neutral:
        angles = rng.uniform(-np.asarray(params.rotation_limits),
                             np.asarray(params.rotation_limits))
        if np.any(angles != 0.0):
            rot = euler_rotation(*angles)
            pts = (pts - pivot) @ rot.T + pivot
    return PointCloud(points=pts, nose_tip=pts[model.nose_tip_vertex].copy())


# ------------------------------------------------------------- fitting


def fit_coeffs(model: MorphableModel, target, which: str,
               fixed: Optional[FittedCoeffs] = None,
               ridge: float = 0.0) -> FittedCoeffs:
    """Least-squares fit of one coefficient block to a target in dense
    vertex correspondence, holding the other block at `fixed` (or zero).

    Minimizes ||target - synthesized||^2 + ridge * ||coeffs||^2 over the
    requested block. Raises SingularSystem when ridge is zero and the
    system is rank-deficient.
    """
    if which not in ("shape", "expression"):
        raise InvalidInput("which must be 'shape' or 'expression'")
    tgt = target.points if isinstance(target, PointCloud) else np.asarray(target, dtype=np.float64)
    tgt = tgt.reshape(-1)
    if tgt.size != model.mean.size:
        raise InvalidInput(
            f"target has {tgt.size // 3} vertices, model has {model.n_vertices}"
        )
    alpha0 = np.zeros(model.n_shape) if fixed is None else np.asarray(fixed.alpha, dtype=np.float64)
    beta0 = np.zeros(model.n_expr) if fixed is None else np.asarray(fixed.beta, dtype=np.float64)

    if which == "shape":
        a_mat = model.shape_basis * np.sqrt(model.shape_var)
        resid = tgt - model.mean - model.expr_basis @ (np.sqrt(model.expr_var) * beta0)
    else:
        a_mat = model.expr_basis * np.sqrt(model.expr_var)
        resid = tgt - model.mean - model.shape_basis @ (np.sqrt(model.shape_var) * alpha0)

    d = a_mat.shape[1]
    if ridge > 0.0:
        aug = np.vstack([a_mat, np.sqrt(ridge) * np.eye(d)])
        rhs = np.concatenate([resid, np.zeros(d)])
        coeffs, _, _, _ = np.linalg.lstsq(aug, rhs, rcond=None)
    else:
        coeffs, _, rank, _ = np.linalg.lstsq(a_mat, resid, rcond=None)
        if rank < d:
            raise SingularSystem(
                f"{which} system rank {rank} < {d}; supply ridge > 0"
            )

    if which == "shape":
        alpha, beta = coeffs, beta0
    else:
        alpha, beta = alpha0, coeffs
    final = synthesize_vector(model, alpha, beta)
    rms = float(np.sqrt(np.mean((tgt - final) ** 2)))
    return FittedCoeffs(alpha=alpha, beta=beta, residual_rms=rms)


# --------------------------------------------------------- dataset generation


@dataclass
class DatasetManifest:
    seed: int
    params: dict
    records: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "params": self.params, "records": self.records},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        data = json.loads(text)
        return cls(seed=data["seed"], params=data["params"], records=data["records"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def identities(self) -> set:
        return {r["id_label"] for r in self.records}


def _face_rng(seed: int, identity: int, expression: int):
    return np.random.default_rng(np.random.SeedSequence([seed, 1, identity, expression]))


def _identity_alpha(model: MorphableModel, params: GenParams, seed: int, identity: int):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0, identity]))
    return rng.normal(0.0, params.sigma_alpha, size=model.n_shape)


def iter_faces(model: MorphableModel, n_identities: int, n_expressions: int,
               params: GenParams, seed: int) -> Iterator[tuple]:
    """Stream (cloud, id_label, expr_label) lazily; one alpha per identity,
    expression slot 0 neutral. Total order is (identity, expression)."""
    if n_identities < 1 or n_expressions < 1:
        raise InvalidInput("need at least one identity and one expression")
    for i in range(n_identities):
        alpha = _identity_alpha(model, params, seed, i)
        for e in range(n_expressions):
            rng = _face_rng(seed, i, e)
            cloud = generate_face(model, params, rng, alpha=alpha, neutral=(e == 0))
            yield (
                cloud.with_fields(id_label=f"id{i:04d}", expr_label=f"e{e:04d}"),
                f"id{i:04d}",
                f"e{e:04d}",
            )


def generate_dataset(model: MorphableModel, n_identities: int, n_expressions: int,
                     params: GenParams, seed: int, sink,
                     workers: int = 1) -> DatasetManifest:
    """Generate n_identities x n_expressions labeled faces through `sink`.

    sink(cloud, id_label, expr_label) -> path string. Faces are produced
    from per-face RNG streams keyed on (seed, identity, expression), so
    output is identical for any worker count; writes happen in a single
    thread in deterministic order.
    """
    manifest = DatasetManifest(seed=seed, params=params.as_dict())

    def build(task):
        i, e, alpha = task
        rng = _face_rng(seed, i, e)
        cloud = generate_face(model, params, rng, alpha=alpha, neutral=(e == 0))
        return cloud.with_fields(id_label=f"id{i:04d}", expr_label=f"e{e:04d}")

    if n_identities < 1 or n_expressions < 1:
        raise InvalidInput("need at least one identity and one expression")

    for i in range(n_identities):
        alpha = _identity_alpha(model, params, seed, i)
        tasks = [(i, e, alpha) for e in range(n_expressions)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                clouds = list(pool.map(build, tasks))
        else:
            clouds = [build(t) for t in tasks]
        for cloud in clouds:
            path = sink(cloud, cloud.id_label, cloud.expr_label)
            manifest.records.append(
                {"path": str(path), "id_label": cloud.id_label, "expr_label": cloud.expr_label}
            )
    return manifest
