"""Gallery/probe identification and verification metrics.

Distances are cosine distances in [0, 2]; lower is more similar. The
verification loss used for checkpoint selection is
1 - VR@FAR * RR1 * AUC.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .diagnostics import Diagnostics
from .errors import InvalidInput


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    id_label: Optional[str] = None
    expr_label: Optional[str] = None
    source: Optional[str] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.isfinite(v).all():
            raise InvalidInput("embedding values must be finite")
        if np.linalg.norm(v) == 0.0:
            raise InvalidInput("zero-norm embedding rejected at ingestion")
        object.__setattr__(self, "values", v)


def cosine_distance(a, b) -> float:
    """1 - cos(angle between a and b); 0 for identical directions, 2 for
    antipodal."""
    va = a.values if isinstance(a, Embedding) else np.asarray(a, dtype=np.float64)
    vb = b.values if isinstance(b, Embedding) else np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise InvalidInput("cosine distance undefined for zero-norm vectors")
    # clamp away the few ulps of rounding that would leave [0, 2]
    return float(np.clip(1.0 - float(va @ vb) / (na * nb), 0.0, 2.0))


def _distance_matrix(probes: Sequence[Embedding], gallery: Sequence[Embedding]) -> np.ndarray:
    p = np.stack([e.values for e in probes])
    g = np.stack([e.values for e in gallery])
    p = p / np.linalg.norm(p, axis=1, keepdims=True)
    g = g / np.linalg.norm(g, axis=1, keepdims=True)
    return 1.0 - p @ g.T


@dataclass
class IdentifyResult:
    ranked: list          # per probe: [(gallery id_label, distance), ...] ascending
    rr1: float
    n_scored: int


def identify(gallery: Sequence[Embedding], probes: Sequence[Embedding],
             diag: Optional[Diagnostics] = None) -> IdentifyResult:
    """Rank gallery identities per probe by minimum cosine distance.

    Multi-entry galleries are reduced to the minimum distance over an
    identity's entries. Distance ties rank by label order. RR1 counts
    labeled probes whose top identity matches; unlabeled probes are ranked
    but excluded from the rate.
    """
    if not gallery:
        raise InvalidInput("gallery must be nonempty")
    if any(e.id_label is None for e in gallery):
        raise InvalidInput("every gallery embedding needs an id_label")
    dm = _distance_matrix(probes, gallery)

    labels = sorted({e.id_label for e in gallery})
    label_cols = {lab: [i for i, e in enumerate(gallery) if e.id_label == lab] for lab in labels}
    per_id = np.stack([dm[:, cols].min(axis=1) for lab, cols in label_cols.items()], axis=1)

    ranked = []
    hits = 0
    scored = 0
    for i, probe in enumerate(probes):
        order = sorted(range(len(labels)), key=lambda j: (per_id[i, j], labels[j]))
        ranked.append([(labels[j], float(per_id[i, j])) for j in order])
        if probe.id_label is None:
            if diag is not None:
                diag.unlabeled_probes += 1
            continue
        scored += 1
        if ranked[-1][0][0] == probe.id_label:
            hits += 1
    rr1 = hits / scored if scored else 0.0
    return IdentifyResult(ranked=ranked, rr1=rr1, n_scored=scored)


@dataclass
class RocResult:
    points: np.ndarray    # (T, 2) rows of (FAR, VR), FAR non-decreasing
    auc: float
    vr_at_far: float
    far_target: float


def roc_curve(genuine, impostor, far_target: float = 1e-3) -> RocResult:
    """Threshold sweep over all observed distances.

    VR(t) is the fraction of genuine distances <= t, FAR(t) the fraction of
    impostor distances <= t. AUC is the trapezoid over (FAR, VR) with a
    leading (0, 0) point. VR@FAR interpolates linearly between the
    bracketing sweep points, except below the smallest achieved positive
    FAR, where the FAR=0 verification rate is used (conservative).
    """
    genuine = np.asarray(genuine, dtype=np.float64)
    impostor = np.asarray(impostor, dtype=np.float64)
    if genuine.size == 0 or impostor.size == 0:
        raise InvalidInput("need at least one genuine and one impostor distance")
    thresholds = np.unique(np.concatenate([genuine, impostor]))
    g_sorted = np.sort(genuine)
    i_sorted = np.sort(impostor)
    vr = np.searchsorted(g_sorted, thresholds, side="right") / genuine.size
    far = np.searchsorted(i_sorted, thresholds, side="right") / impostor.size
    far = np.concatenate([[0.0], far])
    vr = np.concatenate([[0.0], vr])
    auc = float(np.trapezoid(vr, far))

    a = int(np.searchsorted(far, far_target, side="right")) - 1
    if a >= far.size - 1 or far[a] == far_target:
        vr_at = float(vr[a])
    elif far[a] == 0.0:
        vr_at = float(vr[a])
    else:
        f0, f1 = far[a], far[a + 1]
        v0, v1 = vr[a], vr[a + 1]
        vr_at = float(v0 + (v1 - v0) * (far_target - f0) / (f1 - f0))
    return RocResult(points=np.column_stack([far, vr]), auc=auc,
                     vr_at_far=vr_at, far_target=far_target)


def verification_loss(vr: float, rr1: float, auc: float) -> float:
    """1 - VR * RR1 * AUC, the scalar minimized for checkpoint selection."""
    for name, v in (("VR", vr), ("RR1", rr1), ("AUC", auc)):
        if not 0.0 <= v <= 1.0:
            raise InvalidInput(f"{name}={v} outside [0, 1]")
    return 1.0 - vr * rr1 * auc


@dataclass
class EvalReport:
    rr1: float
    vr_at_far: float
    far_target: float
    auc: float
    verification_loss: float
    roc: np.ndarray
    counts: dict
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, roc_samples: int = 200) -> dict:
        pts = self.roc
        if pts.shape[0] > roc_samples:
            sel = np.unique(np.linspace(0, pts.shape[0] - 1, roc_samples).astype(int))
            pts = pts[sel]
        return {
            "rr1": self.rr1,
            "vr_at_far": self.vr_at_far,
            "far_target": self.far_target,
            "auc": self.auc,
            "verification_loss": self.verification_loss,
            "counts": self.counts,
            "roc": [[float(a), float(b)] for a, b in pts],
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(**kwargs), indent=2)

    CSV_FIELDS = ("rr1", "vr_at_far", "far_target", "auc", "verification_loss",
                  "n_gallery", "n_probe", "n_genuine", "n_impostor")

    def csv_row(self) -> list:
        return [
            self.rr1, self.vr_at_far, self.far_target, self.auc, self.verification_loss,
            self.counts.get("gallery", 0), self.counts.get("probe", 0),
            self.counts.get("genuine_pairs", 0), self.counts.get("impostor_pairs", 0),
        ]


def evaluate(gallery: Sequence[Embedding], probes: Sequence[Embedding],
             far_target: float = 1e-3,
             diag: Optional[Diagnostics] = None) -> EvalReport:
    """Identification plus all-pairs verification over gallery x probe.

    Genuine pairs share an id_label, impostor pairs differ; probes without
    labels contribute to neither and are tallied in diagnostics.
    """
    if diag is None:
        diag = Diagnostics()
    ident = identify(gallery, probes, diag=diag)
    dm = _distance_matrix(probes, gallery)
    g_labels = np.array([e.id_label for e in gallery])
    genuine, impostor = [], []
    gallery_ids = set(g_labels.tolist())
    missing = set()
    for i, probe in enumerate(probes):
        if probe.id_label is None:
            continue
        same = g_labels == probe.id_label
        genuine.extend(dm[i, same].tolist())
        impostor.extend(dm[i, ~same].tolist())
        if probe.id_label not in gallery_ids:
            missing.add(probe.id_label)
    for lab in sorted(missing):
        diag.labels_without_genuine_pairs += 1
        diag.warn(f"probe identity {lab} has no genuine pair in the gallery")
    roc = roc_curve(genuine, impostor, far_target)
    loss = verification_loss(roc.vr_at_far, ident.rr1, roc.auc)
    counts = {
        "gallery": len(gallery),
        "probe": len(probes),
        "genuine_pairs": len(genuine),
        "impostor_pairs": len(impostor),
    }
    return EvalReport(
        rr1=ident.rr1,
        vr_at_far=roc.vr_at_far,
        far_target=far_target,
        auc=roc.auc,
        verification_loss=loss,
        roc=roc.points,
        counts=counts,
        diagnostics=diag.as_dict(),
    )
