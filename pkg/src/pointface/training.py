"""Training loop: per-step sampling, the learning-rate schedule, and
best-checkpoint selection by verification loss."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .diagnostics import Diagnostics
from .errors import InvalidInput
from .geometry import NeighborhoodSpec, PointCloud, estimate_normals
from .metrics import Embedding, EvalReport, evaluate
from .network import Network, preprocess
from .nn import adam_step


@dataclass(frozen=True)
class FitConfig:
    epochs: int = 35
    batch_size: int = 32
    lr: float = 1e-3
    lr_decay: float = 0.1
    lr_decay_every: int = 10
    weight_decay: float = 1e-4
    seed: int = 0
    far_target: float = 1e-3

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch: decayed every lr_decay_every."""
        return self.lr * self.lr_decay ** ((epoch - 1) // self.lr_decay_every)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    rr1: float
    vr_at_far: float
    auc: float
    verification_loss: float
    lr: float

    CSV_FIELDS = ("epoch", "train_loss", "rr1", "vr_at_far", "auc",
                  "verification_loss", "lr")

    def csv_row(self) -> list:
        return [self.epoch, self.train_loss, self.rr1, self.vr_at_far,
                self.auc, self.verification_loss, self.lr]


@dataclass
class FitResult:
    records: list
    best_epoch: int
    best_verification_loss: float
    best_state: dict                     # param/buffer arrays at the best epoch
    diagnostics: Diagnostics = field(default_factory=Diagnostics)


def resample_to(cloud: PointCloud, n0: int, rng: np.random.Generator) -> PointCloud:
    """Random-choice downsample to n0 points; clouds smaller than n0 are
    upsampled by sampling with replacement."""
    n = cloud.n_points
    if n == n0:
        return cloud
    idx = rng.choice(n, size=n0, replace=n < n0)
    return cloud.select(idx)


def train_step(network: Network, clouds: Sequence[PointCloud], labels: np.ndarray,
               rng: np.random.Generator, lr: float, weight_decay: float,
               diag: Optional[Diagnostics] = None) -> float:
    """One optimizer step on a batch of raw clouds.

    Each cloud is resampled to the spec's n0, gets fresh normals (the
    resampled neighborhoods differ from the native ones), and runs a
    dithered train-mode forward.
    """
    spec = network.spec
    prepared = []
    for cloud in clouds:
        if cloud.nose_tip is None:
            raise InvalidInput("training clouds need nose tips")
        sampled = resample_to(cloud, spec.n0, rng)
        prepared.append(
            estimate_normals(sampled, NeighborhoodSpec(k=spec.normals_k), diag=diag)
        )
    loss = network.loss(prepared, np.asarray(labels), rng, diag=diag)
    loss.backward()
    grads = network.store.grads()
    adam_step(network.store, grads, lr=lr, weight_decay=weight_decay)
    network.store.zero_grad()
    return float(loss.data)


def split_gallery_probe(clouds: Sequence[PointCloud]):
    """Per identity, the expression-label-first cloud enrolls as gallery;
    the rest probe. Labels are required."""
    by_id: dict = {}
    for c in clouds:
        if c.id_label is None:
            raise InvalidInput("verification clouds need id labels")
        by_id.setdefault(c.id_label, []).append(c)
    gallery, probes = [], []
    for label in sorted(by_id):
        group = sorted(by_id[label], key=lambda c: c.expr_label or "")
        gallery.append(group[0])
        probes.extend(group[1:])
    if not probes:
        raise InvalidInput("verification set needs more than one expression per identity")
    return gallery, probes


def evaluate_batch(network: Network, gallery: Sequence[PointCloud],
                   probes: Sequence[PointCloud], far_target: float,
                   diag: Optional[Diagnostics] = None) -> EvalReport:
    g = [Embedding(network.embed(c, diag=diag), id_label=c.id_label,
                   expr_label=c.expr_label) for c in gallery]
    p = [Embedding(network.embed(c, diag=diag), id_label=c.id_label,
                   expr_label=c.expr_label) for c in probes]
    return evaluate(g, p, far_target=far_target, diag=diag)


def fit(network: Network, train_clouds: Sequence[PointCloud],
        verification_clouds: Sequence[PointCloud], cfg: FitConfig,
        on_epoch: Optional[Callable] = None,
        start_epoch: int = 1,
        best_so_far: Optional[tuple] = None) -> FitResult:
    """Train with the step-decay schedule, evaluating the verification set
    after every epoch and retaining the parameters with the lowest
    verification loss.

    Verification identities must be disjoint from training identities.
    Epoch randomness derives from (cfg.seed, epoch), so a run resumed from
    a (network-state, start_epoch) pair reproduces the uninterrupted run.
    on_epoch(record, network, is_best) fires after each epoch.
    """
    if not verification_clouds:
        raise InvalidInput("verification set is empty")
    train_ids = {c.id_label for c in train_clouds}
    if None in train_ids:
        raise InvalidInput("training clouds need id labels")
    overlap = train_ids & {c.id_label for c in verification_clouds}
    if overlap:
        raise InvalidInput(
            f"verification identities overlap training identities: {sorted(overlap)[:5]}"
        )

    classes = sorted(train_ids)
    class_of = {label: i for i, label in enumerate(classes)}
    if network.spec.n_classes != len(classes):
        raise InvalidInput(
            f"network has {network.spec.n_classes} classes, dataset has {len(classes)}"
        )
    labels = np.array([class_of[c.id_label] for c in train_clouds])

    diag = Diagnostics()
    # verification preprocessing is deterministic; do it once
    val_prepared = [preprocess(c, network.spec.normals_k, diag=diag)
                    for c in verification_clouds]
    gallery, probes = split_gallery_probe(val_prepared)

    records = []
    if best_so_far is not None:
        best_epoch, best_loss, best_state = best_so_far
    else:
        best_epoch, best_loss, best_state = 0, np.inf, None

    n = len(train_clouds)
    for epoch in range(start_epoch, cfg.epochs + 1):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2, epoch]))
        lr = cfg.lr_at(epoch)
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, cfg.batch_size):
            batch_idx = order[lo:lo + cfg.batch_size]
            batch = [train_clouds[i] for i in batch_idx]
            losses.append(
                train_step(network, batch, labels[batch_idx], rng, lr,
                           cfg.weight_decay, diag=diag)
            )
        report = evaluate_batch(network, gallery, probes, cfg.far_target, diag=diag)
        record = EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            rr1=report.rr1,
            vr_at_far=report.vr_at_far,
            auc=report.auc,
            verification_loss=report.verification_loss,
            lr=lr,
        )
        records.append(record)
        is_best = record.verification_loss < best_loss
        if is_best:
            best_loss = record.verification_loss
            best_epoch = epoch
            best_state = {k: v.copy() for k, v in network.store.state_arrays().items()}
        if on_epoch is not None:
            on_epoch(record, network, is_best)

    if best_state is None:
        raise InvalidInput("no epochs were run")
    return FitResult(records=records, best_epoch=best_epoch,
                     best_verification_loss=float(best_loss),
                     best_state=best_state, diagnostics=diag)
