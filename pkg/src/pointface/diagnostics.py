"""Counters for soft anomalies that do not abort a computation."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Diagnostics:
    """Mutable tally of recoverable oddities encountered during a run.

    Operations accept an optional instance and increment counters instead of
    raising; reports embed the final counts.
    """

    degenerate_neighborhoods: int = 0
    padded_queries: int = 0
    bn_eval_before_train: int = 0
    unlabeled_probes: int = 0
    labels_without_genuine_pairs: int = 0
    warnings: list[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        self.warnings.append(message)

    def as_dict(self) -> dict:
        return {
            "degenerate_neighborhoods": self.degenerate_neighborhoods,
            "padded_queries": self.padded_queries,
            "bn_eval_before_train": self.bn_eval_before_train,
            "unlabeled_probes": self.unlabeled_probes,
            "labels_without_genuine_pairs": self.labels_without_genuine_pairs,
            "warnings": list(self.warnings),
        }

    def merge(self, other: "Diagnostics") -> None:
        self.degenerate_neighborhoods += other.degenerate_neighborhoods
        self.padded_queries += other.padded_queries
        self.bn_eval_before_train += other.bn_eval_before_train
        self.unlabeled_probes += other.unlabeled_probes
        self.labels_without_genuine_pairs += other.labels_without_genuine_pairs
        self.warnings.extend(other.warnings)
