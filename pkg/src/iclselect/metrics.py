"""Evaluation and analysis statistics.

Macro averaging follows the convention that a class with a zero denominator
contributes 0 to precision/recall/F1 and still divides the macro mean, so a
majority-class predictor on an N-class task scores roughly 1/N of its single
nonzero class. Entropy is Shannon entropy in bits (base 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from iclselect.corpus import LabelSpace
from iclselect.errors import DataError


def confusion(golds: Sequence[int], preds: Sequence[int], space: LabelSpace) -> np.ndarray:
    """N x N count matrix; rows are gold labels, columns predictions."""
    if len(golds) != len(preds):
        raise DataError(f"length mismatch: {len(golds)} golds vs {len(preds)} predictions")
    matrix = np.zeros((space.size, space.size), dtype=np.int64)
    for gold, pred in zip(golds, preds):
        if not (0 <= gold < space.size and 0 <= pred < space.size):
            raise DataError(f"label pair ({gold}, {pred}) outside the {space.size}-label space")
        matrix[gold, pred] += 1
    return matrix


@dataclass(frozen=True)
class ClassificationScores:
    f1_macro: float
    precision_macro: float
    recall_macro: float
    accuracy: float


def classification_scores(matrix: np.ndarray) -> ClassificationScores:
    """Macro precision/recall/F1 and accuracy from a confusion matrix."""
    matrix = np.asarray(matrix)
    total = int(matrix.sum())
    if total == 0:
        raise DataError("empty confusion matrix")
    n = matrix.shape[0]
    precisions = np.zeros(n)
    recalls = np.zeros(n)
    f1s = np.zeros(n)
    for i in range(n):
        tp = float(matrix[i, i])
        fp = float(matrix[:, i].sum()) - tp
        fn = float(matrix[i, :].sum()) - tp
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        precisions[i] = p
        recalls[i] = r
        f1s[i] = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return ClassificationScores(
        f1_macro=float(f1s.mean()),
        precision_macro=float(precisions.mean()),
        recall_macro=float(recalls.mean()),
        accuracy=float(np.trace(matrix)) / total,
    )


def entropy_bits(probs) -> float:
    """Shannon entropy in bits, with 0 * log 0 treated as 0."""
    values = probs.probs if hasattr(probs, "probs") else probs
    return float(-sum(p * math.log2(p) for p in values if p > 0.0))


def gold_share(demo_labels: Sequence[Sequence[int]], test_golds: Sequence[int]) -> float:
    """Mean over test examples of the fraction of demos sharing the test gold.

    An empty demonstration list contributes a share of 0 and still counts
    toward the mean.
    """
    if len(demo_labels) != len(test_golds):
        raise DataError(f"length mismatch: {len(demo_labels)} demo lists vs {len(test_golds)} golds")
    if not test_golds:
        raise DataError("cannot average over zero test examples")
    shares = []
    for labels, gold in zip(demo_labels, test_golds):
        shares.append(sum(1 for y in labels if y == gold) / len(labels) if labels else 0.0)
    return float(np.mean(shares))


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    if len(xs) != len(ys):
        raise DataError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise DataError("pearson_r needs at least 2 points")
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        raise DataError("correlation is undefined when either series has zero variance")
    return float(dx @ dy) / denom


_AGGREGATED_FIELDS = (
    "f1_macro",
    "precision_macro",
    "recall_macro",
    "accuracy",
    "mean_entropy_bits",
    "gold_share_selected",
    "gold_share_topk",
)


@dataclass(frozen=True)
class SeedMetrics:
    """All per-run metrics for one (strategy, n_shots, seed) cell."""

    seed: int
    f1_macro: float
    precision_macro: float
    recall_macro: float
    accuracy: float
    mean_entropy_bits: float | None
    gold_share_selected: float | None
    gold_share_topk: float | None
    confusion: list[list[int]]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "f1_macro": self.f1_macro,
            "precision_macro": self.precision_macro,
            "recall_macro": self.recall_macro,
            "accuracy": self.accuracy,
            "mean_entropy_bits": self.mean_entropy_bits,
            "gold_share_selected": self.gold_share_selected,
            "gold_share_topk": self.gold_share_topk,
            "confusion": self.confusion,
        }


@dataclass(frozen=True)
class EvaluationReport:
    """Aggregated metrics for one (strategy, n_shots) across shuffle seeds."""

    strategy: str
    n_shots: int | None
    per_seed: tuple[SeedMetrics, ...]
    mean: dict[str, float | None]
    std: dict[str, float | None]
    gold_in_ambig_overall: float
    gold_in_ambig_per_label: dict[str, float]
    fallback_stage_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "n_shots": self.n_shots,
            "per_seed": [m.to_dict() for m in self.per_seed],
            "mean": self.mean,
            "std": self.std,
            "gold_in_ambig_overall": self.gold_in_ambig_overall,
            "gold_in_ambig_per_label": self.gold_in_ambig_per_label,
            "fallback_stage_counts": self.fallback_stage_counts,
        }


def aggregate_report(
    strategy: str,
    n_shots: int | None,
    per_seed: Sequence[SeedMetrics],
    gold_in_ambig_overall: float,
    gold_in_ambig_per_label: dict[str, float],
    fallback_stage_counts: dict[str, int] | None = None,
) -> EvaluationReport:
    """Mean and sample standard deviation over seeds for every metric.

    A metric that is None for any seed (e.g. entropy under the frequency
    baseline) aggregates to None; the std over a single seed is None.
    """
    mean: dict[str, float | None] = {}
    std: dict[str, float | None] = {}
    for field in _AGGREGATED_FIELDS:
        values = [getattr(m, field) for m in per_seed]
        if any(v is None for v in values):
            mean[field] = None
            std[field] = None
            continue
        mean[field] = float(np.mean(values))
        std[field] = float(np.std(values, ddof=1)) if len(values) > 1 else None
    return EvaluationReport(
        strategy=strategy,
        n_shots=n_shots,
        per_seed=tuple(per_seed),
        mean=mean,
        std=std,
        gold_in_ambig_overall=gold_in_ambig_overall,
        gold_in_ambig_per_label=gold_in_ambig_per_label,
        fallback_stage_counts=dict(fallback_stage_counts or {}),
    )
