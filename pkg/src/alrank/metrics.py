"""Ranking quality and corpus analysis metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .dataset import NUM_BUCKETS, NUM_LABELS, QueryGroup

IRRELEVANT_MAX_LABEL = 1


class GainFn(str, Enum):
    """Label -> gain mapping used by DCG."""

    EXPONENTIAL = "exponential"
    LINEAR = "linear"

    def __call__(self, labels):
        labels = np.asarray(labels, dtype=np.float64)
        if self is GainFn.EXPONENTIAL:
            return np.exp2(labels) - 1.0
        return labels


def _discounts(n: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, n + 2))


def dcg_at_k(ranked_labels, k: int, gain: GainFn = GainFn.EXPONENTIAL) -> float:
    """sum over the top min(k, N) positions of gain(label) / log2(pos + 1)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    top = np.asarray(ranked_labels, dtype=np.float64)[:k]
    return float(np.dot(GainFn(gain)(top), _discounts(len(top))))


def best_dcg_at_k(labels, k: int, gain: GainFn = GainFn.EXPONENTIAL) -> float:
    return dcg_at_k(np.sort(np.asarray(labels, dtype=np.float64))[::-1], k, gain)


def r01_at_k(ranked_labels, k: int) -> float:
    """Share of irrelevant (grade 0 or 1) documents in the top k; the denominator is always k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    top = np.asarray(ranked_labels)[:k]
    return float(np.count_nonzero(top <= IRRELEVANT_MAX_LABEL)) / k


def rank_by_scores(scores) -> np.ndarray:
    """Indices ordering documents by descending score; ties keep document order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


class UndefinedCorrelation(ValueError):
    pass


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson needs two equal-length 1-d sequences")
    if len(x) < 2:
        raise ValueError("pearson needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("correlation undefined for a constant input")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def bucket_distribution(selected: Sequence[QueryGroup]) -> np.ndarray:
    return np.bincount([g.bucket for g in selected], minlength=NUM_BUCKETS).astype(np.int64)


def label_distribution(selected: Sequence[QueryGroup]) -> np.ndarray:
    """(10, 5) document counts per (bucket, label)."""
    table = np.zeros((NUM_BUCKETS, NUM_LABELS), dtype=np.int64)
    for g in selected:
        table[g.bucket] += np.bincount(g.labels, minlength=NUM_LABELS)
    return table


@dataclass(frozen=True)
class EvalReport:
    k: int
    dcg_k: float
    best_dcg_k: float
    r01: float
    num_queries: int = 1
    gain: str = GainFn.EXPONENTIAL.value

    def __post_init__(self):
        if not 0.0 <= self.r01 <= 1.0:
            raise ValueError(f"r01 out of range: {self.r01}")
        if self.dcg_k > self.best_dcg_k + 1e-9 * max(1.0, abs(self.best_dcg_k)):
            raise ValueError("dcg_k exceeds best_dcg_k")


def evaluate_query(scores, labels, k: int = 4, gain: GainFn = GainFn.EXPONENTIAL) -> EvalReport:
    labels = np.asarray(labels)
    ranked = labels[rank_by_scores(scores)]
    return EvalReport(
        k=k,
        dcg_k=dcg_at_k(ranked, k, gain),
        best_dcg_k=best_dcg_at_k(labels, k, gain),
        r01=r01_at_k(ranked, k),
        gain=GainFn(gain).value,
    )


def evaluate_model(model, groups: Sequence[QueryGroup], k: int = 4, gain: GainFn = GainFn.EXPONENTIAL):
    """Per-query EvalReports and their mean for a model with ``predict(X)``."""
    if not groups:
        raise ValueError("nothing to evaluate")
    scores = model.predict(np.vstack([g.features for g in groups]))
    per_query = []
    start = 0
    for g in groups:
        per_query.append(evaluate_query(scores[start : start + g.num_docs], g.labels, k, gain))
        start += g.num_docs
    mean = EvalReport(
        k=k,
        dcg_k=float(np.mean([r.dcg_k for r in per_query])),
        best_dcg_k=float(np.mean([r.best_dcg_k for r in per_query])),
        r01=float(np.mean([r.r01 for r in per_query])),
        num_queries=len(per_query),
        gain=GainFn(gain).value,
    )
    return per_query, mean
