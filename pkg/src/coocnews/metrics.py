"""Impression-level ranking metrics: AUC, MRR, nDCG@k."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np


class MetricError(ValueError):
    pass


def _arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise MetricError(f"scores/labels shape mismatch: {s.shape} vs {y.shape}")
    return s, y


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Fraction of (positive, negative) pairs ordered correctly; ties count half."""
    s, y = _arrays(scores, labels)
    pos, neg = s[y == 1], s[y == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise MetricError("auc needs at least one positive and one negative")
    # midranks handle ties: U = sum(rank of positives) - n_pos(n_pos+1)/2
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(len(s))
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    n_pos, n_neg = len(pos), len(neg)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _ranked_labels(s: np.ndarray, y: np.ndarray) -> np.ndarray:
    # stable sort on -score: equal scores keep original candidate order
    return y[np.argsort(-s, kind="stable")]


def mrr(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mean of 1/rank over positives."""
    s, y = _arrays(scores, labels)
    if y.sum() == 0:
        raise MetricError("mrr needs at least one positive")
    ranked = _ranked_labels(s, y)
    ranks = np.flatnonzero(ranked == 1) + 1
    # left-to-right sum keeps the result independent of numpy's pairwise reduction
    return sum(1.0 / float(r) for r in ranks) / len(ranks)


def ndcg_at(scores: Sequence[float], labels: Sequence[int], k: int) -> float:
    s, y = _arrays(scores, labels)
    if k < 1:
        raise MetricError("k must be >= 1")
    if y.sum() == 0:
        raise MetricError("ndcg needs at least one positive")
    ranked = _ranked_labels(s, y)[:k]
    disc = [1.0 / math.log2(r + 2) for r in range(len(ranked))]
    dcg = sum(d for d, hit in zip(disc, ranked) if hit)
    idcg = sum(disc[: min(int(y.sum()), k)])
    return dcg / idcg


@dataclass(frozen=True)
class MetricsReport:
    auc: float
    mrr: float
    ndcg5: float
    ndcg10: float
    impressions_evaluated: int
    impressions_skipped: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    def to_text(self) -> str:
        head = f"{'AUC':>8} {'MRR':>8} {'nDCG@5':>8} {'nDCG@10':>8}"
        row = f"{self.auc:8.4f} {self.mrr:8.4f} {self.ndcg5:8.4f} {self.ndcg10:8.4f}"
        tail = f"evaluated={self.impressions_evaluated} skipped={self.impressions_skipped}"
        return f"{head}\n{row}\n{tail}\n"


def impression_metrics(scores, labels) -> tuple[float, float, float, float]:
    return auc(scores, labels), mrr(scores, labels), ndcg_at(scores, labels, 5), ndcg_at(scores, labels, 10)


def aggregate(scored: Iterable[tuple[Sequence[float], Sequence[int]]]) -> MetricsReport:
    """Macro-average over impressions that have both a positive and a negative."""
    rows, skipped = [], 0
    for scores, labels in scored:
        y = np.asarray(labels)
        if y.sum() == 0 or y.sum() == len(y):
            skipped += 1
            continue
        rows.append(impression_metrics(scores, labels))
    if not rows:
        raise MetricError(f"no evaluable impressions ({skipped} skipped)")
    m = np.mean(np.array(rows), axis=0)
    return MetricsReport(float(m[0]), float(m[1]), float(m[2]), float(m[3]), len(rows), skipped)


def evaluate(impressions: Sequence, score_fn: Callable) -> MetricsReport:
    """``score_fn(impression)`` returns one score per candidate, in candidate order."""
    return aggregate((score_fn(imp), imp.labels) for imp in impressions)
