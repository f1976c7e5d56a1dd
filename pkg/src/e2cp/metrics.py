"""Adjusted Rand index, mean average precision and run reports."""
from __future__ import annotations

import json
from fractions import Fraction
from dataclasses import asdict, dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .clustering import Partition
from .retrieval import RankingResult


def _labels(p) -> np.ndarray:
    return p.assignment if isinstance(p, Partition) else np.asarray(p)


def _pairs(counts) -> int:
    return sum(int(c) * (int(c) - 1) // 2 for c in np.ravel(counts))


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index from the contingency table.

    Computed on integer pair counts with one final division, so the result
    is the correctly rounded value of the exact rational index.
    """
    la, lb = _labels(a), _labels(b)
    if la.shape != lb.shape:
        raise ValueError(f"partitions have different lengths: {la.size} vs {lb.size}")
    n = la.size
    if n < 2:
        raise ValueError("need at least two points")
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    sum_ij = _pairs(table)
    sum_a = _pairs(table.sum(axis=1))
    sum_b = _pairs(table.sum(axis=0))
    total = n * (n - 1) // 2
    # (sum_ij - E) / (mean(sum_a, sum_b) - E) with E = sum_a sum_b / total, scaled by 2 total
    num = 2 * (total * sum_ij - sum_a * sum_b)
    den = total * (sum_a + sum_b) - 2 * sum_a * sum_b
    if den == 0:
        # both partitions trivial in the same way (all singletons / one block)
        return 1.0
    return num / den


def average_precision(ranked_items: Sequence[int], relevant) -> float:
    """Mean over relevant items of the precision at their rank (exact rational sum)."""
    relevant = set(relevant)
    if not relevant:
        raise ValueError("query has no relevant item")
    hits = 0
    total = Fraction(0)
    for rank, item in enumerate(ranked_items, start=1):
        if item in relevant:
            hits += 1
            total += Fraction(hits, rank)
    if hits != len(relevant):
        raise ValueError("ranking does not contain every relevant item")
    return float(total / len(relevant))


def mean_average_precision(rankings: Sequence[RankingResult], relevance: Sequence) -> float:
    if len(rankings) != len(relevance):
        raise ValueError("need one relevance set per ranking")
    if not rankings:
        raise ValueError("no queries")
    aps = [average_precision(r.items if isinstance(r, RankingResult) else r, rel)
           for r, rel in zip(rankings, relevance)]
    return float(np.mean(aps))


def label_relevance(rankings: Sequence[RankingResult], query_labels, item_labels) -> list[set[int]]:
    """Relevant items of each query: candidates carrying the query's class label."""
    query_labels = np.asarray(query_labels)
    item_labels = np.asarray(item_labels)
    out = []
    for r in rankings:
        items = np.asarray(r.items)
        out.append(set(items[item_labels[items] == query_labels[r.query[1]]].tolist()))
    return out


@dataclass
class EvaluationReport:
    metric: str
    value: float
    per_run: Optional[list[float]] = None
    seeds: list[int] = field(default_factory=list)
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.per_run:
            self.value = float(np.mean(self.per_run))

    @classmethod
    def from_runs(cls, metric: str, values: Sequence[float], seeds: Sequence[int],
                  params: Optional[dict] = None) -> "EvaluationReport":
        return cls(metric, float(np.mean(values)), [float(v) for v in values], list(seeds), dict(params or {}))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean"] = d.pop("value")
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)
