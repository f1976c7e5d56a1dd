"""Cross-modal ranking from two-source propagated constraints."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .propagation import PropagatedConstraints

DIRECTIONS = ("x_to_y", "y_to_x")


@dataclass(frozen=True)
class RankingResult:
    query: tuple[str, int]
    ranked: tuple[tuple[int, float], ...]

    @property
    def items(self) -> list[int]:
        return [i for i, _ in self.ranked]


def rank_cross_modal(f, query_index: int, direction: str = "x_to_y",
                     candidates: Optional[Sequence[int]] = None) -> RankingResult:
    """Rank the other source by F* scores for one query.

    x_to_y ranks the columns of row ``query_index``; y_to_x ranks the rows of
    that column. Ties go to the smaller item index.
    """
    fv = f.values if isinstance(f, PropagatedConstraints) else np.asarray(f, dtype=float)
    if direction == "x_to_y":
        n_src = fv.shape[0]
    elif direction == "y_to_x":
        n_src = fv.shape[1]
    else:
        raise ValueError(f"unknown direction {direction!r}; choose from {DIRECTIONS}")
    if not 0 <= query_index < n_src:
        raise IndexError(f"query index {query_index} out of range [0, {n_src})")
    scores = fv[query_index] if direction == "x_to_y" else fv[:, query_index]
    items = np.arange(scores.size) if candidates is None else np.unique(np.asarray(candidates, dtype=int))
    sub = scores[items]
    order = np.lexsort((items, -sub))
    ranked = tuple((int(items[t]), float(sub[t])) for t in order)
    return RankingResult(query=(direction.split("_")[0], int(query_index)), ranked=ranked)


def rank_all(f, queries: Iterable[int], direction: str,
             candidates: Optional[Sequence[int]] = None) -> list[RankingResult]:
    return [rank_cross_modal(f, q, direction, candidates) for q in queries]


def save_rankings(rankings: Iterable[RankingResult], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query", "rank", "item", "score"])
        for r in rankings:
            for pos, (item, score) in enumerate(r.ranked, start=1):
                w.writerow([r.query[1], pos, item, repr(score)])
