"""Must-link / cannot-link constraints and their matrix form."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


class ConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class PairwiseConstraint:
    """A constraint between item i of source A and item j of source B.

    Positive strength is a must-link, negative a cannot-link; |strength| <= 1
    so soft constraints are allowed.
    """

    i: int
    j: int
    strength: float

    def __post_init__(self):
        if self.i < 0 or self.j < 0:
            raise ConstraintError(f"negative index in constraint ({self.i}, {self.j})")
        s = float(self.strength)
        if not np.isfinite(s) or s == 0 or abs(s) > 1:
            raise ConstraintError(
                f"constraint ({self.i}, {self.j}) needs a nonzero strength in [-1, 1], got {self.strength}")
        object.__setattr__(self, "strength", s)

    @property
    def must_link(self) -> bool:
        return self.strength > 0


@dataclass(frozen=True)
class ConstraintMatrix:
    values: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.values, dtype=float)
        if z.ndim != 2:
            raise ValueError("constraint matrix must be 2-d")
        if np.any(np.abs(z) > 1):
            raise ValueError("constraint entries must lie in [-1, 1]")
        z = z.copy()
        z.setflags(write=False)
        object.__setattr__(self, "values", z)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def label_constraints(labels_a, labels_b, pairs: Iterable[tuple[int, int]]) -> list[PairwiseConstraint]:
    """+1 for pairs with equal labels, -1 otherwise."""
    la = np.asarray(labels_a)
    lb = np.asarray(labels_b)
    return [PairwiseConstraint(int(i), int(j), 1.0 if la[i] == lb[j] else -1.0) for i, j in pairs]


def constraints_from_labels(labels_a: Sequence[int], labels_b: Optional[Sequence[int]] = None,
                            count: Optional[int] = None, seed: int = 0,
                            rows: Optional[Sequence[int]] = None,
                            cols: Optional[Sequence[int]] = None) -> list[PairwiseConstraint]:
    """Sample ``count`` distinct labelled pairs uniformly without replacement.

    ``labels_b=None`` is the single-source case: pairs are unordered and i != j.
    ``count=None`` returns every available pair. ``rows``/``cols`` restrict the
    candidate indices (e.g. to a training split).
    """
    la = np.asarray(labels_a)
    single = labels_b is None
    lb = la if single else np.asarray(labels_b)
    ra = np.arange(la.size) if rows is None else np.asarray(rows, dtype=int)
    if single:
        if cols is not None:
            raise ValueError("cols only applies to two-source sampling")
        ra = np.unique(ra)
        iu, ju = np.triu_indices(ra.size, k=1)
        ii, jj = ra[iu], ra[ju]
    else:
        cb = np.arange(lb.size) if cols is None else np.asarray(cols, dtype=int)
        ii = np.repeat(ra, cb.size)
        jj = np.tile(cb, ra.size)
    total = ii.size
    if count is None:
        pick = np.arange(total)
    else:
        if count < 0 or count > total:
            raise ConstraintError(f"asked for {count} constraints but only {total} pairs exist")
        pick = np.sort(np.random.default_rng(seed).choice(total, size=count, replace=False))
    ii, jj = ii[pick], jj[pick]
    strength = np.where(la[ii] == lb[jj], 1.0, -1.0)
    return [PairwiseConstraint(int(i), int(j), float(s)) for i, j, s in zip(ii, jj, strength)]


def constraints_from_labeled_subset(labels: Sequence[int], n_labeled: int, seed: int = 0) -> list[PairwiseConstraint]:
    """All pairs among ``n_labeled`` randomly chosen points (single source)."""
    labels = np.asarray(labels)
    if not 2 <= n_labeled <= labels.size:
        raise ConstraintError(f"n_labeled must lie in [2, {labels.size}]")
    chosen = np.random.default_rng(seed).choice(labels.size, size=n_labeled, replace=False)
    return constraints_from_labels(labels, count=None, rows=chosen)


def to_matrix(cs: Iterable[PairwiseConstraint], n: int, m: Optional[int] = None) -> ConstraintMatrix:
    """Dense constraint matrix.

    ``m=None`` means single-source: the result is n x n and every entry is
    mirrored to (j, i). Identical duplicates collapse; conflicting ones raise.
    """
    single = m is None
    m = n if single else m
    z = np.zeros((n, m))
    seen: dict[tuple[int, int], float] = {}
    for c in cs:
        if c.i >= n or c.j >= m:
            raise ConstraintError(f"constraint ({c.i}, {c.j}) out of bounds for shape ({n}, {m})")
        key = (c.i, c.j)
        if single:
            if c.i == c.j:
                raise ConstraintError(f"self constraint ({c.i}, {c.j}) in single-source data")
            key = (min(c.i, c.j), max(c.i, c.j))
        prev = seen.get(key)
        if prev is not None and prev != c.strength:
            raise ConstraintError(f"conflicting constraints on pair {key}: {prev} vs {c.strength}")
        seen[key] = c.strength
        z[c.i, c.j] = c.strength
        if single:
            z[c.j, c.i] = c.strength
    return ConstraintMatrix(z)


def from_matrix(z: ConstraintMatrix, single_source: bool = True) -> list[PairwiseConstraint]:
    """Nonzero entries back to constraints (upper triangle only for single source)."""
    v = z.values
    ii, jj = np.nonzero(np.triu(v, k=1) if single_source else v)
    return [PairwiseConstraint(int(i), int(j), float(v[i, j])) for i, j in zip(ii, jj)]


def load_constraints(path) -> list[PairwiseConstraint]:
    """Parse ``i,j,strength`` rows; lines starting with '#' are comments."""
    path = Path(path)
    if not path.exists():
        raise ConstraintError(f"{path}: no such file")
    out = []
    with open(path, newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise ConstraintError(f"{path}:{lineno}: expected 'i,j,strength', got {line!r}")
            try:
                i, j, s = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ConstraintError(f"{path}:{lineno}: malformed row {line!r}") from None
            try:
                out.append(PairwiseConstraint(i, j, s))
            except ConstraintError as exc:
                raise ConstraintError(f"{path}:{lineno}: {exc}") from None
    return out


def save_constraints(cs: Iterable[PairwiseConstraint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        fh.write("# i,j,strength\n")
        for c in cs:
            w.writerow([c.i, c.j, repr(c.strength)])


def toy_moon_constraints(n: int) -> list[PairwiseConstraint]:
    """Two must-links joining the tips of each moon and two cannot-links across moons.

    Indices follow :func:`e2cp.dataset.synth_two_moons` (first half upper arc).
    """
    if n < 4 or n % 2:
        raise ConstraintError("two moons needs an even n >= 4")
    h = n // 2
    return [
        PairwiseConstraint(0, h - 1, 1.0),
        PairwiseConstraint(h, n - 1, 1.0),
        PairwiseConstraint(0, h + h // 2, -1.0),
        PairwiseConstraint(h, h // 2, -1.0),
    ]
