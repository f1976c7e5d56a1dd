"""Data ingestion, feature scaling, kernels and synthetic datasets."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform


class LoadError(ValueError):
    """Raised when an input file cannot be turned into a valid dataset or kernel."""


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    labels: Optional[np.ndarray] = None
    ids: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"points must be a non-empty 2-d array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite values")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (pts.shape[0],):
                raise ValueError(f"expected {pts.shape[0]} labels, got shape {lab.shape}")
            if not np.issubdtype(lab.dtype, np.integer):
                if not np.all(np.equal(np.mod(lab, 1), 0)):
                    raise ValueError("labels must be integers")
                lab = lab.astype(int)
            if lab.min() < 0:
                raise ValueError("labels must be non-negative")
            lab = lab.copy()
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)
        if self.ids is not None:
            if len(self.ids) != pts.shape[0]:
                raise ValueError("ids must have one entry per point")
            object.__setattr__(self, "ids", tuple(str(s) for s in self.ids))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice. ``sigma=None`` on a gaussian kernel selects the median heuristic."""

    kind: str = "gaussian"
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "normalized_correlation", "precomputed"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and self.sigma is not None and not self.sigma > 0:
            raise ValueError("gaussian kernel needs sigma > 0")


@dataclass(frozen=True)
class KernelMatrix:
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.values, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"kernel must be a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("kernel contains non-finite values")
        if np.max(np.abs(a - a.T), initial=0.0) > 1e-12:
            raise ValueError("kernel matrix is not symmetric")
        if np.any(np.diag(a) <= 0):
            raise ValueError("kernel diagonal must be strictly positive")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "values", a)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _read_numeric_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]  # header line
    if not rows:
        raise LoadError(f"{path}: no data rows")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for lineno, row in enumerate(rows, start=1):
        if len(row) != width:
            raise LoadError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
        try:
            out[lineno - 1] = [float(c) for c in row]
        except ValueError as exc:
            raise LoadError(f"{path}: row {lineno}: {exc}") from None
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out))[0]
        raise LoadError(f"{path}: non-finite value at row {bad[0] + 1}, column {bad[1] + 1}")
    return out


def load_dataset(path, has_labels: bool = False) -> Dataset:
    """Read a comma separated feature file, one point per row.

    With ``has_labels`` the last column is taken as an integer class label.
    A first row that does not parse as numbers is treated as a header.
    """
    table = _read_numeric_csv(path)
    if not has_labels:
        return Dataset(table)
    if table.shape[1] < 2:
        raise LoadError(f"{path}: need at least one feature column besides the label")
    lab = table[:, -1]
    if not np.all(lab == np.round(lab)) or lab.min() < 0:
        raise LoadError(f"{path}: label column must hold non-negative integers")
    return Dataset(table[:, :-1], labels=lab.astype(int))


def load_kernel(path) -> KernelMatrix:
    table = _read_numeric_csv(path)
    try:
        return KernelMatrix(table)
    except ValueError as exc:
        raise LoadError(f"{path}: {exc}") from None


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.points[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            w.writerow(row)


def normalize_features(ds: Dataset, lo: float = -1.0, hi: float = 1.0) -> Dataset:
    """Affinely map every feature column onto [lo, hi]; constant columns go to the midpoint."""
    if not hi > lo:
        raise ValueError("need hi > lo")
    x = ds.points
    cmin = x.min(axis=0)
    cmax = x.max(axis=0)
    span = cmax - cmin
    flat = span == 0
    safe = np.where(flat, 1.0, span)
    out = lo + (x - cmin) * ((hi - lo) / safe)
    out[:, flat] = 0.5 * (lo + hi)
    # pin the extremes so repeated application is a no-op
    for j in np.flatnonzero(~flat):
        out[x[:, j] == cmin[j], j] = lo
        out[x[:, j] == cmax[j], j] = hi
    return Dataset(out, labels=ds.labels, ids=ds.ids)


def median_distance(points: np.ndarray) -> float:
    """Median of all pairwise Euclidean distances (falls back to 1.0 when degenerate)."""
    if points.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(points)))
    return med if med > 0 else 1.0


def compute_kernel(ds: Dataset, spec: KernelSpec = KernelSpec()) -> KernelMatrix:
    if spec.kind == "gaussian":
        sigma = spec.sigma if spec.sigma is not None else median_distance(ds.points)
        sq = squareform(pdist(ds.points, "sqeuclidean"))
        return KernelMatrix(np.exp(-sq / (2.0 * sigma * sigma)))
    if spec.kind == "normalized_correlation":
        norms = np.linalg.norm(ds.points, axis=1)
        if np.any(norms == 0):
            raise ValueError(f"zero-norm row {int(np.argmin(norms))} has no normalized correlation")
        xn = ds.points / norms[:, None]
        c = xn @ xn.T
        c = 0.5 * (c + c.T)
        np.clip(c, -1.0, 1.0, out=c)
        np.fill_diagonal(c, 1.0)
        return KernelMatrix((c + 1.0) / 2.0)
    # precomputed: the "points" are the kernel rows
    return KernelMatrix(ds.points)


def synth_two_moons(n: int = 100, noise: float = 0.0, seed: int = 0) -> Dataset:
    """Two interleaving unit half circles, n/2 points each, labels 0 (upper) and 1 (lower).

    Points are laid out at evenly spaced angles, so index 0 and n/2-1 are the two
    tips of the upper arc and n/2, n-1 the tips of the lower arc.
    """
    if n < 4 or n % 2:
        raise ValueError("two moons needs an even n >= 4")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    half = n // 2
    t = np.linspace(0.0, math.pi, half)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    pts = np.vstack([upper, lower])
    if noise > 0:
        pts = pts + np.random.default_rng(seed).normal(scale=noise, size=pts.shape)
    labels = np.repeat([0, 1], half)
    return Dataset(pts, labels=labels)


def synth_blobs(n_per: int, K: int, centers: Sequence[Sequence[float]], std: float,
                seed: int = 0) -> Dataset:
    centers = np.asarray(centers, dtype=float)
    if K < 2:
        raise ValueError("need K >= 2")
    if centers.ndim != 2 or centers.shape[0] != K:
        raise ValueError(f"centers must have shape (K, d) with K={K}")
    if n_per < 1:
        raise ValueError("n_per must be positive")
    if std < 0:
        raise ValueError("std must be non-negative")
    rng = np.random.default_rng(seed)
    pts = np.repeat(centers, n_per, axis=0)
    pts = pts + std * rng.standard_normal(pts.shape)
    return Dataset(pts, labels=np.repeat(np.arange(K), n_per))


def ring_centers(K: int, radius: float = 1.0, dim: int = 2) -> np.ndarray:
    """K centers spread evenly on a circle in the first two coordinates."""
    ang = 2 * np.pi * np.arange(K) / K
    c = np.zeros((K, dim))
    c[:, 0] = radius * np.cos(ang)
    c[:, 1] = radius * np.sin(ang)
    return c
