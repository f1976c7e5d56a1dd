"""Similarity adjustment from propagated constraints and constrained spectral clustering."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constraints import PairwiseConstraint, to_matrix
from .dataset import KernelMatrix
from .graph import KnnGraph, build_knn_graph, normalized_affinity
from .propagation import PropagatedConstraints, PropagationParams, propagate_directions

log = logging.getLogger(__name__)

ADJUST_MODES = ("eq13", "new_weight1", "new_weight2")
METHODS = ("e2cp", "lyap", "sl", "ncuts")

# dense symmetric eigensolver up to this size, Lanczos above
DENSE_EIG_MAX = 2000


@dataclass(frozen=True)
class AdjustedAffinity:
    values: np.ndarray = field(repr=False)
    degrees: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, w) -> "AdjustedAffinity":
        w = w.toarray() if sp.issparse(w) else np.array(w, dtype=float)
        return cls(w, w.sum(axis=1))

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class SpectralEmbedding:
    rows: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    dropped_trivial: bool = False


@dataclass(frozen=True)
class Partition:
    assignment: np.ndarray
    K: int
    wcss: float = float("nan")

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=int)
        if a.ndim != 1:
            raise ValueError("assignment must be 1-d")
        if a.size and (a.min() < 0 or a.max() >= self.K):
            raise ValueError(f"cluster ids must lie in [0, {self.K})")
        object.__setattr__(self, "assignment", a)

    def __len__(self):
        return self.assignment.size


# ---------------------------------------------------------------------------
# weight adjustment

def _fvals(f) -> np.ndarray:
    return f.values if isinstance(f, PropagatedConstraints) else np.asarray(f, dtype=float)


def adjust_pointwise(w, f, mode: str = "eq13") -> np.ndarray:
    """Elementwise adjusted weight for weights w in [0,1] and confidences f in [-1,1]."""
    w = np.asarray(w, dtype=float)
    f = np.asarray(f, dtype=float)
    if mode == "eq13":
        # w + f(1-w) == 1 - (1-f)(1-w), written so f = 0 returns w bit for bit
        return np.where(f >= 0, w + f * (1.0 - w), (1.0 + f) * w)
    if mode == "new_weight1":
        return (1.0 + f) / 2.0
    if mode == "new_weight2":
        return np.clip((1.0 + f) * w, 0.0, 1.0)
    raise ValueError(f"unknown adjust mode {mode!r}; choose from {ADJUST_MODES}")


def adjust_weights(w: Union[KnnGraph, np.ndarray], f, mode: str = "eq13") -> AdjustedAffinity:
    wv = w.weights.toarray() if isinstance(w, KnnGraph) else (
        w.toarray() if sp.issparse(w) else np.asarray(w, dtype=float))
    fv = _fvals(f)
    if wv.shape != fv.shape or wv.shape[0] != wv.shape[1]:
        raise ValueError(f"weights {wv.shape} and constraints {fv.shape} must be equal square shapes")
    if wv.min() < 0 or wv.max() > 1:
        raise ValueError("weights must lie in [0, 1]")
    if np.abs(fv).max(initial=0.0) > 1:
        raise ValueError("propagated constraints must lie in [-1, 1]")
    return AdjustedAffinity.from_matrix(adjust_pointwise(wv, fv, mode))


def sl_baseline_adjust(w: KnnGraph, cs: Iterable[PairwiseConstraint]) -> AdjustedAffinity:
    """Spectral-learning baseline: must-links set to 1, cannot-links to 0, nothing else touched."""
    wv = w.weights.toarray()
    z = to_matrix(cs, wv.shape[0]).values
    wv[z > 0] = 1.0
    wv[z < 0] = 0.0
    return AdjustedAffinity.from_matrix(wv)


# ---------------------------------------------------------------------------
# spectral embedding and k-means

def _top_eigh(m: np.ndarray, count: int):
    n = m.shape[0]
    if n <= DENSE_EIG_MAX:
        lam, vec = la.eigh(m, subset_by_index=[n - count, n - 1], check_finite=False)
    else:
        lam, vec = spla.eigsh(sp.csr_matrix(m), k=count, which="LA")
    order = np.argsort(-lam, kind="stable")
    return lam[order], vec[:, order]


def spectral_embed(w: Union[AdjustedAffinity, KnnGraph, np.ndarray], K: int,
                   keep_trivial: bool = False) -> SpectralEmbedding:
    """Row-normalized top-K nontrivial eigenvectors of D^-1/2 W D^-1/2.

    The leading eigenvector is discarded as trivial when its eigenvalue is 1,
    the next one is not (connected graph) and D^-1/2 v is constant.
    """
    if isinstance(w, AdjustedAffinity):
        wv = w.values
    elif isinstance(w, KnnGraph):
        wv = w.weights.toarray()
    else:
        wv = w.toarray() if sp.issparse(w) else np.asarray(w, dtype=float)
    n = wv.shape[0]
    if K < 1 or K >= n:
        raise ValueError(f"need 1 <= K < N, got K={K}, N={n}")
    wv = wv.copy()
    deg = wv.sum(axis=1)
    isolated = np.flatnonzero(deg <= 0)
    if isolated.size:
        log.warning("%d isolated vertices get a unit self-loop", isolated.size)
        wv[isolated, isolated] += 1.0
        deg = wv.sum(axis=1)
    s = 1.0 / np.sqrt(deg)
    m = wv * s[:, None] * s[None, :]
    m = 0.5 * (m + m.T)
    lam, vec = _top_eigh(m, K + 1)
    drop = False
    if not keep_trivial and lam[0] >= 1 - 1e-8 and lam[1] < 1 - 1e-8:
        u = vec[:, 0] * s
        scale = np.abs(u).max()
        drop = scale > 0 and (u.max() - u.min()) <= 1e-6 * scale
    if drop:
        lam, vec = lam[1:], vec[:, 1:]
    else:
        lam, vec = lam[:K], vec[:, :K]
    norms = np.linalg.norm(vec, axis=1)
    zero = norms < 1e-300
    if np.any(zero):
        log.warning("%d embedding rows are zero and stay unnormalized", int(zero.sum()))
    rows = vec / np.where(zero, 1.0, norms)[:, None]
    return SpectralEmbedding(rows=rows, eigenvalues=lam, dropped_trivial=bool(drop))


def _kmeanspp(x: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((K, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for c in range(1, K):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers[c] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[c]) ** 2, axis=1))
    return centers


def _sqdist(x, centers):
    return np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int):
    K = centers.shape[0]
    assign = None
    for _ in range(max_iter):
        d = _sqdist(x, centers)
        new = np.argmin(d, axis=1)
        counts = np.bincount(new, minlength=K)
        for c in np.flatnonzero(counts == 0):
            # reseed an empty cluster at the point farthest from its center
            far = int(np.argmax(d[np.arange(x.shape[0]), new]))
            new[far] = c
            centers[c] = x[far]
            d[far] = np.sum((x[far] - centers) ** 2, axis=1)
            counts = np.bincount(new, minlength=K)
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for c in range(K):
            members = assign == c
            if members.any():
                centers[c] = x[members].mean(axis=0)
    d = _sqdist(x, centers)
    assign = np.argmin(d, axis=1)
    wcss = float(d[np.arange(x.shape[0]), assign].sum())
    return assign, wcss


def kmeans(e: Union[SpectralEmbedding, np.ndarray], K: int, restarts: int = 10, seed: int = 0,
           max_iter: int = 50) -> Partition:
    """Lloyd's algorithm with k-means++ seeding; best of ``restarts`` by within-cluster SS."""
    x = e.rows if isinstance(e, SpectralEmbedding) else np.asarray(e, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not 1 <= K <= x.shape[0]:
        raise ValueError(f"need 1 <= K <= N, got K={K}, N={x.shape[0]}")
    best = None
    for child in np.random.SeedSequence(seed).spawn(max(1, restarts)):
        rng = np.random.default_rng(child)
        assign, wcss = _lloyd(x, _kmeanspp(x, K, rng), max_iter)
        if best is None or wcss < best[1]:
            best = (assign, wcss)
    return Partition(best[0], K, best[1])


# ---------------------------------------------------------------------------
# pipeline

@dataclass(frozen=True)
class ClusterParams:
    k: int = 20
    alpha: float = 0.6
    solver: str = "closed_form"
    adjust_mode: str = "eq13"
    directions: str = "vp_hp"
    restarts: int = 10
    seed: int = 0
    keep_trivial: bool = False
    tol: float = 1e-9
    max_iter: int = 10000

    def propagation(self, method: str = "e2cp") -> PropagationParams:
        solver = "exact_matrix_equation" if method == "lyap" else self.solver
        return PropagationParams(alpha=self.alpha, tol=self.tol, max_iter=self.max_iter, solver=solver)


def adjusted_affinity_for(graph: KnnGraph, cs: Sequence[PairwiseConstraint], method: str,
                          params: ClusterParams = ClusterParams(), lbar=None) -> AdjustedAffinity:
    """The weight matrix the chosen method hands to spectral clustering."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if method == "ncuts":
        return AdjustedAffinity.from_matrix(graph.weights)
    if method == "sl":
        return sl_baseline_adjust(graph, cs)
    z = to_matrix(cs, graph.n)
    lbar = normalized_affinity(graph) if lbar is None else lbar
    directions = "vp_hp" if method == "lyap" else params.directions
    f = propagate_directions(lbar, z, params.propagation(method), directions=directions)
    fv = f.values
    if directions != "vp_hp":
        # one-sided passes leave F asymmetric; use its symmetric part
        fv = 0.5 * (fv + fv.T)
    return adjust_weights(graph, fv, params.adjust_mode)


def cluster_graph(graph: KnnGraph, cs: Sequence[PairwiseConstraint], K: int, method: str = "e2cp",
                  params: ClusterParams = ClusterParams(), lbar=None) -> Partition:
    w = adjusted_affinity_for(graph, cs, method, params, lbar=lbar)
    emb = spectral_embed(w, K, keep_trivial=params.keep_trivial)
    return kmeans(emb, K, restarts=params.restarts, seed=params.seed)


def cluster_pipeline(kernel: KernelMatrix, cs: Sequence[PairwiseConstraint], K: int,
                     method: str = "e2cp", params: ClusterParams = ClusterParams()) -> Partition:
    """kernel -> k-NN graph -> (propagate + adjust | SL adjust | nothing) -> embed -> k-means."""
    graph = build_knn_graph(kernel, min(params.k, kernel.n - 1))
    return cluster_graph(graph, cs, K, method, params)


def save_partition(p: Partition, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "cluster"])
        for i, c in enumerate(p.assignment):
            w.writerow([i, int(c)])


def save_embedding(e: SpectralEmbedding, path) -> None:
    np.savetxt(path, e.rows, delimiter=",", fmt="%.17g")
