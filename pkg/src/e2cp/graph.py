"""k-NN graphs and their normalized affinity / Laplacian."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dataset import KernelMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KnnGraph:
    weights: sp.csr_matrix = field(repr=False)
    degrees: np.ndarray = field(repr=False)
    k: int

    @property
    def n(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class NormalizedAffinity:
    """The matrix D^-1/2 W D^-1/2 of a graph; kept sparse."""

    values: sp.csr_matrix = field(repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def knn_indices(a: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest off-diagonal entries per row.

    Ties at equal kernel value go to the smaller column index.
    """
    scores = np.array(a, dtype=float, copy=True)
    np.fill_diagonal(scores, -np.inf)
    # stable sort on the negated values keeps equal entries in index order
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :k]


def build_knn_graph(kernel: KernelMatrix, k: int = 20) -> KnnGraph:
    a = kernel.values
    n = a.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, {n - 1}], got {k}")
    root = np.sqrt(np.diag(a))
    nbrs = knn_indices(a, k)
    rows = np.repeat(np.arange(n), k)
    cols = nbrs.ravel()
    vals = a[rows, cols] / (root[rows] * root[cols])
    if np.any(vals < 0) or np.any(vals > 1):
        log.warning("kernel gives normalized weights outside [0, 1]; clipping")
        vals = np.clip(vals, 0.0, 1.0)
    w = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    w = ((w + w.T) * 0.5).tocsr()
    w.eliminate_zeros()
    deg = np.asarray(w.sum(axis=1)).ravel()
    isolated = np.flatnonzero(deg <= 0)
    if isolated.size:
        log.warning("%d isolated vertices get a unit self-loop", isolated.size)
        w = (w + sp.csr_matrix((np.ones(isolated.size), (isolated, isolated)), shape=(n, n))).tocsr()
        deg = np.asarray(w.sum(axis=1)).ravel()
    w.sort_indices()
    return KnnGraph(weights=w, degrees=deg, k=k)


def graph_from_weights(w, k: int = 0) -> KnnGraph:
    """Wrap an explicit symmetric nonnegative weight matrix, applying the self-loop rule."""
    w = sp.csr_matrix(w, dtype=float)
    if w.nnz and abs(w - w.T).max() > 1e-12:
        raise ValueError("weight matrix must be symmetric")
    if w.nnz and w.data.min() < 0:
        raise ValueError("weights must be nonnegative")
    n = w.shape[0]
    deg = np.asarray(w.sum(axis=1)).ravel()
    isolated = np.flatnonzero(deg <= 0)
    if isolated.size:
        w = (w + sp.csr_matrix((np.ones(isolated.size), (isolated, isolated)), shape=(n, n))).tocsr()
        deg = np.asarray(w.sum(axis=1)).ravel()
    return KnnGraph(weights=w, degrees=deg, k=k)


def normalized_affinity(g: KnnGraph) -> NormalizedAffinity:
    if np.any(g.degrees <= 0):
        raise ValueError("graph has a vertex with zero degree")
    s = sp.diags(1.0 / np.sqrt(g.degrees))
    lbar = (s @ g.weights @ s).tocsr()
    # exact symmetry: average with the transpose
    lbar = ((lbar + lbar.T) * 0.5).tocsr()
    lbar.sort_indices()
    return NormalizedAffinity(lbar)


def laplacian(g: KnnGraph) -> sp.csr_matrix:
    """Normalized Laplacian I - D^-1/2 W D^-1/2."""
    lbar = normalized_affinity(g).values
    return (sp.identity(g.n, format="csr") - lbar).tocsr()


def export_edges(g: KnnGraph, path) -> None:
    """Write the edge list as ``i,j,w`` rows with i < j."""
    upper = sp.triu(g.weights, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        for t in order:
            out.writerow([int(upper.row[t]), int(upper.col[t]), repr(float(upper.data[t]))])
