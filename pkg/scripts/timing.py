"""Wall time of the e2cp closed form against N, and against the exact Lyapunov solver."""
import argparse
import time

import numpy as np

import e2cp.propagation as prop
from e2cp import (build_knn_graph, compute_kernel, constraints_from_labeled_subset, constraints_from_labels,
                  laplacian, normalized_affinity, ring_centers, synth_blobs, to_matrix)


def best_of(fn, repeat=5):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def problem(N, k=20, n_labeled=70, count=None, seed=0):
    ds = synth_blobs(N // 4, 4, ring_centers(4, 3.0), 1.0, seed)
    g = build_knn_graph(compute_kernel(ds), k)
    if count is None:
        cs = constraints_from_labeled_subset(ds.labels, n_labeled, seed)
    else:
        cs = constraints_from_labels(ds.labels, count=count, seed=seed)
    return g, to_matrix(cs, N)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 1000])
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--labeled", type=int, default=70, help="constraints are all pairs of this many points")
    ap.add_argument("--count", type=int, help="sample this many random pairs instead")
    ap.add_argument("--dense-max", type=int, help="override the dense-factorization threshold")
    ap.add_argument("--lyap", action="store_true", help="also time the exact Lyapunov solver")
    a = ap.parse_args()
    if a.dense_max is not None:
        prop.DENSE_MAX = a.dense_max
    prev = None
    for N in a.sizes:
        g, z = problem(N, a.k, a.labeled, a.count)
        lbar = normalized_affinity(g)
        t = best_of(lambda: prop.e2cp(lbar, z))
        line = f"N={N:5d} constraints={int(np.count_nonzero(np.triu(z.values)))} closed_form {t:.4f}s"
        if prev is not None:
            line += f" ratio {t / prev:.2f}"
        if a.lyap:
            lap = laplacian(g)
            tl = best_of(lambda: prop.solve_lyapunov(lap, z, prop.alpha_to_mu(0.6)), 3)
            line += f" lyapunov {tl:.4f}s speedup {tl / t:.1f}x"
        print(line)
        prev = t


if __name__ == "__main__":
    main()
