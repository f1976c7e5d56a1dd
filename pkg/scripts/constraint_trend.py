"""Mean ARI against the number of initial constraints on overlapping blobs."""
import argparse
import csv
import sys

import numpy as np

from e2cp import (ClusterParams, adjusted_rand_index, build_knn_graph, cluster_graph, compute_kernel,
                  constraints_from_labels, normalized_affinity, ring_centers, synth_blobs)


def run(counts=(0, 200, 800), K=3, n_per=100, std=0.9, radius=1.0, data_seed=0, k=20, alpha=0.6,
        runs=25, methods=("e2cp",), seed=0):
    ds = synth_blobs(n_per, K, ring_centers(K, radius), std, data_seed)
    graph = build_knn_graph(compute_kernel(ds), k)
    lbar = normalized_affinity(graph)
    rows = []
    for m in methods:
        for c in counts:
            for r in range(runs):
                cs = constraints_from_labels(ds.labels, count=c, seed=seed + r) if c else []
                part = cluster_graph(graph, cs, K, m, ClusterParams(k=k, alpha=alpha, seed=seed + r), lbar=lbar)
                rows.append((m, c, r, adjusted_rand_index(part.assignment, ds.labels)))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--counts", type=int, nargs="+", default=[0, 200, 800])
    ap.add_argument("--methods", nargs="+", default=["e2cp"])
    ap.add_argument("--std", type=float, default=0.9)
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--runs", type=int, default=25)
    ap.add_argument("--csv", help="write the long-format table here")
    a = ap.parse_args()
    rows = run(tuple(a.counts), std=a.std, data_seed=a.data_seed, runs=a.runs, methods=tuple(a.methods))
    if a.csv:
        with open(a.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "num_constraints", "run", "ari"])
            w.writerows(rows)
    for m in a.methods:
        means = [np.mean([v for mm, c, _, v in rows if mm == m and c == cc]) for cc in a.counts]
        print(m, " ".join(f"{c}:{v:.4f}" for c, v in zip(a.counts, means)), file=sys.stdout)


if __name__ == "__main__":
    main()
