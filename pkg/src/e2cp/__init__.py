"""Exhaustive pairwise constraint propagation for clustering and cross-modal retrieval."""
from .clustering import (AdjustedAffinity, ClusterParams, Partition, SpectralEmbedding, adjust_pointwise,
                         adjust_weights, cluster_graph, cluster_pipeline, kmeans, sl_baseline_adjust,
                         spectral_embed)
from .constraints import (ConstraintError, ConstraintMatrix, PairwiseConstraint, constraints_from_labeled_subset,
                          constraints_from_labels, from_matrix, load_constraints, save_constraints, to_matrix,
                          toy_moon_constraints)
from .dataset import (Dataset, KernelMatrix, KernelSpec, LoadError, compute_kernel, load_dataset, load_kernel,
                      normalize_features, ring_centers, save_dataset, synth_blobs, synth_two_moons)
from .graph import KnnGraph, NormalizedAffinity, build_knn_graph, laplacian, normalized_affinity
from .metrics import EvaluationReport, adjusted_rand_index, average_precision, mean_average_precision
from .propagation import (ConvergenceError, PropagatedConstraints, PropagationParams, e2cp, mscp,
                          propagate_directions, propagate_horizontal, propagate_vertical, regularized_energy,
                          solve_lyapunov, solve_sylvester)
from .retrieval import RankingResult, rank_all, rank_cross_modal

__version__ = "0.1.0"
