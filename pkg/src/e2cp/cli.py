"""Command-line front end: synth, propagate, cluster, retrieve.

Every command reads an optional JSON config (``--config``); each key of
:class:`RunConfig` can be overridden by the flag of the same name. Exit codes:
0 success, 1 numerical failure, 2 input or config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .clustering import (ADJUST_MODES, METHODS, ClusterParams, cluster_graph, save_partition)
from .constraints import (ConstraintError, PairwiseConstraint, constraints_from_labels,
                          load_constraints, save_constraints, to_matrix, toy_moon_constraints)
from .dataset import (KernelMatrix, KernelSpec, LoadError, compute_kernel, load_dataset,
                      load_kernel, normalize_features, ring_centers, save_dataset, synth_blobs,
                      synth_two_moons)
from .graph import build_knn_graph, normalized_affinity
from .metrics import EvaluationReport, adjusted_rand_index, label_relevance, mean_average_precision
from .propagation import (DIRECTIONS, SOLVERS, ConvergenceError, PropagationParams, e2cp, mscp,
                          propagate_directions, save_fstar_binary, save_fstar_csv)
from .retrieval import rank_all, save_rankings

log = logging.getLogger("e2cp")

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2
KERNEL_KINDS = ("gaussian", "normalized_correlation")
SYNTH_KINDS = ("moons", "blobs")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # inputs
    features: Optional[str] = None
    kernel: Optional[str] = None
    labels: Optional[str] = None
    label_column: bool = True
    features_y: Optional[str] = None
    kernel_y: Optional[str] = None
    labels_y: Optional[str] = None
    split: Optional[str] = None
    constraints: Optional[str] = None
    # kernel and graph
    kernel_kind: str = "gaussian"
    sigma: Optional[float] = None
    normalize: bool = False
    k: int = 20
    # propagation
    alpha: float = 0.6
    alpha_x: Optional[float] = None
    alpha_y: Optional[float] = None
    solver: str = "closed_form"
    compare_solver: Optional[str] = None
    directions: str = "vp_hp"
    tol: float = 1e-9
    max_iter: int = 10000
    # clustering protocol
    method: list = field(default_factory=lambda: ["e2cp"])
    adjust_mode: str = "eq13"
    clusters: Optional[int] = None
    num_constraints: list = field(default_factory=lambda: [0])
    runs: int = 25
    restarts: int = 10
    keep_trivial: bool = False
    seed: int = 0
    jobs: int = 1
    # synthetic data
    kind: str = "moons"
    n: int = 100
    noise: float = 0.08
    std: float = 0.9
    radius: float = 1.0
    # output
    out_dir: str = "out"
    binary: bool = False

    def validate(self) -> "RunConfig":
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        for name in ("alpha", "alpha_x", "alpha_y"):
            v = getattr(self, name)
            if v is not None and not 0 <= v < 1:
                raise ConfigError(f"{name} must lie in [0, 1), got {v}")
        solvers = SOLVERS + ("exact",)
        if self.solver not in solvers:
            raise ConfigError(f"solver must be one of {solvers}")
        if self.compare_solver is not None and self.compare_solver not in solvers:
            raise ConfigError(f"compare_solver must be one of {solvers}")
        if self.directions not in DIRECTIONS:
            raise ConfigError(f"directions must be one of {DIRECTIONS}")
        if isinstance(self.method, str):
            self.method = [self.method]
        bad = [m for m in self.method if m not in METHODS]
        if bad or not self.method:
            raise ConfigError(f"method must be drawn from {METHODS}, got {self.method}")
        if self.adjust_mode not in ADJUST_MODES:
            raise ConfigError(f"adjust_mode must be one of {ADJUST_MODES}")
        if isinstance(self.num_constraints, int):
            self.num_constraints = [self.num_constraints]
        if any(int(c) < 0 for c in self.num_constraints):
            raise ConfigError("num_constraints must be non-negative")
        if self.runs < 1 or self.jobs < 1 or self.restarts < 1:
            raise ConfigError("runs, jobs and restarts must be >= 1")
        if self.clusters is not None and self.clusters < 2:
            raise ConfigError("clusters must be >= 2")
        if self.kernel_kind not in KERNEL_KINDS:
            raise ConfigError(f"kernel_kind must be one of {KERNEL_KINDS}")
        if self.sigma is not None and self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.kind not in SYNTH_KINDS:
            raise ConfigError(f"kind must be one of {SYNTH_KINDS}")
        if self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("tol must be positive and max_iter >= 1")
        return self


def load_config(path: Optional[str], overrides: dict) -> RunConfig:
    """Defaults, then the JSON file, then command-line flags."""
    known = {f.name for f in fields(RunConfig)}
    data: dict = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"{path}: no such config file") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {unknown}")
    data.update({k: v for k, v in overrides.items() if k in known})
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


# ---------------------------------------------------------------------------
# output helpers

def atomic_write(path: Path, writer: Callable[[str], None]) -> Path:
    """Write through ``writer(tmp_path)`` then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _write_text(path: Path, text: str) -> Path:
    def w(tmp):
        with open(tmp, "w") as fh:
            fh.write(text)
    return atomic_write(path, w)


def _write_json(path: Path, obj) -> Path:
    return _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# input helpers

def _read_labels(path: str) -> np.ndarray:
    table = np.atleast_1d(load_dataset(path).points[:, -1])
    if not np.all(table == np.round(table)) or table.min() < 0:
        raise LoadError(f"{path}: labels must be non-negative integers")
    return table.astype(int)


def _load_source(features, kernel, labels, cfg: RunConfig, need_labels: bool):
    """Kernel matrix and (optional) labels for one source."""
    if (features is None) == (kernel is None):
        raise ConfigError("give exactly one of a feature file or a kernel file per source")
    lab = _read_labels(labels) if labels else None
    if kernel is not None:
        km = load_kernel(kernel)
    else:
        ds = load_dataset(features, has_labels=cfg.label_column and labels is None)
        if lab is None:
            lab = ds.labels
        if cfg.normalize:
            ds = normalize_features(ds)
        km = compute_kernel(ds, KernelSpec(cfg.kernel_kind, cfg.sigma))
    if lab is not None and lab.size != km.n:
        raise ConfigError(f"{lab.size} labels for {km.n} items")
    if need_labels and lab is None:
        raise ConfigError("labels are required: use --labels or a label column")
    return km, lab


def _graph(km: KernelMatrix, k: int):
    if k > km.n - 1:
        raise ConfigError(f"k={k} needs at least {k + 1} items, got {km.n}")
    return build_knn_graph(km, k)


def _propagation_params(cfg: RunConfig, solver: Optional[str] = None, two_source=False) -> PropagationParams:
    ax, ay = cfg.alpha_x, cfg.alpha_y
    if two_source:
        ax = 0.1 if ax is None else ax
        ay = 0.025 if ay is None else ay
    return PropagationParams(alpha=cfg.alpha, alpha_x=ax, alpha_y=ay, tol=cfg.tol,
                             max_iter=cfg.max_iter, solver=solver or cfg.solver)


def _read_split(path: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``index,split`` rows with split in {train, test}."""
    train, test = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#") or (lineno == 1 and row[0] == "index"):
                continue
            if len(row) != 2 or row[1].strip() not in ("train", "test"):
                raise LoadError(f"{path}:{lineno}: expected 'index,train|test'")
            try:
                i = int(row[0])
            except ValueError:
                raise LoadError(f"{path}:{lineno}: bad index {row[0]!r}") from None
            if not 0 <= i < n:
                raise LoadError(f"{path}:{lineno}: index {i} out of range")
            (train if row[1].strip() == "train" else test).append(i)
    if not train or not test:
        raise LoadError(f"{path}: need both train and test items")
    if set(train) & set(test):
        raise LoadError(f"{path}: items listed as both train and test")
    return np.array(sorted(train)), np.array(sorted(test))


# ---------------------------------------------------------------------------
# commands

def cmd_synth(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    if cfg.kind == "moons":
        ds = synth_two_moons(cfg.n, cfg.noise, cfg.seed)
        atomic_write(out / "moons.csv", lambda p: save_dataset(ds, p))
        atomic_write(out / "moons_constraints.csv",
                     lambda p: save_constraints(toy_moon_constraints(cfg.n), p))
        print(f"wrote {ds.n} two-moons points and 4 toy constraints to {out}")
    else:
        K = cfg.clusters or 3
        if cfg.n < K:
            raise ConfigError(f"n={cfg.n} is smaller than clusters={K}")
        ds = synth_blobs(cfg.n // K, K, ring_centers(K, cfg.radius), cfg.std, cfg.seed)
        atomic_write(out / "blobs.csv", lambda p: save_dataset(ds, p))
        print(f"wrote {ds.n} blob points ({K} clusters) to {out}")
    return EXIT_OK


def _initial_constraints(cfg: RunConfig, labels, n: int, count: int, seed: int) -> list[PairwiseConstraint]:
    if cfg.constraints:
        return load_constraints(cfg.constraints)
    if count == 0:
        return []
    if labels is None:
        raise ConfigError("sampling constraints needs labels (or pass --constraints)")
    return constraints_from_labels(labels, count=count, seed=seed)


def cmd_propagate(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    two = cfg.features_y is not None or cfg.kernel_y is not None
    kx, lx = _load_source(cfg.features, cfg.kernel, cfg.labels, cfg, need_labels=False)
    lbx = normalized_affinity(_graph(kx, cfg.k))
    if two:
        ky, _ = _load_source(cfg.features_y, cfg.kernel_y, cfg.labels_y, cfg, need_labels=False)
        lby = normalized_affinity(_graph(ky, cfg.k))
        if not cfg.constraints:
            raise ConfigError("two-source propagation needs --constraints")
        z = to_matrix(load_constraints(cfg.constraints), kx.n, ky.n)
        f = mscp(lbx, lby, z, _propagation_params(cfg, two_source=True))
    else:
        cs = _initial_constraints(cfg, lx, kx.n, int(cfg.num_constraints[0]), cfg.seed)
        z = to_matrix(cs, kx.n)
        p = _propagation_params(cfg)
        f = propagate_directions(lbx, z, p, cfg.directions) if p.solver != "exact_matrix_equation" \
            else e2cp(lbx, z, p)
    if cfg.binary:
        path = atomic_write(out / "fstar.bin", lambda p: save_fstar_binary(f.values, p))
    else:
        path = atomic_write(out / "fstar.csv", lambda p: save_fstar_csv(f.values, p))
    _write_json(out / "propagate.json", {"config": asdict(cfg), "clipped": f.clipped,
                                          "iterations": f.iterations, "shape": list(f.values.shape)})
    print(f"F* {f.values.shape[0]}x{f.values.shape[1]} -> {path}")
    print(f"clipped={str(f.clipped).lower()} iterations={f.iterations}")
    return EXIT_OK


def cmd_cluster(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    km, labels = _load_source(cfg.features, cfg.kernel, cfg.labels, cfg, need_labels=True)
    K = cfg.clusters or int(np.unique(labels).size)
    if K < 2 or K >= km.n:
        raise ConfigError(f"need 2 <= clusters < N, got {K}")
    graph = _graph(km, cfg.k)
    lbar = normalized_affinity(graph)
    # a constraint file is used as is; its size labels the results
    counts = ([len(_initial_constraints(cfg, labels, km.n, 0, cfg.seed))] if cfg.constraints
              else [int(c) for c in cfg.num_constraints])

    def one(method: str, count: int, run: int):
        seed = cfg.seed + run
        params = ClusterParams(k=cfg.k, alpha=cfg.alpha, solver=_propagation_params(cfg).solver,
                               adjust_mode=cfg.adjust_mode, directions=cfg.directions,
                               restarts=cfg.restarts, seed=seed, keep_trivial=cfg.keep_trivial,
                               tol=cfg.tol, max_iter=cfg.max_iter)
        cs = _initial_constraints(cfg, labels, km.n, count, seed)
        part = cluster_graph(graph, cs, K, method, params, lbar=lbar)
        atomic_write(out / "partitions" / f"{method}_c{count}_run{run:02d}.csv",
                     lambda p: save_partition(part, p))
        return adjusted_rand_index(part.assignment, labels)

    jobs = [(m, c, r) for m in cfg.method for c in counts for r in range(cfg.runs)]
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        aris = list(pool.map(lambda t: one(*t), jobs))
    table = dict(zip(jobs, aris))
    seeds = [cfg.seed + r for r in range(cfg.runs)]
    reports = []
    for m in cfg.method:
        for c in counts:
            rep = EvaluationReport.from_runs("ari", [table[(m, c, r)] for r in range(cfg.runs)], seeds,
                                             {"method": m, "num_constraints": c})
            reports.append(rep.to_dict())
            print(f"{m:6s} constraints={c:<6d} mean ARI={rep.value:.4f} over {cfg.runs} runs")

    def long_csv(p):
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "num_constraints", "run", "ari"])
            for (m, c, r), v in table.items():
                w.writerow([m, c, r, repr(float(v))])

    atomic_write(out / "ari_long.csv", long_csv)
    _write_json(out / "cluster_report.json", {"config": asdict(cfg), "results": reports})
    return EXIT_OK


def _retrieval_map(f, train, test, lx, ly):
    out = {}
    for direction, q_lab, i_lab in (("x_to_y", lx, ly), ("y_to_x", ly, lx)):
        ranks = rank_all(f, test, direction, candidates=test)
        out[direction] = (mean_average_precision(ranks, label_relevance(ranks, q_lab, i_lab)), ranks)
    return out


def cmd_retrieve(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    kx, lx = _load_source(cfg.features, cfg.kernel, cfg.labels, cfg, need_labels=True)
    ky, ly = _load_source(cfg.features_y, cfg.kernel_y, cfg.labels_y, cfg, need_labels=True)
    if not cfg.split:
        raise ConfigError("retrieval needs --split")
    if kx.n != ky.n:
        raise ConfigError(f"paired sources must have equal sizes, got {kx.n} and {ky.n}")
    train, test = _read_split(cfg.split, kx.n)
    # transductive: graphs over all items, constraints among training items only
    lbx = normalized_affinity(_graph(kx, cfg.k))
    lby = normalized_affinity(_graph(ky, cfg.k))
    if cfg.constraints:
        cs = load_constraints(cfg.constraints)
        tr = set(train.tolist())
        bad = [c for c in cs if c.i not in tr or c.j not in tr]
        if bad:
            raise ConfigError(f"constraint ({bad[0].i}, {bad[0].j}) touches a test item")
    else:
        count = int(cfg.num_constraints[0]) or None
        cs = constraints_from_labels(lx, ly, count=count, seed=cfg.seed, rows=train, cols=train)
    z = to_matrix(cs, kx.n, ky.n)
    solvers = [cfg.solver] + ([cfg.compare_solver] if cfg.compare_solver else [])
    results = {}
    for s in solvers:
        f = mscp(lbx, lby, z, _propagation_params(cfg, s, two_source=True))
        maps = _retrieval_map(f, train, test, lx, ly)
        tag = PropagationParams(solver=s).solver
        results[tag] = {d: v[0] for d, v in maps.items()}
        for d, (value, ranks) in maps.items():
            atomic_write(out / f"rankings_{tag}_{d}.csv", lambda p, r=ranks: save_rankings(r, p))
            print(f"{tag:22s} {d}: MAP={value:.4f}")
    report = {"config": asdict(cfg), "num_constraints": len(cs), "map": results}
    if len(results) == 2:
        a, b = list(results)
        report["map_difference"] = {d: results[a][d] - results[b][d] for d in ("x_to_y", "y_to_x")}
        print("MAP difference ({} - {}): {}".format(a, b, ", ".join(
            f"{d}={v:+.2e}" for d, v in report["map_difference"].items())))
    _write_json(out / "retrieve_report.json", report)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "propagate": cmd_propagate, "cluster": cmd_cluster,
            "retrieve": cmd_retrieve}


# ---------------------------------------------------------------------------
# argument parsing

def _bool(s: str) -> bool:
    v = s.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="e2cp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS
    for name in COMMANDS:
        p = sub.add_parser(name, argument_default=S)
        p.add_argument("--config", default=None, help="JSON file with RunConfig keys")
        p.add_argument("--features")
        p.add_argument("--kernel")
        p.add_argument("--labels")
        p.add_argument("--label-column", type=_bool, help="last feature column holds labels (default true)")
        p.add_argument("--features-y")
        p.add_argument("--kernel-y")
        p.add_argument("--labels-y")
        p.add_argument("--split")
        p.add_argument("--constraints")
        p.add_argument("--kernel-kind", choices=KERNEL_KINDS)
        p.add_argument("--sigma", type=float)
        p.add_argument("--normalize", action="store_true")
        p.add_argument("--k", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--alpha-x", type=float)
        p.add_argument("--alpha-y", type=float)
        p.add_argument("--solver", choices=SOLVERS + ("exact",))
        p.add_argument("--compare-solver", choices=SOLVERS + ("exact",))
        p.add_argument("--directions", choices=DIRECTIONS)
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iter", type=int)
        p.add_argument("--method", nargs="+", choices=METHODS)
        p.add_argument("--adjust-mode", choices=ADJUST_MODES)
        p.add_argument("--clusters", type=int)
        p.add_argument("--num-constraints", type=int, nargs="+")
        p.add_argument("--runs", type=int)
        p.add_argument("--restarts", type=int)
        p.add_argument("--keep-trivial", action="store_true")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--kind", choices=SYNTH_KINDS)
        p.add_argument("--n", type=int)
        p.add_argument("--noise", type=float)
        p.add_argument("--std", type=float)
        p.add_argument("--radius", type=float)
        p.add_argument("--out-dir")
        p.add_argument("--binary", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except (ConvergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, LoadError, ConstraintError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
