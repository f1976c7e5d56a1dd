"""Vertical/horizontal constraint propagation, its closed forms, and exact
Lyapunov / Sylvester reference solvers.

Everything here works on the normalized affinity ``lbar`` (sparse or dense).
The propagated matrix of a single-source problem is

    F* = (1-a)^2 (I - a lbar)^-1 Z (I - a lbar)^-1

and the two-source version uses one affinity and one ``a`` per side.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .constraints import ConstraintMatrix
from .graph import NormalizedAffinity

log = logging.getLogger(__name__)

SOLVERS = ("iterative", "closed_form", "exact_matrix_equation")
DIRECTIONS = ("vp", "vp_hp", "vp_hp_vp")

# below this size the resolvent is factored densely
DENSE_MAX = 512
# above n / WIDE_RHS right-hand sides the resolvent is factored anyway
WIDE_RHS = 4

Operator = Union[NormalizedAffinity, np.ndarray, sp.spmatrix]


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual: float, iterations: int):
        super().__init__(f"{msg} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class PropagationParams:
    alpha: float = 0.6
    alpha_x: Optional[float] = None
    alpha_y: Optional[float] = None
    tol: float = 1e-9
    max_iter: int = 10000
    solver: str = "closed_form"

    def __post_init__(self):
        if self.solver == "exact":
            object.__setattr__(self, "solver", "exact_matrix_equation")
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {SOLVERS}")
        for name in ("alpha", "alpha_x", "alpha_y"):
            a = getattr(self, name)
            if a is not None and not 0 <= a < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {a}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    @property
    def ax(self) -> float:
        return self.alpha if self.alpha_x is None else self.alpha_x

    @property
    def ay(self) -> float:
        return self.alpha if self.alpha_y is None else self.alpha_y

    @property
    def mu(self) -> float:
        return alpha_to_mu(self.alpha)

    @classmethod
    def two_source_defaults(cls, **kw) -> "PropagationParams":
        kw.setdefault("alpha_x", 0.1)
        kw.setdefault("alpha_y", 0.025)
        return cls(**kw)


def alpha_to_mu(alpha: float) -> float:
    return alpha / (1.0 - alpha)


@dataclass(frozen=True)
class PropagatedConstraints:
    values: np.ndarray = field(repr=False)
    clipped: bool = False
    iterations: int = 0

    @property
    def shape(self):
        return self.values.shape


def _op(lbar: Operator):
    m = lbar.values if isinstance(lbar, NormalizedAffinity) else lbar
    if sp.issparse(m):
        return sp.csr_matrix(m)
    return np.asarray(m, dtype=float)


def _dense(m) -> np.ndarray:
    return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)


def _zvals(z) -> np.ndarray:
    return z.values if isinstance(z, ConstraintMatrix) else np.asarray(z, dtype=float)


def _finalize(raw: np.ndarray, iterations: int = 0) -> PropagatedConstraints:
    clipped = bool(np.any(np.abs(raw) > 1.0))
    vals = np.clip(raw, -1.0, 1.0) if clipped else raw
    if clipped:
        log.info("propagated constraints clipped to [-1, 1] (max |f| = %.4g)", np.abs(raw).max())
    return PropagatedConstraints(vals, clipped=clipped, iterations=iterations)


# ---------------------------------------------------------------------------
# iterative label propagation

def label_propagation(op, z: np.ndarray, alpha: float, tol: float, max_iter: int,
                      side: str = "left") -> tuple[np.ndarray, list[float]]:
    """Iterate F <- a*op*F + (1-a)*Z (``side='left'``) or F <- a*F*op + (1-a)*Z.

    Starts at F = Z and stops once ||F(t+1) - F(t)|| / max(||F(t)||, 1e-30) < tol.
    Returns the last iterate and the absolute step norms ||F(t+1) - F(t)||.
    """
    op = _op(op)
    f = np.array(z, dtype=float, copy=True)
    base = (1.0 - alpha) * f
    steps: list[float] = []
    for t in range(1, max_iter + 1):
        if side == "left":
            nxt = alpha * (op @ f) + base
        else:
            nxt = alpha * np.asarray(f @ op) + base
        step = float(np.linalg.norm(nxt - f))
        steps.append(step)
        rel = step / max(float(np.linalg.norm(f)), 1e-30)
        f = nxt
        if rel < tol:
            return f, steps
    raise ConvergenceError("label propagation did not converge", rel, max_iter)


def _vertical_iter(op, z, alpha, tol, max_iter):
    # zero columns of Z stay zero, so only the constrained ones are iterated
    cols = np.flatnonzero(np.any(z != 0, axis=0))
    out = np.zeros(z.shape)
    if cols.size == 0:
        return out, 1
    sub, steps = label_propagation(op, z[:, cols], alpha, tol, max_iter, side="left")
    out[:, cols] = sub
    return out, len(steps)


def _horizontal_iter(f, op, alpha, tol, max_iter):
    rows = np.flatnonzero(np.any(f != 0, axis=1))
    out = np.zeros(f.shape)
    if rows.size == 0:
        return out, 1
    sub, steps = label_propagation(op, f[rows], alpha, tol, max_iter, side="right")
    out[rows] = sub
    return out, len(steps)


def propagate_vertical(lbar: Operator, z, p: PropagationParams = PropagationParams()) -> np.ndarray:
    """Column-wise propagation over the row source; limit (1-a)(I - a lbar)^-1 Z."""
    op = _op(lbar)
    z = _zvals(z)
    if op.shape[0] != z.shape[0]:
        raise ValueError(f"affinity is {op.shape}, constraints have {z.shape[0]} rows")
    return _vertical_iter(op, z, p.alpha, p.tol, p.max_iter)[0]


def propagate_horizontal(f_v, lbar: Operator, p: PropagationParams = PropagationParams()) -> np.ndarray:
    """Row-wise propagation over the column source; limit (1-a) F (I - a lbar)^-1."""
    op = _op(lbar)
    f_v = np.asarray(f_v, dtype=float)
    if op.shape[0] != f_v.shape[1]:
        raise ValueError(f"affinity is {op.shape}, matrix has {f_v.shape[1]} columns")
    return _horizontal_iter(f_v, op, p.alpha, p.tol, p.max_iter)[0]


# ---------------------------------------------------------------------------
# closed form through SPD solves with I - a*lbar

def block_cg(apply, b: np.ndarray, rtol: float = 1e-13, max_iter: int = 1000) -> np.ndarray:
    """Conjugate gradients run independently on every column of ``b``.

    Converged columns are frozen (zero step) rather than dropped, which keeps
    the block contiguous.
    """
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = np.einsum("ij,ij->j", r, r)
    target = (rtol * rtol) * rs
    active = rs > target
    for it in range(max_iter):
        if not active.any():
            return x
        ap = apply(p)
        pap = np.einsum("ij,ij->j", p, ap)
        step = np.divide(rs, pap, out=np.zeros_like(rs), where=active)
        x += step * p
        r -= step * ap
        rs_new = np.einsum("ij,ij->j", r, r)
        beta = np.divide(rs_new, rs, out=np.zeros_like(rs), where=active)
        p *= beta
        p += r
        rs = np.where(active, rs_new, rs)
        active &= rs_new > target
    if np.any(active):
        worst = float(np.sqrt(rs[active].max() / np.maximum(target[active], 1e-300).min()) * rtol)
        raise ConvergenceError("conjugate gradients did not converge", worst, max_iter)
    return x


class Resolvent:
    """Solves (I - a*lbar) X = B.

    The operator is SPD with spectrum in [1-a, 1+a]: dense Cholesky for small
    graphs or wide right-hand sides, block conjugate gradients on the sparse
    matrix otherwise.
    """

    def __init__(self, lbar: Operator, alpha: float, dense_max: Optional[int] = None):
        self.op = _op(lbar)
        self.alpha = alpha
        self.n = self.op.shape[0]
        self.dense_max = DENSE_MAX if dense_max is None else dense_max
        self._chol = None
        if self.n <= self.dense_max:
            self._factor()

    def _factor(self):
        a = -self.alpha * _dense(self.op)
        a[np.diag_indices_from(a)] += 1.0
        self._chol = la.cho_factor(a, lower=True, check_finite=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.alpha == 0:
            return b.copy()
        if self._chol is None and b.ndim == 2 and b.shape[1] * WIDE_RHS > self.n:
            # sparse products per CG step cost more than one dense factorization
            self._factor()
        if self._chol is not None:
            return la.cho_solve(self._chol, b, check_finite=False)
        op, a = self.op, self.alpha
        return block_cg(lambda v: v - a * (op @ v), b)

    def columns(self, idx: np.ndarray) -> np.ndarray:
        """The columns ``idx`` of (I - a*lbar)^-1."""
        e = np.zeros((self.n, idx.size))
        e[idx, np.arange(idx.size)] = 1.0
        return self.solve(e)


def closed_form_vertical(lbar: Operator, z, alpha: float) -> np.ndarray:
    z = _zvals(z)
    cols = np.flatnonzero(np.any(z != 0, axis=0))
    out = np.zeros(z.shape)
    if cols.size:
        out[:, cols] = (1.0 - alpha) * Resolvent(lbar, alpha).solve(z[:, cols])
    return out


def closed_form_horizontal(f, lbar: Operator, alpha: float) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    rows = np.flatnonzero(np.any(f != 0, axis=1))
    out = np.zeros(f.shape)
    if rows.size:
        # lbar symmetric: F (I - a lbar)^-1 = ((I - a lbar)^-1 F^T)^T
        out[rows] = (1.0 - alpha) * Resolvent(lbar, alpha).solve(f[rows].T).T
    return out


def _closed_form_two_sided(res_x: Resolvent, ax: float, z: np.ndarray,
                           res_y: Resolvent, ay: float) -> np.ndarray:
    # (I-a L)^-1 Z (I-b M)^-1 only touches the resolvent columns at constrained
    # rows / columns of Z: B_x Z[S,T] B_y^T
    rows = np.flatnonzero(np.any(z != 0, axis=1))
    cols = np.flatnonzero(np.any(z != 0, axis=0))
    if rows.size == 0:
        return np.zeros(z.shape)
    bx = res_x.columns(rows)
    by = bx if (res_y is res_x and np.array_equal(rows, cols)) else res_y.columns(cols)
    core = ((1.0 - ax) * (1.0 - ay)) * z[np.ix_(rows, cols)]
    return (bx @ core) @ by.T


# ---------------------------------------------------------------------------
# exact matrix equations

def _shifted_eigh(lap, mu: float):
    a = mu * _dense(lap)
    a[np.diag_indices_from(a)] += 1.0
    a = 0.5 * (a + a.T)
    return la.eigh(a, check_finite=False)


def solve_lyapunov(lap, z, mu: float) -> np.ndarray:
    """Solve (I + mu L) F + F (I + mu L) = 2 Z for symmetric PSD L.

    Uses I + mu L = Q diag(lam) Q^T, so in the eigenbasis
    G_ij = 2 (Q^T Z Q)_ij / (lam_i + lam_j) and F = Q G Q^T.
    """
    if mu < 0:
        raise ValueError("mu must be non-negative")
    z = _zvals(z)
    lam, q = _shifted_eigh(lap, mu)
    g = 2.0 * (q.T @ z @ q) / (lam[:, None] + lam[None, :])
    return q @ g @ q.T


def solve_sylvester(lap_x, lap_y, z, mu_x: float, mu_y: float) -> np.ndarray:
    """Solve (I + mu_x Lx) F + F (I + mu_y Ly) = 2 Z with two symmetric eigendecompositions."""
    if mu_x < 0 or mu_y < 0:
        raise ValueError("mu must be non-negative")
    z = _zvals(z)
    if lap_x.shape[0] != z.shape[0] or lap_y.shape[0] != z.shape[1]:
        raise ValueError(f"shape mismatch: Lx {lap_x.shape}, Ly {lap_y.shape}, Z {z.shape}")
    lx, qx = _shifted_eigh(lap_x, mu_x)
    ly, qy = _shifted_eigh(lap_y, mu_y)
    g = 2.0 * (qx.T @ z @ qy) / (lx[:, None] + ly[None, :])
    return qx @ g @ qy.T


def regularized_energy(f, z, lap_x, lap_y, mu_x: float, mu_y: float) -> float:
    """||F - Z||^2 + mu_x/2 tr(F^T Lx F) + mu_y/2 tr(F Ly F^T)."""
    f = np.asarray(f, dtype=float)
    z = _zvals(z)
    fit = float(np.sum((f - z) ** 2))
    sx = float(np.sum(f * np.asarray(lap_x @ f)))
    sy = float(np.sum(f * np.asarray((lap_y @ f.T).T)))
    return fit + 0.5 * mu_x * sx + 0.5 * mu_y * sy


def energy_gradient(f, z, lap_x, lap_y, mu_x: float, mu_y: float) -> np.ndarray:
    """2(F - Z) + mu_x Lx F + mu_y F Ly (Ly symmetric)."""
    f = np.asarray(f, dtype=float)
    z = _zvals(z)
    return 2.0 * (f - z) + mu_x * np.asarray(lap_x @ f) + mu_y * np.asarray((lap_y @ f.T).T)


# ---------------------------------------------------------------------------
# public drivers

def _identity_minus(lbar: Operator):
    op = _op(lbar)
    if sp.issparse(op):
        return (sp.identity(op.shape[0], format="csr") - op).tocsr()
    return np.eye(op.shape[0]) - op


def e2cp(lbar: Operator, z, p: PropagationParams = PropagationParams(),
         clip: bool = True) -> PropagatedConstraints:
    """Exhaustive propagation of a symmetric single-source constraint matrix.

    ``clip=False`` skips the final clipping to [-1, 1] (the raw linear map).
    """
    op = _op(lbar)
    z = _zvals(z)
    if z.shape[0] != z.shape[1] or op.shape[0] != z.shape[0]:
        raise ValueError(f"need square Z matching the affinity {op.shape}, got {z.shape}")
    a = p.alpha
    iters = 0
    if p.solver == "iterative":
        fv, n1 = _vertical_iter(op, z, a, p.tol, p.max_iter)
        raw, n2 = _horizontal_iter(fv, op, a, p.tol, p.max_iter)
        iters = n1 + n2
    elif p.solver == "closed_form":
        res = Resolvent(op, a)
        raw = _closed_form_two_sided(res, a, z, res, a)
    else:
        raw = solve_lyapunov(_identity_minus(op), z, alpha_to_mu(a))
    if np.array_equal(z, z.T):
        # the exact limit is symmetric; remove rounding asymmetry
        raw = 0.5 * (raw + raw.T)
    if not clip:
        return PropagatedConstraints(raw, clipped=False, iterations=iters)
    return _finalize(raw, iters)


def propagate_directions(lbar: Operator, z, p: PropagationParams = PropagationParams(),
                         directions: str = "vp_hp", clip: bool = True) -> PropagatedConstraints:
    """Propagation restricted to a sequence of directions (vp, vp_hp, vp_hp_vp).

    Uses the iterative or closed-form passes according to ``p.solver``; the
    exact solver has no notion of direction and is rejected.
    """
    if directions not in DIRECTIONS:
        raise ValueError(f"unknown directions {directions!r}; choose from {DIRECTIONS}")
    if directions == "vp_hp":
        return e2cp(lbar, z, p, clip=clip)
    if p.solver == "exact_matrix_equation":
        raise ValueError("direction ablation needs the iterative or closed_form solver")
    op = _op(lbar)
    f = _zvals(z)
    iters = 0
    for step in directions.split("_"):
        if p.solver == "iterative":
            if step == "vp":
                f, n = _vertical_iter(op, f, p.alpha, p.tol, p.max_iter)
            else:
                f, n = _horizontal_iter(f, op, p.alpha, p.tol, p.max_iter)
            iters += n
        elif step == "vp":
            f = closed_form_vertical(op, f, p.alpha)
        else:
            f = closed_form_horizontal(f, op, p.alpha)
    if not clip:
        return PropagatedConstraints(f, iterations=iters)
    return _finalize(f, iters)


def mscp(lbar_x: Operator, lbar_y: Operator, z, p: PropagationParams = PropagationParams(),
         first: str = "x", clip: bool = True) -> PropagatedConstraints:
    """Two-source propagation: over source X with alpha_x, over source Y with alpha_y.

    ``first`` picks which source the iterative solver propagates over first;
    the limit does not depend on it.
    """
    ox, oy = _op(lbar_x), _op(lbar_y)
    z = _zvals(z)
    if ox.shape[0] != z.shape[0] or oy.shape[0] != z.shape[1]:
        raise ValueError(f"shape mismatch: Lx {ox.shape}, Ly {oy.shape}, Z {z.shape}")
    if first not in ("x", "y"):
        raise ValueError("first must be 'x' or 'y'")
    ax, ay = p.ax, p.ay
    iters = 0
    if p.solver == "iterative":
        if first == "x":
            f, n1 = _vertical_iter(ox, z, ax, p.tol, p.max_iter)
            raw, n2 = _horizontal_iter(f, oy, ay, p.tol, p.max_iter)
        else:
            f, n1 = _horizontal_iter(z, oy, ay, p.tol, p.max_iter)
            raw, n2 = _vertical_iter(ox, f, ax, p.tol, p.max_iter)
        iters = n1 + n2
    elif p.solver == "closed_form":
        rx = Resolvent(ox, ax)
        ry = rx if (oy is ox and ay == ax) else Resolvent(oy, ay)
        raw = _closed_form_two_sided(rx, ax, z, ry, ay)
    else:
        raw = solve_sylvester(_identity_minus(ox), _identity_minus(oy), z,
                              alpha_to_mu(ax), alpha_to_mu(ay))
    if not clip:
        return PropagatedConstraints(raw, iterations=iters)
    return _finalize(raw, iters)


# ---------------------------------------------------------------------------
# F* files

MAGIC = b"E2CPF*01"


def save_fstar_csv(f: np.ndarray, path) -> None:
    np.savetxt(path, np.asarray(f), delimiter=",", fmt="%.17g")


def save_fstar_binary(f: np.ndarray, path) -> None:
    """16-byte header (magic + two little-endian uint32 dims), then row-major float64."""
    f = np.ascontiguousarray(f, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", *f.shape))
        fh.write(f.tobytes(order="C"))


def load_fstar_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:8] != MAGIC:
            raise ValueError(f"{path}: not an F* binary file")
        n, m = struct.unpack("<II", head[8:])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * m:
        raise ValueError(f"{path}: expected {n * m} values, found {data.size}")
    return data.reshape(n, m).astype(float)
