"""Rank-1 solvers for regions with a single clear propagation condition.

On sin-uniform angle grids the beam-space gain matrix is symmetric Toeplitz,
so it is fully determined by its first row. Two solvers exploit this:

* ``solve_los_regularized`` keeps the full matrix free and adds diagonal-shift
  and symmetry penalties on top of the masked fit (soft enforcement).
* ``solve_los_hard`` parameterizes the matrix by its first row. Because every
  matrix position depends only on |i - j|, the least-squares update for the
  row decouples across lags into grouped accumulations over the observed
  entries (a diagonal Gram matrix), costing O(|observations| + N) per
  iteration. The attenuation update is the same monotone-simplex QP in both.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ._qp import ConvergenceError, fill_flat_profile, solve_qp
from .decomp import ConvergenceReport, FactorModel, SolverOptions, default_gain_init, \
    resolve_lambdas, toeplitz_penalty, _toeplitz_grad
from .polar import MaskedTensor3, mode3_unfold, unvec, vec

import time

__all__ = [
    "ToeplitzGain",
    "QPData",
    "UndeterminedLagError",
    "OpCounter",
    "lift_matrix",
    "lifting_matrix",
    "build_qp_data",
    "update_rho_qp",
    "update_g_closed_form",
    "solve_los_hard",
    "solve_los_regularized",
    "symmetry_penalty",
    "write_toeplitz_factors",
    "read_toeplitz_factors",
]


class UndeterminedLagError(RuntimeError):
    """Some lag classes have no observations with positive attenuation."""

    def __init__(self, lags):
        self.lags = sorted(int(v) for v in lags)
        super().__init__(f"undetermined lag classes: {self.lags}")


class OpCounter:
    """Accumulates the number of elements processed by grouped accumulations."""

    def __init__(self):
        self.total = 0

    def add(self, n: int):
        self.total += int(n)


@dataclass
class ToeplitzGain:
    """Symmetric Toeplitz gain matrix stored as its first row."""

    first_row: np.ndarray

    def __post_init__(self):
        self.first_row = np.asarray(self.first_row, dtype=float)
        if self.first_row.ndim != 1 or self.first_row.size < 1:
            raise ValueError("first_row must be a nonempty vector")

    @property
    def size(self) -> int:
        return self.first_row.size

    def matrix(self) -> np.ndarray:
        return lift_matrix(self.first_row)


@dataclass
class QPData:
    """Quadratic form of the attenuation subproblem: diag(h_diag), c, and the
    first-difference constraint matrix A (monotonicity rows A rho >= 0)."""

    h_diag: np.ndarray
    c: np.ndarray
    constraint_matrix: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self.h_diag = np.asarray(self.h_diag, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if np.any(self.h_diag < 0):
            raise ValueError("h_diag entries are sums of squares, must be >= 0")
        if self.constraint_matrix is None:
            self.constraint_matrix = first_difference_matrix(self.h_diag.size)


def first_difference_matrix(n: int) -> np.ndarray:
    """(n-1) x n matrix with rows e_k - e_{k+1}."""
    a = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    a[idx, idx] = 1.0
    a[idx, idx + 1] = -1.0
    return a


def lift_matrix(g) -> np.ndarray:
    """Symmetric Toeplitz matrix with first row g: entry (i, j) is g[|i-j|]."""
    g = np.asarray(g, dtype=float)
    n = g.size
    idx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    return g[idx]


def lifting_matrix(n: int) -> np.ndarray:
    """0/1 matrix T with vec(lift_matrix(g)) = T g, in column-major vec layout.

    Materialized for test oracles only; the solver path never forms it.
    """
    T = np.zeros((n * n, n))
    for col in range(n):
        for row in range(n):
            T[col * n + row, abs(row - col)] = 1.0
    return T


def symmetry_penalty(g: np.ndarray) -> float:
    """Sum over all (i, j) of (G[i,j] - G[j,i])^2."""
    g = np.asarray(g, dtype=float)
    d = g - g.T
    return float((d * d).sum())


# ---------------------------------------------------------------------------
# Attenuation update (shared by both solvers)
# ---------------------------------------------------------------------------

def build_qp_data(x_u: np.ndarray, w_u: np.ndarray, gain: np.ndarray) -> QPData:
    """Quadratic coefficients of the rank-1 attenuation subproblem.

    h_diag[k] = 2 sum_p (vec(G)_p W[p,k])^2 and
    c[k] = -2 sum_p W[p,k] X[p,k] vec(G)_p, so the masked fit equals
    const + (1/2) rho^T diag(h_diag) rho + c^T rho.
    """
    gv = vec(np.asarray(gain, dtype=float))
    h_diag = 2.0 * (w_u * gv[:, None] ** 2).sum(axis=0)
    c = -2.0 * ((w_u * x_u) * gv[:, None]).sum(axis=0)
    return QPData(h_diag, c)


def update_rho_qp(x_u, w_u, gain, qp_tolerance: float = 1e-8) -> np.ndarray:
    """Minimize the masked fit in rho over the monotone simplex.

    The feasible set is {A rho >= 0, rho >= 0, sum rho = 1} with A the
    first-difference matrix. Unobserved distance bins are filled along the
    optimal face (their values do not affect the fit).
    """
    gain = np.asarray(gain, dtype=float)
    if np.any(gain < 0) or not np.any(gain > 0):
        raise ValueError("gain must be nonnegative and not all zero")
    data = build_qp_data(x_u, w_u, gain)
    K = data.h_diag.size
    Gc = np.vstack([-np.eye(K), -data.constraint_matrix])
    hc = np.zeros(2 * K - 1)
    A = np.ones((1, K))
    b = np.ones(1)
    rho, _ = solve_qp(np.diag(data.h_diag), data.c, Gc, hc, A, b, qp_tolerance)
    flat = w_u.sum(axis=0) == 0
    rho = fill_flat_profile(rho[:, None], flat, qp_tolerance)[:, 0]
    return rho


# ---------------------------------------------------------------------------
# Closed-form first-row update
# ---------------------------------------------------------------------------

def _observed_coo(x_u, w_u, n: int):
    """COO view of the observed entries: (lag index, distance bin, value)."""
    p, k = np.nonzero(w_u)
    lag = np.abs(p % n - p // n)
    return lag, k, x_u[p, k]


def update_g_closed_form(x_u, w_u, rho, fill_undetermined: bool = False,
                         counter: Optional[OpCounter] = None):
    """Least-squares first row given rho; decouples into per-lag accumulations.

    For each lag d: g_d = sum over observed (i, j, k) with |i-j| = d of
    x[i,j,k] * rho[k], divided by the matching sum of rho[k]^2. Lags with a
    zero denominator raise UndeterminedLagError unless ``fill_undetermined``
    is set, in which case they are filled by linear interpolation between the
    nearest determined lags (constant extension at the ends) and reported.

    Returns (g, undetermined_lags).
    """
    rho = np.asarray(rho, dtype=float)
    n2 = x_u.shape[0]
    n = int(round(np.sqrt(n2)))
    if n * n != n2:
        raise ValueError("unfolded tensor must have I = J")
    if not np.any(rho != 0):
        raise ValueError("rho must not be all zero")
    lag, k, vals = _observed_coo(x_u, w_u, n)
    return _g_update_core(lag, k, vals, rho, n, fill_undetermined, counter)


def _g_update_core(lag, k, vals, rho, n, fill_undetermined, counter=None):
    rk = rho[k]
    num = np.bincount(lag, weights=vals * rk, minlength=n)
    den = np.bincount(lag, weights=rk * rk, minlength=n)
    if counter is not None:
        # grouped accumulations touch each observation a constant number of
        # times plus O(n) finalization work
        counter.add(4 * lag.size + 2 * n)
    determined = den > 0
    undetermined = np.where(~determined)[0]
    if undetermined.size and not fill_undetermined:
        raise UndeterminedLagError(undetermined)
    g = np.zeros(n)
    g[determined] = num[determined] / den[determined]
    if undetermined.size:
        if not determined.any():
            raise UndeterminedLagError(np.arange(n))
        src = np.where(determined)[0]
        g[undetermined] = np.interp(undetermined, src, g[src])
    return g, [int(v) for v in undetermined]


# ---------------------------------------------------------------------------
# Alternating solvers
# ---------------------------------------------------------------------------

def _rank1_fit(x_u, w_u, gain, rho) -> float:
    r = w_u * (x_u - np.outer(vec(gain), rho))
    return float((r * r).sum())


def solve_los_hard(x: MaskedTensor3, opts: Optional[SolverOptions] = None,
                   gain_prior: Optional[np.ndarray] = None,
                   counter: Optional[OpCounter] = None):
    """Alternating solver with the symmetric Toeplitz structure as a hard
    constraint: the gain matrix is its first row, updated in closed form.

    Returns (ToeplitzGain, rho, ConvergenceReport).
    """
    opts = opts or SolverOptions()
    I, J, K = x.shape
    if I != J:
        raise ValueError("hard-constrained solver requires I = J")
    if x.n_observed == 0:
        raise ValueError("empty observation mask")
    x_u, w_u = mode3_unfold(x)
    lag, kk, vals = _observed_coo(x_u, w_u, I)

    t0 = time.perf_counter()
    gain = default_gain_init(x_u, w_u, 1, (I, J), opts, gain_prior)[0]
    rho = None
    g = None
    undetermined: List[int] = []
    objs = []
    cur = np.inf
    converged = False
    for _ in range(opts.max_outer_iters):
        new_rho = update_rho_qp(x_u, w_u, gain, opts.qp_tolerance)
        cand = _rank1_fit(x_u, w_u, gain, new_rho)
        if rho is None or cand <= cur:
            rho, cur = new_rho, cand
        if not objs:
            objs.append(cur)  # objective at (initial gain, first feasible rho)
        new_g, new_und = _g_update_core(lag, kk, vals, rho, I, True, counter)
        cand = _rank1_fit(x_u, w_u, lift_matrix(new_g), rho)
        if g is None or cand <= cur:
            g, undetermined, cur = new_g, new_und, cand
            gain = lift_matrix(g)
        objs.append(cur)
        rel = (objs[-2] - objs[-1]) / max(objs[-2], 1e-300)
        if len(objs) > 2 and rel < opts.outer_rel_tolerance:
            converged = True
            break
    report = ConvergenceReport(np.array(objs), len(objs) - 1, converged,
                               time.perf_counter() - t0, undetermined_lags=undetermined)
    return ToeplitzGain(g), rho, report


def solve_los_regularized(x: MaskedTensor3, lambda_toeplitz: Optional[float] = None,
                          lambda_symmetry: Optional[float] = None,
                          opts: Optional[SolverOptions] = None,
                          gain_prior: Optional[np.ndarray] = None):
    """Rank-1 alternating solver with the Toeplitz and symmetry structure
    enforced through penalties instead of constraints.

    The penalty weights default to the data-scaled value ||W*X||_F^2 / (I*J)
    (symmetry weight defaults to the Toeplitz weight). Returns
    (gain matrix, rho, ConvergenceReport).
    """
    opts = opts or SolverOptions()
    I, J, K = x.shape
    if I != J:
        raise ValueError("regularized solver requires I = J")
    if x.n_observed == 0:
        raise ValueError("empty observation mask")
    x_u, w_u = mode3_unfold(x)
    lam1 = lambda_toeplitz
    if lam1 is None:
        lam1, _ = resolve_lambdas(x_u, w_u, opts)
    lam2 = lam1 if lambda_symmetry is None else float(lambda_symmetry)

    def full_obj(gain, rho):
        return _rank1_fit(x_u, w_u, gain, rho) + lam1 * toeplitz_penalty(gain) \
            + lam2 * symmetry_penalty(gain)

    t0 = time.perf_counter()
    gain = default_gain_init(x_u, w_u, 1, (I, J), opts, gain_prior)[0]
    rho = update_rho_qp(x_u, w_u, gain, opts.qp_tolerance)
    cur = full_obj(gain, rho)
    objs = [cur]
    converged = False
    for _ in range(opts.max_outer_iters):
        new_gain = _update_gain_regularized(x_u, w_u, rho, gain, lam1, lam2, opts)
        cand = full_obj(new_gain, rho)
        if cand <= cur:
            gain, cur = new_gain, cand
        new_rho = update_rho_qp(x_u, w_u, gain, opts.qp_tolerance)
        cand = full_obj(gain, new_rho)
        if cand <= cur:
            rho, cur = new_rho, cand
        objs.append(cur)
        rel = (objs[-2] - objs[-1]) / max(objs[-2], 1e-300)
        if rel < opts.outer_rel_tolerance:
            converged = True
            break
    report = ConvergenceReport(np.array(objs), len(objs) - 1, converged,
                               time.perf_counter() - t0)
    return gain, rho, report


def _update_gain_regularized(x_u, w_u, rho, gain0, lam1, lam2, opts: SolverOptions):
    """Projected gradient descent on fit + shift penalty + symmetry penalty."""
    eps = opts.epsilon_positive
    gain = np.maximum(gain0, eps)
    n = gain.shape[0]

    def f_grad(g):
        resid = w_u * (np.outer(vec(g), rho) - x_u)
        val = float((resid * resid).sum())
        grad = unvec(2.0 * resid @ rho, n, n).copy()
        val += lam1 * toeplitz_penalty(g) + lam2 * symmetry_penalty(g)
        grad += lam1 * _toeplitz_grad(g)
        grad += 4.0 * lam2 * (g - g.T)
        return val, grad

    lip = 2.0 * float(rho @ rho) + 8.0 * lam1 + 8.0 * lam2
    step = 1.0 / max(lip, 1e-300)
    val, grad = f_grad(gain)
    for _ in range(opts.max_inner_iters_g):
        t = step
        for _ in range(30):
            cand = np.maximum(gain - t * grad, eps)
            cand_val, cand_grad = f_grad(cand)
            if cand_val <= val:
                break
            t *= 0.5
        else:
            break
        improvement = val - cand_val
        gain, grad, val = cand, cand_grad, cand_val
        if improvement <= opts.inner_rel_tolerance * max(val, 1e-300):
            break
    return gain


def hard_model(gain: ToeplitzGain, rho: np.ndarray) -> FactorModel:
    """Rank-1 FactorModel view of a hard-solver result."""
    return FactorModel([gain.matrix()], np.asarray(rho, dtype=float)[:, None])


# ---------------------------------------------------------------------------
# Factor file variant
# ---------------------------------------------------------------------------

def write_toeplitz_factors(gain: ToeplitzGain, rho: np.ndarray, path) -> None:
    """Write ``FACTORS-TOEPLITZ N K`` then the first row g and the profile rho."""
    with open(path, "w") as f:
        f.write(f"FACTORS-TOEPLITZ {gain.size} {len(rho)}\n")
        f.write(" ".join(f"{v:.17g}" for v in gain.first_row) + "\n")
        f.write(" ".join(f"{v:.17g}" for v in rho) + "\n")


def read_toeplitz_factors(path):
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 3 or header[0] != "FACTORS-TOEPLITZ":
            raise ValueError("expected 'FACTORS-TOEPLITZ N K' header")
        n, k = int(header[1]), int(header[2])
        g = np.array(f.readline().split(), dtype=float)
        rho = np.array(f.readline().split(), dtype=float)
    if g.size != n or rho.size != k:
        raise ValueError("factor lines have wrong length")
    return ToeplitzGain(g), rho
