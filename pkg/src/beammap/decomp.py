"""General rank-R matrix-vector tensor decomposition with Toeplitz regularization.

Fits the masked polar tensor as a sum of R outer products G_r o rho_r by
alternating minimization: the beam-space matrices {G_r} are updated by
projected gradient descent on the smooth objective (masked fit + diagonal-
shift penalty + Frobenius penalty, projected onto entries >= epsilon), and
the attenuation matrix follows from a constrained quadratic program over the
monotone simplex. Setting all diagonal-shift weights to zero gives the plain
unstructured decomposition used as a baseline.
"""

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ._qp import ConvergenceError, fill_flat_profile, monotone_simplex_constraints, solve_qp
from .polar import MaskedTensor3, mode3_unfold, unvec, vec

__all__ = [
    "FactorModel",
    "SolverOptions",
    "ConvergenceReport",
    "ConvergenceError",
    "toeplitz_penalty",
    "objective",
    "gain_objective_and_grad",
    "update_gains",
    "update_attenuation",
    "solve_general",
    "reconstruct",
    "resolve_lambdas",
    "write_factors",
    "read_factors",
    "write_convergence_csv",
]


@dataclass
class FactorModel:
    """Rank-R factors: beam-space gain matrices and attenuation profiles.

    ``gains`` holds R matrices of shape (I, J); ``attenuations`` is (K, R)
    with column r the distance profile of component r.
    """

    gains: List[np.ndarray]
    attenuations: np.ndarray

    def __post_init__(self):
        self.gains = [np.asarray(g, dtype=float) for g in self.gains]
        self.attenuations = np.asarray(self.attenuations, dtype=float)
        if self.attenuations.ndim != 2 or self.attenuations.shape[1] != len(self.gains):
            raise ValueError("attenuations must be (K, R) with R = len(gains)")
        shapes = {g.shape for g in self.gains}
        if len(shapes) > 1:
            raise ValueError("all gain matrices must share a shape")

    @property
    def rank(self) -> int:
        return len(self.gains)

    def unfolded_gains(self) -> np.ndarray:
        """(I*J, R) matrix whose columns are vec(G_r)."""
        return np.column_stack([vec(g) for g in self.gains])


@dataclass
class SolverOptions:
    """Tolerances and iteration caps for the alternating solvers.

    ``lambda_toeplitz`` and ``lambda_frob`` default to data-scaled values:
    lambda_r = ||W*X||_F^2 / (I*J) and lambda = 1e-3 * lambda_r.
    """

    lambda_toeplitz: Optional[float] = None
    lambda_frob: Optional[float] = None
    max_outer_iters: int = 60
    max_inner_iters_g: int = 150
    qp_tolerance: float = 1e-8
    outer_rel_tolerance: float = 1e-10
    inner_rel_tolerance: float = 1e-8
    epsilon_positive: float = 1e-9
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("qp_tolerance", "outer_rel_tolerance", "inner_rel_tolerance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class ConvergenceReport:
    """Per-iteration objective values plus bookkeeping from one solve."""

    objectives: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_iterations: int = 0
    converged: bool = False
    wall_time: float = 0.0
    undetermined_lags: List[int] = field(default_factory=list)
    notes: str = ""


def resolve_lambdas(x_u: np.ndarray, w_u: np.ndarray, opts: SolverOptions):
    """Concrete (lambda_toeplitz, lambda_frob) for a given unfolded tensor."""
    lam_t = opts.lambda_toeplitz
    if lam_t is None:
        lam_t = float(((w_u * x_u) ** 2).sum()) / x_u.shape[0]
    lam_f = opts.lambda_frob
    if lam_f is None:
        lam_f = 1e-3 * lam_t
    return float(lam_t), float(lam_f)


# ---------------------------------------------------------------------------
# Objective pieces
# ---------------------------------------------------------------------------

def toeplitz_penalty(g: np.ndarray) -> float:
    """Sum of squared differences between diagonal neighbors of a matrix."""
    g = np.asarray(g, dtype=float)
    d = g[:-1, :-1] - g[1:, 1:]
    return float((d * d).sum())


def _toeplitz_grad(g: np.ndarray) -> np.ndarray:
    d = g[:-1, :-1] - g[1:, 1:]
    out = np.zeros_like(g)
    out[:-1, :-1] += 2.0 * d
    out[1:, 1:] -= 2.0 * d
    return out


def _fit_value(x_u, w_u, gains_u, varrho) -> float:
    r = w_u * (x_u - gains_u @ varrho.T)
    return float((r * r).sum())


def objective(x_u: np.ndarray, w_u: np.ndarray, model: FactorModel, opts: SolverOptions) -> float:
    """Masked fit plus diagonal-shift and Frobenius penalties."""
    x_u = np.asarray(x_u, dtype=float)
    w_u = np.asarray(w_u, dtype=float)
    gains_u = model.unfolded_gains()
    if x_u.shape != w_u.shape or gains_u.shape[0] != x_u.shape[0] \
            or model.attenuations.shape[0] != x_u.shape[1]:
        raise ValueError("inconsistent shapes between tensor, mask and model")
    lam_t, lam_f = resolve_lambdas(x_u, w_u, opts)
    val = _fit_value(x_u, w_u, gains_u, model.attenuations)
    val += lam_t * sum(toeplitz_penalty(g) for g in model.gains)
    val += lam_f * float((gains_u * gains_u).sum())
    return val


def gain_objective_and_grad(x_u, w_u, varrho, gains, lam_t: float, lam_f: float):
    """Value and gradient of the smooth objective in the gain matrices.

    ``gains`` is a list of (I, J) matrices; the returned gradient is a list of
    matching shape. Unobserved cells contribute nothing.
    """
    shape = gains[0].shape
    gains_u = np.column_stack([vec(g) for g in gains])
    resid = w_u * (gains_u @ varrho.T - x_u)       # mask is binary: w*w = w
    val = float((resid * resid).sum())
    grad_u = 2.0 * resid @ varrho
    grads = []
    for r, g in enumerate(gains):
        gr = unvec(grad_u[:, r], shape[0], shape[1]).copy()
        gr += lam_t * _toeplitz_grad(g)
        gr += 2.0 * lam_f * g
        grads.append(gr)
        val += lam_t * toeplitz_penalty(g) + lam_f * float((g * g).sum())
    return val, grads


# ---------------------------------------------------------------------------
# Block updates
# ---------------------------------------------------------------------------

def update_gains(x_u, w_u, varrho, gains_init, opts: SolverOptions):
    """Projected gradient descent on the gain matrices with rho fixed.

    Entries are projected onto [epsilon_positive, inf) after every step; the
    objective never increases. Stops on the iteration cap or when the relative
    decrease falls below ``inner_rel_tolerance``.
    """
    if not np.all(np.isfinite(x_u)) or not np.all(np.isfinite(varrho)):
        raise ValueError("non-finite inputs to update_gains")
    lam_t, lam_f = resolve_lambdas(x_u, w_u, opts)
    eps = opts.epsilon_positive
    gains = [np.maximum(np.asarray(g, dtype=float), eps) for g in gains_init]

    # Lipschitz bound: masked fit block + shift penalty (||D||^2 <= 4) + Frobenius
    lip = 2.0 * float(np.linalg.eigvalsh(varrho.T @ varrho)[-1]) + 8.0 * lam_t + 2.0 * lam_f
    step = 1.0 / max(lip, 1e-300)

    val, grads = gain_objective_and_grad(x_u, w_u, varrho, gains, lam_t, lam_f)
    for _ in range(opts.max_inner_iters_g):
        t = step
        for _ in range(30):  # backtracking safety; the 1/L step already descends
            cand = [np.maximum(g - t * gr, eps) for g, gr in zip(gains, grads)]
            cand_val, cand_grads = gain_objective_and_grad(x_u, w_u, varrho, cand, lam_t, lam_f)
            if cand_val <= val:
                break
            t *= 0.5
        else:
            break
        improvement = val - cand_val
        gains, grads, val = cand, cand_grads, cand_val
        if improvement <= opts.inner_rel_tolerance * max(val, 1e-300):
            break
    return gains


def update_attenuation(x_u, w_u, gains, opts: SolverOptions):
    """Solve the attenuation subproblem exactly over the monotone simplex.

    Minimizes the masked fit in rho with the gains fixed, subject to
    nonnegativity, total sum one, nonincreasing per-bin totals and a
    nonincreasing first component. Distance bins without observations are
    filled deterministically along the optimal face (see fill_flat_profile).
    """
    gains_u = np.column_stack([vec(np.asarray(g, dtype=float)) for g in gains])
    if np.any(gains_u < 0):
        raise ValueError("gain entries must be nonnegative")
    K = x_u.shape[1]
    R = gains_u.shape[1]
    wx = w_u * x_u

    # fit = const + sum_k [ u_k^T (G^T diag(w_k) G) u_k - 2 (G^T (w*x)_k)^T u_k ]
    P = np.zeros((K * R, K * R))
    q = np.zeros(K * R)
    for k in range(K):
        gw = gains_u * w_u[:, k:k + 1]
        P[k * R:(k + 1) * R, k * R:(k + 1) * R] = 2.0 * (gains_u.T @ gw)
        q[k * R:(k + 1) * R] = -2.0 * (gains_u.T @ wx[:, k])
    G, h, A, b = monotone_simplex_constraints(K, R)
    x, _ = solve_qp(P, q, G, h, A, b, opts.qp_tolerance)
    rho = x.reshape(K, R)
    flat = w_u.sum(axis=0) == 0
    rho = fill_flat_profile(rho, flat, opts.qp_tolerance)
    return rho


# ---------------------------------------------------------------------------
# Alternating solver
# ---------------------------------------------------------------------------

def default_gain_init(x_u, w_u, rank: int, shape, opts: SolverOptions,
                      gain_prior: Optional[np.ndarray] = None):
    """Initial gain matrices: jittered prior split evenly across components.

    ``gain_prior`` is typically the ideal array gain matrix of the scene; when
    unavailable a flat matrix matched to the observed magnitude is used.
    """
    rng = np.random.default_rng(opts.rng_seed)
    if gain_prior is None:
        nobs = max(w_u.sum(), 1.0)
        mean_obs = float((w_u * np.abs(x_u)).sum()) / nobs
        gain_prior = np.full(shape, mean_obs * x_u.shape[1])
    gains = []
    for _ in range(rank):
        jitter = rng.uniform(0.9, 1.1, shape)
        gains.append(np.maximum(gain_prior * jitter / rank, opts.epsilon_positive))
    return gains


def default_attenuation_init(n_bins: int, rank: int) -> np.ndarray:
    """Geometric-decay profiles, jointly normalized to total mass one."""
    prof = 0.9 ** np.arange(1, n_bins + 1)
    rho = np.tile(prof[:, None], (1, rank))
    return rho / rho.sum()


def solve_general(x: MaskedTensor3, rank: int, opts: Optional[SolverOptions] = None,
                  gain_prior: Optional[np.ndarray] = None):
    """Alternating minimization for the rank-R structured decomposition.

    Returns (FactorModel, ConvergenceReport). The recorded objective sequence
    is nonincreasing; block updates that fail to improve the objective (at
    interior-point noise level) are discarded.
    """
    opts = opts or SolverOptions()
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if x.n_observed == 0:
        raise ValueError("empty observation mask")
    I, J, K = x.shape
    x_u, w_u = mode3_unfold(x)
    lam_t, lam_f = resolve_lambdas(x_u, w_u, opts)
    eff = SolverOptions(**{**opts.__dict__, "lambda_toeplitz": lam_t, "lambda_frob": lam_f})

    t0 = time.perf_counter()
    gains = default_gain_init(x_u, w_u, rank, (I, J), eff, gain_prior)
    varrho = default_attenuation_init(K, rank)
    cur = objective(x_u, w_u, FactorModel(gains, varrho), eff)
    objs = [cur]
    converged = False
    for _ in range(eff.max_outer_iters):
        new_gains = update_gains(x_u, w_u, varrho, gains, eff)
        cand = objective(x_u, w_u, FactorModel(new_gains, varrho), eff)
        if cand <= cur:
            gains, cur = new_gains, cand
        new_rho = update_attenuation(x_u, w_u, gains, eff)
        cand = objective(x_u, w_u, FactorModel(gains, new_rho), eff)
        if cand <= cur:
            varrho, cur = new_rho, cand
        objs.append(cur)
        rel = (objs[-2] - objs[-1]) / max(objs[-2], 1e-300)
        if rel < eff.outer_rel_tolerance:
            converged = True
            break
    report = ConvergenceReport(np.array(objs), len(objs) - 1, converged,
                               time.perf_counter() - t0)
    return FactorModel(gains, varrho), report


def reconstruct(model: FactorModel) -> np.ndarray:
    """Dense tensor sum_r G_r o rho_r with entries sum_r G_r[i,j] rho_r[k]."""
    out = None
    for r, g in enumerate(model.gains):
        term = np.einsum("ij,k->ijk", g, model.attenuations[:, r])
        out = term if out is None else out + term
    return out


# ---------------------------------------------------------------------------
# Factor file interface
# ---------------------------------------------------------------------------

def write_factors(model: FactorModel, n_distance_bins: int, path) -> None:
    """Write ``FACTORS R I J K`` then each vec(G_r) line and each rho_r line."""
    I, J = model.gains[0].shape
    K = model.attenuations.shape[0]
    if K != n_distance_bins:
        raise ValueError("n_distance_bins does not match the model")
    with open(path, "w") as f:
        f.write(f"FACTORS {model.rank} {I} {J} {K}\n")
        for g in model.gains:
            f.write(" ".join(f"{v:.17g}" for v in vec(g)) + "\n")
        for r in range(model.rank):
            f.write(" ".join(f"{v:.17g}" for v in model.attenuations[:, r]) + "\n")


def read_factors(path) -> FactorModel:
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 5 or header[0] != "FACTORS":
            raise ValueError("expected 'FACTORS R I J K' header")
        R, I, J, K = (int(v) for v in header[1:])
        gains = []
        for _ in range(R):
            row = np.array(f.readline().split(), dtype=float)
            if row.size != I * J:
                raise ValueError("gain line has wrong length")
            gains.append(unvec(row, I, J))
        cols = []
        for _ in range(R):
            row = np.array(f.readline().split(), dtype=float)
            if row.size != K:
                raise ValueError("attenuation line has wrong length")
            cols.append(row)
    return FactorModel(gains, np.column_stack(cols))


def write_convergence_csv(report: ConvergenceReport, path) -> None:
    with open(path, "w") as f:
        f.write("iter,objective\n")
        for i, v in enumerate(report.objectives):
            f.write(f"{i},{v:.17g}\n")
