"""Convex QP engine for the attenuation subproblems.

Wraps the cvxopt interior-point solver behind a small interface that rescales
the problem to unit magnitude, verifies KKT residuals of the *original*
problem, and deterministically resolves flat directions left by unobserved
distance bins (see ``fill_flat_profile``).
"""

import numpy as np
from cvxopt import matrix as _cvxmat
from cvxopt import solvers as _cvxsolvers

__all__ = ["ConvergenceError", "solve_qp", "monotone_simplex_constraints", "fill_flat_profile"]

_CVX_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-11,
    "reltol": 1e-11,
    "feastol": 1e-10,
    "maxiters": 200,
}


class ConvergenceError(RuntimeError):
    """The QP solver failed to reach the requested KKT tolerance."""


def solve_qp(P, q, G, h, A, b, tolerance: float = 1e-8):
    """Minimize (1/2) x^T P x + q^T x subject to G x <= h, A x = b.

    P must be symmetric PSD. The problem is scaled by max(|P|, |q|) before
    solving; the returned solution satisfies stationarity, feasibility and
    complementarity residuals of the scaled problem below ``tolerance``.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n = q.size

    scale = max(np.abs(P).max() if P.size else 0.0, np.abs(q).max() if q.size else 0.0, 1e-300)
    Ps = P / scale
    qs = q / scale

    last_err = None
    for ridge in (1e-12, 1e-10, 1e-8):
        try:
            sol = _cvxsolvers.qp(
                _cvxmat(Ps + ridge * np.eye(n)), _cvxmat(qs),
                _cvxmat(G), _cvxmat(h), _cvxmat(A), _cvxmat(b),
                options=_CVX_OPTIONS,
            )
        except (ValueError, ArithmeticError) as exc:  # singular KKT system
            last_err = exc
            continue
        if sol["status"] not in ("optimal", "unknown"):
            last_err = RuntimeError(f"cvxopt status {sol['status']}")
            continue
        x = np.asarray(sol["x"]).ravel()
        z = np.asarray(sol["z"]).ravel()
        y = np.asarray(sol["y"]).ravel()
        resid = _kkt_residual(Ps, qs, G, h, A, b, x, z, y)
        if resid <= tolerance:
            return x, resid * scale
        last_err = RuntimeError(f"KKT residual {resid:.3e} above tolerance {tolerance:.3e}")
    raise ConvergenceError(f"QP did not converge: {last_err}")


def _kkt_residual(P, q, G, h, A, b, x, z, y):
    stat = P @ x + q + G.T @ z + A.T @ y
    primal_ineq = np.maximum(G @ x - h, 0.0)
    primal_eq = A @ x - b
    comp = z * (G @ x - h)
    return max(np.abs(stat).max(initial=0.0),
               primal_ineq.max(initial=0.0),
               np.abs(primal_eq).max(initial=0.0),
               np.abs(comp).max(initial=0.0))


def monotone_simplex_constraints(n_bins: int, n_components: int):
    """Inequality/equality system for the attenuation polytope.

    Variables are ordered bin-major: x[k * R + r] = rho[k, r]. The polytope is
    {rho >= 0, sum rho = 1, per-bin row sums nonincreasing in k, first
    component nonincreasing in k}.
    """
    K, R = n_bins, n_components
    n = K * R
    rows = [-np.eye(n)]
    rhs = [np.zeros(n)]
    rowsum = np.zeros((K - 1, n))
    for k in range(K - 1):
        rowsum[k, k * R:(k + 1) * R] = -1.0
        rowsum[k, (k + 1) * R:(k + 2) * R] = 1.0
    rows.append(rowsum)
    rhs.append(np.zeros(K - 1))
    first = np.zeros((K - 1, n))
    for k in range(K - 1):
        first[k, k * R] = -1.0
        first[k, (k + 1) * R] = 1.0
    rows.append(first)
    rhs.append(np.zeros(K - 1))
    G = np.vstack(rows)
    h = np.concatenate(rhs)
    A = np.ones((1, n))
    b = np.ones(1)
    return G, h, A, b


def fill_flat_profile(rho: np.ndarray, flat_bins: np.ndarray, tolerance: float = 1e-8):
    """Deterministically redistribute mass over unobserved distance bins.

    Distance bins with no observations contribute nothing to the fit, so any
    feasible values there are optimal; the interior-point solver leaves them
    at a barrier-determined point. This replaces them with the point of the
    optimal face closest (least squares) to a power-law extrapolation of the
    observed profile, which keeps the fit objective exactly unchanged while
    making the reconstruction deterministic and physically plausible.

    ``rho`` is (K, R); ``flat_bins`` a boolean (K,) mask of unobserved bins.
    """
    rho = np.asarray(rho, dtype=float)
    flat_bins = np.asarray(flat_bins, dtype=bool)
    if not flat_bins.any() or flat_bins.all():
        return rho
    K, R = rho.shape
    target = np.empty((K, R))
    for r in range(R):
        target[:, r] = _powerlaw_targets(rho[:, r], ~flat_bins)

    # least-squares projection of the flat coordinates onto the optimal face
    n = K * R
    free = np.repeat(flat_bins, R)
    idx = np.where(free)[0]
    m = idx.size
    G, h, A, b = monotone_simplex_constraints(K, R)
    x_fixed = rho.reshape(n).copy()
    x_fixed[free] = 0.0
    Gf = G[:, free]
    hf = h - G[:, ~free] @ x_fixed[~free]
    Af = A[:, free]
    bf = b - A[:, ~free] @ x_fixed[~free]
    if bf[0] < -1e-12:
        return rho
    P = 2.0 * np.eye(m)
    q = -2.0 * target.reshape(n)[free]
    try:
        xf, _ = solve_qp(P, q, Gf, hf, Af, bf, tolerance)
    except ConvergenceError:
        return rho
    out = rho.reshape(n).copy()
    out[free] = np.maximum(xf, 0.0)
    return out.reshape(K, R)


def _powerlaw_targets(col: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Extrapolate a per-bin profile assuming power-law decay in the bin index.

    Interpolates log(value) linearly against log(bin index) through the
    observed, positive entries; end segments extend with their boundary slope.
    """
    K = col.size
    t = np.log(np.arange(K) + 0.5)
    obs = np.where(observed & (col > 0))[0]
    if obs.size == 0:
        prof = 0.9 ** np.arange(1, K + 1)
        return prof / prof.sum()
    if obs.size == 1:
        return np.full(K, col[obs[0]])
    logv = np.log(col[obs])
    out = np.interp(t, t[obs], logv)
    # np.interp clamps outside the data range; extend with the end slopes
    lo, hi = obs[0], obs[-1]
    slope_lo = (logv[1] - logv[0]) / (t[obs[1]] - t[lo])
    slope_hi = (logv[-1] - logv[-2]) / (t[hi] - t[obs[-2]])
    head = np.arange(K) < lo
    tail = np.arange(K) > hi
    out[head] = logv[0] + slope_lo * (t[head] - t[lo])
    out[tail] = logv[-1] + slope_hi * (t[tail] - t[hi])
    return np.exp(out)
