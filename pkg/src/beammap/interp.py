"""Scattered-data interpolation: thin-plate splines and k-nearest-neighbors.

Both serve as per-beam reconstruction baselines on raw Cartesian
measurements; the thin-plate spline additionally maps reconstructed polar
tensors back to the Cartesian beam map. Fits that share one set of centers
across many value columns (one per beam) reuse a single factorization.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .polar import PolarGrid, scatter_to_cartesian
from .scene import BeamMapCartesian, Scene, cell_centers

__all__ = [
    "TpsModel",
    "KnnModel",
    "tps_fit",
    "tps_fit_many",
    "tps_eval",
    "tps_eval_many",
    "knn_predict",
    "knn_predict_many",
    "back_map",
    "write_beammap",
    "read_beammap",
]


# ---------------------------------------------------------------------------
# Thin-plate splines
# ---------------------------------------------------------------------------

@dataclass
class TpsModel:
    """Thin-plate spline f(q) = a0 + a1 qx + a2 qy + sum_m w_m U(|q - p_m|),
    with kernel U(r) = r^2 log r (U(0) = 0)."""

    centers: np.ndarray
    weights: np.ndarray  # (n_centers + 3,): kernel weights then [a0, a1, a2]
    smoothing: float = 0.0

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.size != self.centers.shape[0] + 3:
            raise ValueError("weights must have one entry per center plus 3 affine terms")


def _tps_kernel(sq_dist: np.ndarray) -> np.ndarray:
    """U(r) = r^2 log r evaluated from squared distances; zero at r = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * sq_dist * np.log(sq_dist)
    return np.where(sq_dist > 0, out, 0.0)


def _dedupe(points: np.ndarray, values: np.ndarray):
    """Average value columns over coincident points."""
    uniq, inv = np.unique(points, axis=0, return_inverse=True)
    if uniq.shape[0] == points.shape[0]:
        return points, values
    sums = np.zeros((uniq.shape[0], values.shape[1]))
    np.add.at(sums, inv, values)
    counts = np.bincount(inv, minlength=uniq.shape[0]).astype(float)
    return uniq, sums / counts[:, None]


def tps_fit_many(points, values, smoothing: Optional[float] = None) -> List[TpsModel]:
    """Fit one spline per value column, sharing centers and factorization.

    ``values`` is (n_points,) or (n_points, n_columns). Coincident points are
    averaged first; at least three non-collinear points are required.
    ``smoothing`` is added to the kernel diagonal; None picks a conditioning
    default of 1e-6 times the mean absolute kernel value, 0 interpolates
    exactly.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    vals = np.asarray(values, dtype=float)
    single = vals.ndim == 1
    vals = vals.reshape(pts.shape[0], -1)
    pts, vals = _dedupe(pts, vals)
    m = pts.shape[0]
    if m < 3:
        raise ValueError("need at least 3 distinct points")
    centered = pts - pts.mean(axis=0)
    if np.linalg.matrix_rank(centered, tol=1e-9 * max(1.0, np.abs(centered).max())) < 2:
        raise ValueError("points are collinear")

    diff = pts[:, None, :] - pts[None, :, :]
    kern = _tps_kernel((diff * diff).sum(-1))
    if smoothing is None:
        smoothing = 1e-6 * float(np.abs(kern).mean())
    system = np.zeros((m + 3, m + 3))
    system[:m, :m] = kern + smoothing * np.eye(m)
    P = np.column_stack([np.ones(m), pts])
    system[:m, m:] = P
    system[m:, :m] = P.T
    rhs = np.vstack([vals, np.zeros((3, vals.shape[1]))])
    coeff = np.linalg.solve(system, rhs)
    models = [TpsModel(pts, coeff[:, c], smoothing) for c in range(vals.shape[1])]
    return models[0] if single else models


def tps_fit(points, values, smoothing: Optional[float] = None) -> TpsModel:
    """Fit a thin-plate spline to scattered values (see tps_fit_many)."""
    return tps_fit_many(points, np.asarray(values, dtype=float).ravel(), smoothing)


def _tps_eval_matrix(centers: np.ndarray, queries: np.ndarray) -> np.ndarray:
    q = np.asarray(queries, dtype=float).reshape(-1, 2)
    diff = q[:, None, :] - centers[None, :, :]
    kern = _tps_kernel((diff * diff).sum(-1))
    return np.column_stack([kern, np.ones(q.shape[0]), q])


def tps_eval(model: TpsModel, queries) -> np.ndarray:
    """Evaluate the spline at query points."""
    return _tps_eval_matrix(model.centers, queries) @ model.weights


def tps_eval_many(models: Sequence[TpsModel], queries) -> np.ndarray:
    """Evaluate splines sharing one center set; returns (n_queries, n_models)."""
    centers = models[0].centers
    for m in models[1:]:
        if m.centers is not centers and not np.array_equal(m.centers, centers):
            raise ValueError("models must share centers")
    basis = _tps_eval_matrix(centers, queries)
    return basis @ np.column_stack([m.weights for m in models])


# ---------------------------------------------------------------------------
# K-nearest-neighbors
# ---------------------------------------------------------------------------

@dataclass
class KnnModel:
    """Stored samples for unweighted k-nearest-neighbor prediction."""

    points: np.ndarray
    values: np.ndarray
    k: int = 3

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=float)
        if self.points.shape[0] == 0:
            raise ValueError("model must hold at least one point")
        if not (1 <= self.k <= self.points.shape[0]):
            raise ValueError("k must be between 1 and the number of points")


def knn_predict_many(model: KnnModel, queries) -> np.ndarray:
    """Unweighted mean of the k nearest stored values per query point.

    Ties at the k-th distance break toward lower insertion index (stable
    order). ``model.values`` may be (n,) or (n, n_columns).
    """
    q = np.asarray(queries, dtype=float).reshape(-1, 2)
    diff = q[:, None, :] - model.points[None, :, :]
    d2 = (diff * diff).sum(-1)
    order = np.argsort(d2, axis=1, kind="stable")[:, :model.k]
    vals = model.values.reshape(model.points.shape[0], -1)
    picked = vals[order]  # (n_queries, k, n_columns)
    out = picked.mean(axis=1)
    return out[:, 0] if model.values.ndim == 1 else out


def knn_predict(model: KnnModel, query) -> float:
    """Prediction at a single query point."""
    out = knn_predict_many(model, np.asarray(query, dtype=float).reshape(1, 2))
    return float(out[0]) if np.ndim(out) == 1 else out[0]


# ---------------------------------------------------------------------------
# Polar-to-Cartesian back-mapping
# ---------------------------------------------------------------------------

def back_map(parts: Sequence[Tuple[np.ndarray, PolarGrid]], scene: Scene,
             min_source_distance: float = 0.0,
             smoothing: Optional[float] = None):
    """Interpolate reconstructed polar tensors onto the Cartesian cell grid.

    Each part is a (dense I x J x K tensor, grid) pair; per beam and per part
    a thin-plate spline is fitted to the scattered bin-center values and
    evaluated at every cell center. Multi-part maps are summed and negative
    predictions are clipped to zero. Beams whose scattered support is too
    small for a spline fall back to k-nearest-neighbor interpolation and are
    reported in the returned flag list as (part index, beam index) pairs.

    Returns (BeamMapCartesian, flags).
    """
    n = int(round(scene.region_size))
    queries = cell_centers(scene.region_size)
    total = np.zeros((queries.shape[0], scene.n_beams))
    flags = []
    for part_idx, (x_hat, grid) in enumerate(parts):
        scattered = scatter_to_cartesian(x_hat, grid, scene.region_size,
                                         min_source_distance)
        pts = scattered[0][0]
        vals = np.column_stack([v for _, v in scattered])
        if pts.shape[0] == 0:
            flags.extend((part_idx, i) for i in range(scene.n_beams))
            continue
        try:
            models = tps_fit_many(pts, vals, smoothing)
            pred = tps_eval_many(models, queries)
        except ValueError:
            k = min(3, pts.shape[0])
            pred = knn_predict_many(KnnModel(pts, vals, k), queries)
            flags.extend((part_idx, i) for i in range(scene.n_beams))
        total += pred
    total = np.maximum(total, 0.0)
    return BeamMapCartesian(total.reshape(n, n, scene.n_beams)), flags


# ---------------------------------------------------------------------------
# Beam map file interface
# ---------------------------------------------------------------------------

def write_beammap(bm: BeamMapCartesian, path) -> None:
    """Write ``BEAMMAP L L I`` then one line per beam slice in vec layout."""
    L1, L2, I = bm.values.shape
    with open(path, "w") as f:
        f.write(f"BEAMMAP {L1} {L2} {I}\n")
        for i in range(I):
            f.write(" ".join(f"{v:.17g}" for v in bm.values[:, :, i].ravel(order="F")) + "\n")


def read_beammap(path) -> BeamMapCartesian:
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 4 or header[0] != "BEAMMAP":
            raise ValueError("expected 'BEAMMAP L L I' header")
        L1, L2, I = (int(v) for v in header[1:])
        body = np.array(f.read().split(), dtype=float)
    if body.size != L1 * L2 * I:
        raise ValueError("beam map body has wrong length")
    vals = body.reshape(I, L1 * L2).T.reshape(L1, L2, I, order="F")
    return BeamMapCartesian(vals)
