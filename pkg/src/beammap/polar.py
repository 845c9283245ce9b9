"""Polar-domain tensor construction from Cartesian measurements.

Measurements are binned by (beam index, spatial-angle bin, distance bin)
around a source point. Angle bins are taken as the nearest grid angle in the
*sine* metric, which keeps the beam-space gain matrix Toeplitz when the grid
is sin-uniform; distance bins are uniform with step ``distance_step`` and bin
centers ``d_k = (k-1) * distance_step``.

Mirror sources: a grid with ``mirror_x`` set reflects positions across the
vertical plane ``x = mirror_x`` before the polar transform, so the mirror BS
sees the mirrored region under the same (0, pi/2) angular sector as the real
BS. The inverse (scatter) applies the same reflection on the way out.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .scene import Scene, MirrorScene

__all__ = [
    "PolarGrid",
    "MaskedTensor3",
    "OutOfCoverageError",
    "to_polar",
    "bin_index",
    "aggregate",
    "augment_reflection",
    "mode3_unfold",
    "mode3_fold",
    "vec",
    "unvec",
    "scatter_to_cartesian",
    "grid_for_source",
    "restrict_min_distance",
    "write_tensor",
    "read_tensor",
]


class OutOfCoverageError(ValueError):
    """A polar coordinate falls outside the grid coverage."""


@dataclass
class PolarGrid:
    """Polar binning grid anchored at a source point.

    ``angle_values`` are the grid angles (strictly increasing, at least two);
    distance bin centers are ``(k-1) * distance_step`` for k = 1..K. When
    ``mirror_x`` is set the grid operates in mirrored coordinates (see module
    docstring).
    """

    angle_values: np.ndarray
    distance_step: float
    n_distance_bins: int
    source: np.ndarray
    mirror_x: Optional[float] = None

    def __post_init__(self):
        self.angle_values = np.asarray(self.angle_values, dtype=float)
        self.source = np.asarray(self.source, dtype=float)
        if self.angle_values.ndim != 1 or self.angle_values.size < 2:
            raise ValueError("angle_values must contain at least two angles")
        if np.any(np.diff(self.angle_values) <= 0):
            raise ValueError("angle_values must be strictly increasing")
        if self.distance_step <= 0 or self.n_distance_bins < 1:
            raise ValueError("invalid distance grid")

    @property
    def n_angle_bins(self) -> int:
        return self.angle_values.size

    @property
    def distances(self) -> np.ndarray:
        return np.arange(self.n_distance_bins) * self.distance_step

    def polar_coordinates(self, points: np.ndarray):
        """(distance, angle) arrays for Cartesian points, honoring mirror_x."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        src = self.source
        if self.mirror_x is not None:
            pts = pts.copy()
            pts[:, 0] = 2.0 * self.mirror_x - pts[:, 0]
            src = np.array([2.0 * self.mirror_x - src[0], src[1]])
        dx = pts[:, 0] - src[0]
        dy = pts[:, 1] - src[1]
        d = np.hypot(dx, dy)
        if np.any(d == 0.0):
            raise ValueError("point coincides with the source")
        return d, np.arctan(dy / dx)


def to_polar(z, source):
    """Distance and polar angle of a point relative to a source.

    The angle is ``arctan((y - y0) / (x - x0))``, in (-pi/2, pi/2) for the
    geometries used here. Raises ValueError when ``z`` equals ``source``.
    """
    z = np.asarray(z, dtype=float)
    source = np.asarray(source, dtype=float)
    dx, dy = z[0] - source[0], z[1] - source[1]
    d = float(np.hypot(dx, dy))
    if d == 0.0:
        raise ValueError("point coincides with the source")
    return d, float(np.arctan(dy / dx))


def grid_for_source(scene: Scene, source, n_distance_bins: int,
                    mirror_x: Optional[float] = None) -> PolarGrid:
    """Grid whose distance bins cover the farthest region corner from the source.

    The step is ``ceil(max distance) / (K - 1)`` so that the last bin center
    reaches past every point of the region.
    """
    L = scene.region_size
    corners = np.array([[0.0, 0.0], [0.0, L], [L, 0.0], [L, L]])
    dmax = float(np.linalg.norm(corners - np.asarray(source, float), axis=1).max())
    step = float(np.ceil(dmax)) / (n_distance_bins - 1)
    return PolarGrid(scene.beam_angles.copy(), step, n_distance_bins,
                     np.asarray(source, float), mirror_x)


def _round_half_down(x):
    """Round to nearest integer, exact halves toward the lower integer."""
    return np.ceil(np.asarray(x) - 0.5).astype(int)


def _angle_bins(grid: PolarGrid, angles: np.ndarray):
    """1-based angle bin indices by nearest grid sine; boolean coverage mask."""
    s = np.sin(np.asarray(angles, dtype=float))
    gs = np.sin(grid.angle_values)
    lo = gs[0] - (gs[1] - gs[0]) / 2.0
    hi = gs[-1] + (gs[-1] - gs[-2]) / 2.0
    ok = (s >= lo) & (s <= hi)
    mid = (gs[:-1] + gs[1:]) / 2.0
    # side="left": a sine exactly on a midpoint ties to the lower bin
    j = np.searchsorted(mid, s, side="left") + 1
    return j, ok


def _distance_bins(grid: PolarGrid, d: np.ndarray):
    k = 1 + _round_half_down(np.asarray(d, dtype=float) / grid.distance_step)
    ok = (k >= 1) & (k <= grid.n_distance_bins)
    return k, ok


def bin_index(distance: float, angle: float, grid: PolarGrid):
    """(j, k) 1-based bin indices for one polar coordinate pair.

    Raises OutOfCoverageError when the distance exceeds the grid or the angle
    lies beyond half a bin outside [phi_1, phi_J].
    """
    k, dok = _distance_bins(grid, np.array([distance]))
    j, aok = _angle_bins(grid, np.array([angle]))
    if not dok[0]:
        raise OutOfCoverageError(f"distance {distance} outside grid coverage")
    if not aok[0]:
        raise OutOfCoverageError(f"angle {angle} outside grid coverage")
    return int(j[0]), int(k[0])


@dataclass
class MaskedTensor3:
    """Observation tensor with mask and per-bin population counts.

    ``values[i, j, k]`` is the mean RSS of beam i+1 in polar bin (j+1, k+1);
    ``mask`` is 1 exactly where ``counts >= 1``; unobserved cells hold 0.
    """

    values: np.ndarray
    mask: np.ndarray
    counts: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=float)
        self.counts = np.asarray(self.counts, dtype=int)
        if not (self.values.shape == self.mask.shape == self.counts.shape):
            raise ValueError("values, mask and counts must share a shape")
        if self.values.ndim != 3:
            raise ValueError("expected a 3-D tensor")
        if np.any((self.counts >= 1) != (self.mask > 0)):
            raise ValueError("mask must indicate exactly the populated bins")
        if np.any(self.values[self.mask == 0] != 0.0):
            raise ValueError("unobserved cells must hold zero")
        if np.any(self.values[self.mask > 0] < 0.0):
            raise ValueError("observed values must be nonnegative")

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())


def aggregate(measurements, grid: PolarGrid, path_id: int) -> MaskedTensor3:
    """Bin measurements of one path into the polar grid, averaging within bins.

    Out-of-coverage records are dropped; their number is reported on the
    returned tensor as ``n_dropped``. The result does not depend on the order
    of the records.
    """
    ms = measurements.for_path(path_id)
    I = grid.angle_values.size  # beams share the angle grid throughout
    J, K = grid.n_angle_bins, grid.n_distance_bins
    sums = np.zeros((I, J, K))
    counts = np.zeros((I, J, K), dtype=int)
    if len(ms) == 0:
        return MaskedTensor3(sums, np.zeros_like(sums), counts)

    d, ang = grid.polar_coordinates(ms.locations)
    k, dok = _distance_bins(grid, d)
    j, aok = _angle_bins(grid, ang)
    keep = dok & aok
    i0 = ms.beam_index[keep] - 1
    if np.any(i0 < 0) or np.any(i0 >= I):
        raise ValueError("beam_index out of range for this grid")
    j0 = j[keep] - 1
    k0 = k[keep] - 1
    np.add.at(sums, (i0, j0, k0), ms.rss[keep])
    np.add.at(counts, (i0, j0, k0), 1)
    mask = (counts >= 1).astype(float)
    values = np.divide(sums, counts, out=np.zeros_like(sums), where=counts >= 1)
    return MaskedTensor3(values, mask, counts, n_dropped=int((~keep).sum()))


def augment_reflection(x0: MaskedTensor3, x1: MaskedTensor3) -> MaskedTensor3:
    """Concatenate direct and reflected tensors along the distance mode."""
    if x0.shape[:2] != x1.shape[:2]:
        raise ValueError("tensors must agree in beam and angle dimensions")
    return MaskedTensor3(
        np.concatenate([x0.values, x1.values], axis=2),
        np.concatenate([x0.mask, x1.mask], axis=2),
        np.concatenate([x0.counts, x1.counts], axis=2),
        n_dropped=x0.n_dropped + x1.n_dropped,
    )


def restrict_min_distance(t: MaskedTensor3, grid: PolarGrid, min_distance: float) -> MaskedTensor3:
    """Copy of the tensor with bins closer than ``min_distance`` masked out.

    Used to keep the path-loss singularity at the source out of the fit; the
    same cutoff is applied to Cartesian evaluation masks.
    """
    drop = grid.distances < min_distance
    values = t.values.copy()
    mask = t.mask.copy()
    counts = t.counts.copy()
    values[:, :, drop] = 0.0
    mask[:, :, drop] = 0.0
    counts[:, :, drop] = 0
    return MaskedTensor3(values, mask, counts, n_dropped=t.n_dropped)


# ---------------------------------------------------------------------------
# Unfolding
# ---------------------------------------------------------------------------

def vec(m: np.ndarray) -> np.ndarray:
    """Stack the columns of a matrix into one vector (column-major flatten)."""
    return np.asarray(m).ravel(order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.asarray(v).reshape(rows, cols, order="F")


def mode3_unfold(t: MaskedTensor3):
    """Mode-3 unfolding: column k of the (I*J, K) result is vec of slice k."""
    I, J, K = t.shape
    data = t.values.reshape(I * J, K, order="F")
    mask = t.mask.reshape(I * J, K, order="F")
    return data, mask


def mode3_fold(mat: np.ndarray, n_beams: int, n_angles: int) -> np.ndarray:
    """Inverse of mode3_unfold for a dense (I*J, K) matrix."""
    return np.asarray(mat).reshape(n_beams, n_angles, -1, order="F")


# ---------------------------------------------------------------------------
# Inverse transform
# ---------------------------------------------------------------------------

def scatter_to_cartesian(x_hat: np.ndarray, grid: PolarGrid, region_size: float,
                         min_source_distance: float = 0.0):
    """Scatter a dense polar tensor to per-beam Cartesian sample points.

    Every bin center (phi_j, d_k) maps to ``source + d_k (cos phi_j, sin
    phi_j)`` (in mirrored coordinates when the grid has ``mirror_x``); points
    outside [0, region_size]^2 are dropped, as are bins closer to the source
    than ``min_source_distance``. Returns a list over beams of (points,
    values) pairs; the point set is shared between beams.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    I, J, K = x_hat.shape
    if J != grid.n_angle_bins or K != grid.n_distance_bins:
        raise ValueError("tensor shape does not match the grid")
    phi = grid.angle_values
    d = grid.distances
    ys = grid.source[1] + d[None, :] * np.sin(phi)[:, None]  # (J, K)
    if grid.mirror_x is None:
        xs = grid.source[0] + d[None, :] * np.cos(phi)[:, None]
    else:
        # walk from the mirrored source, then reflect back across the wall
        xs = grid.source[0] - d[None, :] * np.cos(phi)[:, None]
    keep = (xs >= 0) & (xs <= region_size) & (ys >= 0) & (ys <= region_size) \
        & (d[None, :] >= min_source_distance)
    pts = np.column_stack([xs[keep], ys[keep]])
    out = []
    for i in range(I):
        out.append((pts, x_hat[i][keep]))
    return out


# ---------------------------------------------------------------------------
# Tensor file interface
# ---------------------------------------------------------------------------

def write_tensor(t: MaskedTensor3, path) -> None:
    """Write a tensor as text: header ``TENSOR3 I J K`` then one line per
    distance slice in vec layout; a companion ``<path>.mask`` file holds the
    0/1 mask in the same layout."""
    data, mask = mode3_unfold(t)
    I, J, K = t.shape
    with open(path, "w") as f:
        f.write(f"TENSOR3 {I} {J} {K}\n")
        for k in range(K):
            f.write(" ".join(f"{v:.17g}" for v in data[:, k]) + "\n")
    with open(f"{path}.mask", "w") as f:
        f.write(f"TENSOR3 {I} {J} {K}\n")
        for k in range(K):
            f.write(" ".join(str(int(v)) for v in mask[:, k]) + "\n")


def read_tensor(path) -> MaskedTensor3:
    values, shape = _read_tensor_body(path)
    mask, mshape = _read_tensor_body(f"{path}.mask")
    if shape != mshape:
        raise ValueError("tensor and mask files disagree in shape")
    I, J, K = shape
    vals = mode3_fold(values, I, J)
    msk = mode3_fold(mask, I, J)
    vals = np.where(msk > 0, vals, 0.0)
    return MaskedTensor3(vals, msk, (msk > 0).astype(int))


def _read_tensor_body(path):
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 4 or header[0] != "TENSOR3":
            raise ValueError(f"{path}: expected 'TENSOR3 I J K' header")
        I, J, K = (int(x) for x in header[1:])
        body = np.array(f.read().split(), dtype=float)
    if body.size != I * J * K:
        raise ValueError(f"{path}: expected {I * J * K} values, found {body.size}")
    return body.reshape(K, I * J).T, (I, J, K)
