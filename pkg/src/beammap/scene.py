"""Indoor scene model and sparse RSS measurement synthesis.

The scene is a square region [0, L] x [0, L] with a base station (BS) at the
corner, a uniform linear array (ULA) of ``n_antennas`` elements sweeping DFT
beams over (0, pi/2), a reflecting wall on the far side at ``x = wall_x``, and
optional convex polygonal obstructions. The wall is handled through a mirror
BS: the reflected path from the BS to a point equals the straight path from
the mirror BS to the same point.

Received signal strength (RSS) for beam ``i`` at location ``z`` is

    rss = |alpha|^2 * |w_i^H e(phi)|^2 + noise

where ``e`` is the ULA steering vector, ``w_i = e(theta_i)`` the beamforming
vector, ``phi`` the angle from the source (BS or mirror BS) to ``z``, and
``|alpha|^2 = d^(2 eta)`` a power-law decay with exponent switching between a
clear and a blocked value depending on line-of-sight occlusion. The reflected
path is additionally scaled by ``reflect_gain_factor**2``.

Noise semantics: the per-measurement noise is Gaussian in the dB domain
(standard deviations are quoted in dB), applied as
``10^((10*log10(rss) + N(0, sigma_dB^2)) / 10)``.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Scene",
    "MirrorScene",
    "MeasurementSet",
    "BeamMapCartesian",
    "array_response",
    "beam_gain",
    "gain_matrix",
    "make_sin_uniform_grid",
    "is_blocked",
    "segments_blocked",
    "synthesize_rss",
    "ground_truth_map",
    "sample_measurements",
    "mirror_scene",
    "evaluation_mask",
    "write_measurements_csv",
    "read_measurements_csv",
]

# dB floor used when converting zero power to the log domain
_DB_FLOOR = -300.0


# ---------------------------------------------------------------------------
# Beam geometry
# ---------------------------------------------------------------------------

def array_response(theta: float, n_antennas: int) -> np.ndarray:
    """Steering vector of a half-wavelength ULA.

    Entry ``n`` equals ``exp(-j*pi*n*sin(theta))``; entry 0 is always 1.
    """
    if n_antennas < 1:
        raise ValueError("n_antennas must be >= 1")
    n = np.arange(n_antennas)
    return np.exp(-1j * np.pi * n * np.sin(theta))


def beam_gain(theta_i, phi_j, n_antennas: int):
    """Squared inner product |e(theta_i)^H e(phi_j)|^2 of two steering vectors.

    Equals the squared magnitude of the Dirichlet-kernel sum
    ``sum_n exp(j*pi*n*(sin(theta_i) - sin(phi_j)))`` and lies in
    [0, n_antennas^2]. Accepts scalars or broadcastable arrays.
    """
    u = np.sin(np.asarray(theta_i, dtype=float)) - np.sin(np.asarray(phi_j, dtype=float))
    n = np.arange(n_antennas).reshape((n_antennas,) + (1,) * np.ndim(u))
    s = np.exp(1j * np.pi * n * u).sum(axis=0)
    out = np.abs(s) ** 2
    return out if np.ndim(u) else float(out)


def gain_matrix(beam_angles: np.ndarray, spatial_angles: np.ndarray, n_antennas: int) -> np.ndarray:
    """Beam-space gain matrix G[i, j] = beam_gain(beam_angles[i], spatial_angles[j]).

    For identical sin-uniform angle grids the result is symmetric Toeplitz:
    the sine difference, hence the gain, depends only on ``i - j``.
    """
    th = np.asarray(beam_angles, dtype=float)
    ph = np.asarray(spatial_angles, dtype=float)
    return beam_gain(th[:, None], ph[None, :], n_antennas)


def make_sin_uniform_grid(count: int, theta_min: float, theta_max: float) -> np.ndarray:
    """Angles whose sines are uniformly spaced over [sin(theta_min), sin(theta_max)].

    Requires ``0 < theta_min < theta_max < pi/2`` and at least two angles.
    """
    if count < 2:
        raise ValueError("count must be >= 2")
    if not (0.0 < theta_min < theta_max < np.pi / 2):
        raise ValueError("need 0 < theta_min < theta_max < pi/2")
    s = np.linspace(np.sin(theta_min), np.sin(theta_max), count)
    return np.arcsin(s)


# ---------------------------------------------------------------------------
# Occlusion geometry
# ---------------------------------------------------------------------------

def _normalize_polygon(poly) -> np.ndarray:
    """Validate a convex polygon and return its vertices in CCW order."""
    v = np.asarray(poly, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
        raise ValueError("polygon must be an (n>=3, 2) vertex array")
    x, y = v[:, 0], v[:, 1]
    area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if area2 == 0.0:
        raise ValueError("degenerate (zero-area) polygon")
    return v if area2 > 0 else v[::-1]


def _cross(ox, oy, ax, ay, bx, by):
    """Signed area of the triangle (o, a, b), vectorized."""
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def segments_blocked(source, targets, polygons) -> np.ndarray:
    """Vectorized occlusion test for segments from one source to many targets.

    Returns a boolean array: True where the segment from ``source`` to the
    target intersects any polygon edge or interior (touching an edge or a
    vertex counts as blocked).
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    blocked = np.zeros(targets.shape[0], dtype=bool)
    if not polygons:
        return blocked
    px, py = float(source[0]), float(source[1])
    qx, qy = targets[:, 0], targets[:, 1]
    for poly in polygons:
        v = _normalize_polygon(poly)
        inside = np.ones(targets.shape[0], dtype=bool)
        hit = np.zeros(targets.shape[0], dtype=bool)
        src_inside = True
        for k in range(v.shape[0]):
            ax, ay = v[k]
            bx, by = v[(k + 1) % v.shape[0]]
            d1 = _cross(ax, ay, bx, by, px, py)          # source vs edge AB
            d2 = _cross(ax, ay, bx, by, qx, qy)          # targets vs edge AB
            d3 = _cross(px, py, qx, qy, ax, ay)          # A vs segment PQ
            d4 = _cross(px, py, qx, qy, bx, by)          # B vs segment PQ
            proper = ((d1 > 0) != (d2 > 0)) & (d1 != 0) & (d2 != 0) \
                & ((d3 > 0) != (d4 > 0)) & (d3 != 0) & (d4 != 0)
            # collinear touches: an endpoint of one segment on the other
            on_ab_p = (d1 == 0) & _on_segment(ax, ay, bx, by, px, py)
            on_ab_q = (d2 == 0) & _on_segment(ax, ay, bx, by, qx, qy)
            on_pq_a = (d3 == 0) & _on_segment(px, py, qx, qy, ax, ay)
            on_pq_b = (d4 == 0) & _on_segment(px, py, qx, qy, bx, by)
            hit |= proper | on_ab_p | on_ab_q | on_pq_a | on_pq_b
            inside &= d2 > 0                              # CCW: interior is left of edges
            src_inside = src_inside and (d1 > 0)
        blocked |= hit | inside | src_inside
    return blocked


def _on_segment(ax, ay, bx, by, cx, cy):
    """Whether point c lies within the bounding box of segment ab (use after collinearity)."""
    return (np.minimum(ax, bx) <= cx) & (cx <= np.maximum(ax, bx)) \
        & (np.minimum(ay, by) <= cy) & (cy <= np.maximum(ay, by))


def is_blocked(from_point, to_point, polygons) -> bool:
    """Whether the segment between two points hits any polygon interior or edge.

    Endpoints lying exactly on a polygon edge count as blocked. Degenerate
    (zero-area) polygons raise ValueError.
    """
    return bool(segments_blocked(from_point, np.asarray(to_point, float)[None, :], polygons)[0])


# ---------------------------------------------------------------------------
# Scene types
# ---------------------------------------------------------------------------

@dataclass
class Scene:
    """Geometry and radio parameters of the simulated indoor environment.

    Attributes
    ----------
    bs_position : (2,) array
        BS location; must sit on a corner of the square region.
    wall_x : float
        x-coordinate of the reflecting wall plane (equals ``region_size``).
    region_size : float
        Side length L of the square region [0, L] x [0, L].
    n_antennas : int
        ULA size.
    beam_angles : (I,) array
        Strictly increasing beam directions in (0, pi/2).
    obstructions : list of (n, 2) arrays
        Convex polygons inside the region.
    path_loss_exp_clear, path_loss_exp_blocked : float
        Power-law exponents eta; received power scales as d^(2 eta).
    noise_std_direct, noise_std_reflect : float
        Per-path noise standard deviations in dB.
    reflect_gain_factor : float
        Amplitude factor of the reflected path (power factor is its square).
    """

    bs_position: np.ndarray
    wall_x: float
    region_size: float
    n_antennas: int
    beam_angles: np.ndarray
    obstructions: list = field(default_factory=list)
    path_loss_exp_clear: float = -2.0
    path_loss_exp_blocked: float = -6.0
    noise_std_direct: float = 3.0
    noise_std_reflect: float = 1.0
    reflect_gain_factor: float = 0.5

    def __post_init__(self):
        self.bs_position = np.asarray(self.bs_position, dtype=float)
        self.beam_angles = np.asarray(self.beam_angles, dtype=float)
        L = float(self.region_size)
        if L <= 0:
            raise ValueError("region_size must be positive")
        corners = [(0.0, 0.0), (0.0, L), (L, 0.0), (L, L)]
        if not any(np.allclose(self.bs_position, c) for c in corners):
            raise ValueError("bs_position must lie on a corner of the region")
        if self.wall_x != L:
            raise ValueError("wall_x must equal region_size")
        th = self.beam_angles
        if th.ndim != 1 or th.size < 1:
            raise ValueError("beam_angles must be a nonempty 1-D array")
        if np.any(th <= 0) or np.any(th >= np.pi / 2):
            raise ValueError("beam angles must lie in (0, pi/2)")
        if np.any(np.diff(th) <= 0):
            raise ValueError("beam angles must be strictly increasing")
        self.obstructions = [_normalize_polygon(p) for p in self.obstructions]
        for p in self.obstructions:
            if np.any(p < 0) or np.any(p > L):
                raise ValueError("obstruction polygon outside the region")

    @property
    def n_beams(self) -> int:
        return self.beam_angles.size


@dataclass
class MirrorScene:
    """Mirror BS and mirror obstructions obtained by reflection across the wall."""

    mirror_bs: np.ndarray
    mirror_obstructions: list = field(default_factory=list)

    def __post_init__(self):
        self.mirror_bs = np.asarray(self.mirror_bs, dtype=float)
        self.mirror_obstructions = [_normalize_polygon(p) for p in self.mirror_obstructions]


def mirror_scene(scene: Scene) -> MirrorScene:
    """Reflect the BS and all obstructions across the wall plane x = wall_x."""
    def mirror(p):
        p = np.asarray(p, dtype=float)
        out = p.copy()
        out[..., 0] = 2.0 * scene.wall_x - p[..., 0]
        return out

    return MirrorScene(
        mirror_bs=mirror(scene.bs_position),
        mirror_obstructions=[mirror(p) for p in scene.obstructions],
    )


@dataclass
class MeasurementSet:
    """Sparse RSS records: one row per (beam, UE location, path).

    ``beam_index`` is 1-based (1..I), matching the CSV interface. ``path_id``
    is 0 for the direct path and 1 for the reflected path.
    """

    beam_index: np.ndarray
    locations: np.ndarray
    path_id: np.ndarray
    rss: np.ndarray
    rng_seed: Optional[int] = None
    sampling_ratio: Optional[float] = None

    def __post_init__(self):
        self.beam_index = np.asarray(self.beam_index, dtype=int)
        self.locations = np.asarray(self.locations, dtype=float).reshape(-1, 2)
        self.path_id = np.asarray(self.path_id, dtype=int)
        self.rss = np.asarray(self.rss, dtype=float)
        n = self.beam_index.size
        if not (self.locations.shape[0] == self.path_id.size == self.rss.size == n):
            raise ValueError("measurement record arrays must have equal length")

    def __len__(self) -> int:
        return self.beam_index.size

    def for_path(self, path_id: int) -> "MeasurementSet":
        m = self.path_id == path_id
        return MeasurementSet(self.beam_index[m], self.locations[m], self.path_id[m],
                              self.rss[m], self.rng_seed, self.sampling_ratio)


@dataclass
class BeamMapCartesian:
    """Dense L x L x I beam map on the unit-cell grid, linear power units."""

    values: np.ndarray
    grid_resolution: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise ValueError("values must be a 3-D (L, L, I) array")
        if np.any(self.values < 0):
            raise ValueError("beam map entries must be nonnegative")


def cell_centers(region_size: float, resolution: float = 1.0) -> np.ndarray:
    """Cell-center coordinates of the evaluation grid, shape (n_cells, 2).

    Cells are enumerated x-major: index = ix * n + iy.
    """
    n = int(round(region_size / resolution))
    ax = (np.arange(n) + 0.5) * resolution
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def evaluation_mask(scene: Scene, min_distance: float = 1.0) -> np.ndarray:
    """(L, L) mask of cells kept for error evaluation: at least ``min_distance``
    meters from the BS (the path-loss law diverges at the source)."""
    n = int(round(scene.region_size))
    pts = cell_centers(scene.region_size)
    d = np.linalg.norm(pts - scene.bs_position, axis=1)
    return (d >= min_distance).reshape(n, n)


# ---------------------------------------------------------------------------
# RSS synthesis
# ---------------------------------------------------------------------------

def _apply_db_noise(signal: np.ndarray, sigma_db: float, rng: np.random.Generator) -> np.ndarray:
    """Perturb linear power values by Gaussian noise in the dB domain."""
    noise = rng.normal(0.0, sigma_db, np.shape(signal))
    if sigma_db == 0.0:
        return np.asarray(signal, dtype=float)
    db = 10.0 * np.log10(np.maximum(signal, 10.0 ** (_DB_FLOOR / 10.0)))
    out = 10.0 ** ((db + noise) / 10.0)
    return np.maximum(out, 0.0)


def _clean_rss(scene: Scene, mirror: Optional[MirrorScene], locations: np.ndarray,
               path_id: int) -> np.ndarray:
    """Noiseless RSS for all beams at many locations; shape (n_locations, I)."""
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    if path_id == 0:
        source = scene.bs_position
        polys = scene.obstructions
        gain_scale = 1.0
        offsets = locations - source
    elif path_id == 1:
        if mirror is None:
            return np.zeros((locations.shape[0], scene.n_beams))
        source = mirror.mirror_bs
        polys = list(mirror.mirror_obstructions) + list(scene.obstructions)
        gain_scale = scene.reflect_gain_factor ** 2
        # mirror frame: reflect across the wall so the source faces +x again
        offsets = locations - source
        offsets[:, 0] = -offsets[:, 0]
    else:
        raise ValueError("path_id must be 0 or 1")

    d = np.linalg.norm(offsets, axis=1)
    if np.any(d == 0.0):
        raise ValueError("location coincides with the source")
    blocked = segments_blocked(source, locations, polys)
    eta = np.where(blocked, scene.path_loss_exp_blocked, scene.path_loss_exp_clear)
    power = d ** (2.0 * eta)
    phi = np.arctan2(offsets[:, 1], offsets[:, 0])
    g = gain_matrix(scene.beam_angles, phi, scene.n_antennas)  # (I, n)
    return gain_scale * power[None, :].T * g.T


def synthesize_rss(scene: Scene, mirror: Optional[MirrorScene], location, beam_index: int,
                   path_id: int, rng: Optional[np.random.Generator] = None) -> float:
    """RSS of one beam at one location for one path, with dB-domain noise.

    ``beam_index`` is 1-based. With ``rng=None`` (or zero noise std) the
    noiseless value is returned. The result is clipped at zero.
    """
    if not (1 <= beam_index <= scene.n_beams):
        raise ValueError("beam_index out of range")
    clean = _clean_rss(scene, mirror, np.asarray(location, float)[None, :], path_id)[0, beam_index - 1]
    if rng is None:
        return float(clean)
    sigma = scene.noise_std_direct if path_id == 0 else scene.noise_std_reflect
    return float(_apply_db_noise(np.array([clean]), sigma, rng)[0])


def ground_truth_map(scene: Scene, mirror: Optional[MirrorScene], which: str = "total") -> BeamMapCartesian:
    """Noiseless beam map on the cell-center grid.

    ``which`` selects the direct field, the reflected field, or their sum.
    """
    if which not in ("direct", "reflect", "total"):
        raise ValueError("which must be 'direct', 'reflect' or 'total'")
    n = int(round(scene.region_size))
    pts = cell_centers(scene.region_size)
    vals = np.zeros((pts.shape[0], scene.n_beams))
    if which in ("direct", "total"):
        vals += _clean_rss(scene, mirror, pts, 0)
    if which in ("reflect", "total") and mirror is not None:
        vals += _clean_rss(scene, mirror, pts, 1)
    return BeamMapCartesian(vals.reshape(n, n, scene.n_beams))


def sample_measurements(scene: Scene, mirror: Optional[MirrorScene], sampling_ratio: float,
                        seed: int) -> MeasurementSet:
    """Draw UE locations uniformly in the region and record per-beam, per-path RSS.

    The number of locations is ``round(sampling_ratio * L^2)``. Every location
    yields one record per beam for the direct path and, when a mirror scene is
    given, one per beam for the reflected path. Bit-reproducible for a fixed
    seed.
    """
    if not (0.0 < sampling_ratio <= 1.0):
        raise ValueError("sampling_ratio must be in (0, 1]")
    L = scene.region_size
    m = int(round(sampling_ratio * L * L))
    rng = np.random.default_rng(seed)
    locations = rng.uniform(0.0, L, (m, 2))
    n_paths = 2 if mirror is not None else 1
    idx = np.arange(1, scene.n_beams + 1)

    beams, locs, paths, rss = [], [], [], []
    for path in range(n_paths):
        clean = _clean_rss(scene, mirror, locations, path)  # (m, I)
        sigma = scene.noise_std_direct if path == 0 else scene.noise_std_reflect
        noisy = _apply_db_noise(clean, sigma, rng)
        beams.append(np.tile(idx, m))
        locs.append(np.repeat(locations, scene.n_beams, axis=0))
        paths.append(np.full(m * scene.n_beams, path))
        rss.append(noisy.ravel())
    return MeasurementSet(
        beam_index=np.concatenate(beams),
        locations=np.concatenate(locs),
        path_id=np.concatenate(paths),
        rss=np.concatenate(rss),
        rng_seed=seed,
        sampling_ratio=sampling_ratio,
    )


# ---------------------------------------------------------------------------
# Measurement CSV interface
# ---------------------------------------------------------------------------

def write_measurements_csv(ms: MeasurementSet, path) -> None:
    """Write records as CSV with header ``beam_index,x,y,path_id,rss``."""
    with open(path, "w") as f:
        f.write("beam_index,x,y,path_id,rss\n")
        for b, (x, y), p, r in zip(ms.beam_index, ms.locations, ms.path_id, ms.rss):
            f.write(f"{b},{x:.17g},{y:.17g},{p},{r:.17g}\n")


def read_measurements_csv(path) -> MeasurementSet:
    data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=float)
    data = np.atleast_2d(data)
    return MeasurementSet(
        beam_index=data[:, 0].astype(int),
        locations=data[:, 1:3],
        path_id=data[:, 3].astype(int),
        rss=data[:, 4],
    )
