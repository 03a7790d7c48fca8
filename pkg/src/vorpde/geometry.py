"""Exact geometric ground truth: site sets, Voronoi/power labeling by definition,
grid rasterization, and the discrepancy metrics used by every other module.

All labeling is done point-by-point from the defining argmin, with ties broken
by lowest site index, so the results here serve as the oracle for the PDE-based
constructions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

UNASSIGNED = -1

PLANE = "plane"
TORUS = "torus"


@dataclass
class Rect:
    """Axis-aligned rectangle [x0, x1] x [y0, y1]."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("degenerate rectangle")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x: float, y: float, strict: bool = False) -> bool:
        if strict:
            return self.x0 < x < self.x1 and self.y0 < y < self.y1
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1


@dataclass
class SiteSet:
    """Generator points with optional power weights on a plane or torus domain.

    Weights are in squared-length units (power diagram offsets). On the torus
    the domain must be the fundamental cell [0, L) x [0, L).
    """

    sites: np.ndarray
    weights: np.ndarray = None
    domain: Rect = None
    topology: str = PLANE

    def __post_init__(self):
        self.sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        if self.sites.ndim != 2 or self.sites.shape[1] != 2:
            raise ValueError("sites must be an (N, 2) array")
        if self.n_sites < 1:
            raise ValueError("need at least one site")
        if self.weights is None:
            self.weights = np.zeros(self.n_sites)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.n_sites,):
            raise ValueError("weights must match the number of sites")
        if self.domain is None:
            self.domain = Rect(0.0, 2.0, 0.0, 2.0)
        if self.topology not in (PLANE, TORUS):
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.topology == TORUS:
            d = self.domain
            if not (d.x0 == 0.0 and d.y0 == 0.0 and d.x1 == d.y1):
                raise ValueError("torus domain must be [0, L) x [0, L)")
            inside = (self.sites >= 0.0).all() and (self.sites < self.period).all()
            if not inside:
                raise ValueError("torus sites must lie in [0, L)^2")
        else:
            for sx, sy in self.sites:
                if not self.domain.contains(sx, sy, strict=True):
                    raise ValueError("sites must lie strictly inside the domain")
        if self.n_sites > 1:
            d2 = site_sq_distances(self.sites, self)
            np.fill_diagonal(d2, np.inf)
            if d2.min() <= 0.0:
                raise ValueError("sites must be pairwise distinct")

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    @property
    def period(self) -> float:
        return self.domain.x1


@dataclass
class GridSpec:
    """Uniform square-cell sampling of a rectangle, nodes at cell centers."""

    nx: int
    ny: int
    domain: Rect

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 nodes per axis")
        hx = self.domain.width / self.nx
        hy = self.domain.height / self.ny
        if abs(hx - hy) > 1e-12 * max(hx, hy):
            raise ValueError(f"cells must be square (hx={hx}, hy={hy})")

    @property
    def h(self) -> float:
        return self.domain.width / self.nx

    def xs(self) -> np.ndarray:
        return self.domain.x0 + (np.arange(self.nx) + 0.5) * self.h

    def ys(self) -> np.ndarray:
        return self.domain.y0 + (np.arange(self.ny) + 0.5) * self.h

    def mesh(self):
        """Node coordinate arrays X, Y of shape (ny, nx)."""
        return np.meshgrid(self.xs(), self.ys(), indexing="xy")

    def points(self) -> np.ndarray:
        """All node coordinates as an (ny*nx, 2) array, row-major in (iy, ix)."""
        X, Y = self.mesh()
        return np.column_stack([X.ravel(), Y.ravel()])


@dataclass
class LabelGrid:
    """Integer site label per grid node; UNASSIGNED marks unlabeled nodes.

    ``gaps`` optionally records, per node, the margin between the second-best
    and best label score (distance or power value); gap 0 flags a boundary tie.
    """

    spec: GridSpec
    labels: np.ndarray
    gaps: np.ndarray = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.labels.shape != (self.spec.ny, self.spec.nx):
            raise ValueError("label array does not match the grid")


@dataclass
class ScalarField:
    """One real value per grid node."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.spec.ny, self.spec.nx):
            raise ValueError("value array does not match the grid")

    def assert_finite(self):
        if not np.isfinite(self.values).all():
            raise ValueError("field contains NaN or infinite values")
        return self


def _torus_axis_min_sq(delta: np.ndarray, period: float) -> np.ndarray:
    """Minimal squared per-axis offset over the translates delta + k*L, k in {-1,0,1}."""
    d = np.abs(delta)
    d = np.minimum(d, period - d)
    return d * d


def site_sq_distances(points: np.ndarray, siteset: SiteSet) -> np.ndarray:
    """Squared metric distances from each point to each site, shape (M, N).

    Torus distances use the minimal translate per axis, which is exact for
    points and sites inside one fundamental cell.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dx = pts[:, 0:1] - siteset.sites[None, :, 0]
    dy = pts[:, 1:2] - siteset.sites[None, :, 1]
    if siteset.topology == TORUS:
        return _torus_axis_min_sq(dx, siteset.period) + _torus_axis_min_sq(dy, siteset.period)
    return dx * dx + dy * dy


def metric_distance(x, y, topology: str = PLANE, period: float = None) -> float:
    """Distance between two points: Euclidean on the plane, minimal-translate on the torus."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x - y
    if topology == TORUS:
        if period is None:
            raise ValueError("torus distance needs the period L")
        return math.sqrt(_torus_axis_min_sq(d[0], period) + _torus_axis_min_sq(d[1], period))
    return math.hypot(d[0], d[1])


def _labels_and_gaps(scores: np.ndarray):
    """Argmin per row (first occurrence = lowest index) and second-best margin."""
    labels = np.argmin(scores, axis=1).astype(np.int32)
    if scores.shape[1] == 1:
        gaps = np.full(scores.shape[0], np.inf)
    else:
        part = np.partition(scores, 1, axis=1)
        gaps = part[:, 1] - part[:, 0]
    return labels, gaps


def nearest_site_label(x, siteset: SiteSet):
    """Index of the nearest site and the distance gap to the second nearest.

    Ties break to the lowest index; gap 0 signals a cell-boundary point.
    """
    d = np.sqrt(site_sq_distances(np.asarray(x, dtype=float)[None, :], siteset))
    labels, gaps = _labels_and_gaps(d)
    return int(labels[0]), float(gaps[0])


def power_label(x, siteset: SiteSet):
    """Index minimizing d^2(x, x_i) + w_i and the power-function gap."""
    p = site_sq_distances(np.asarray(x, dtype=float)[None, :], siteset) + siteset.weights[None, :]
    labels, gaps = _labels_and_gaps(p)
    return int(labels[0]), float(gaps[0])


def label_points(points: np.ndarray, siteset: SiteSet, mode: str = "voronoi"):
    """Vectorized labeling of many points; returns (labels, gaps) arrays.

    In voronoi mode gaps are distance margins; in power mode they are power
    value margins (squared-length units).
    """
    d2 = site_sq_distances(points, siteset)
    if mode == "voronoi":
        return _labels_and_gaps(np.sqrt(d2))
    if mode == "power":
        return _labels_and_gaps(d2 + siteset.weights[None, :])
    raise ValueError(f"unknown mode {mode!r}")


def rasterize_tessellation(siteset: SiteSet, grid: GridSpec, mode: str = "voronoi") -> LabelGrid:
    """Label every grid node by the exact per-point argmin. Deterministic."""
    labels, gaps = label_points(grid.points(), siteset, mode=mode)
    return LabelGrid(
        spec=grid,
        labels=labels.reshape(grid.ny, grid.nx),
        gaps=gaps.reshape(grid.ny, grid.nx),
    )


def mismatch_fraction(a: LabelGrid, b: LabelGrid, exclusion_band: float = 0.0) -> float:
    """Fraction of disagreeing nodes, restricted to nodes where the reference
    grid ``b`` has gap > exclusion_band. UNASSIGNED nodes count as mismatches.
    """
    if a.spec != b.spec:
        raise ValueError("label grids live on different grid specs")
    if exclusion_band < 0:
        raise ValueError("exclusion band must be >= 0")
    if b.gaps is None:
        raise ValueError("reference grid carries no gap data")
    eligible = b.gaps > exclusion_band
    n_eligible = int(eligible.sum())
    if n_eligible == 0:
        return 0.0
    bad = (a.labels != b.labels) | (a.labels == UNASSIGNED) | (b.labels == UNASSIGNED)
    return float(bad[eligible].sum()) / n_eligible


def boundary_nodes(grid: LabelGrid) -> np.ndarray:
    """Boolean mask of nodes with a 4-neighbor carrying a different, non-sentinel label."""
    lab = grid.labels
    mask = np.zeros_like(lab, dtype=bool)
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        nb = np.roll(lab, shift, axis=axis)
        differs = (nb != lab) & (nb != UNASSIGNED)
        # roll wraps around; suppress the wrapped row/column
        if axis == 0:
            if shift == 1:
                differs[0, :] = False
            else:
                differs[-1, :] = False
        else:
            if shift == 1:
                differs[:, 0] = False
            else:
                differs[:, -1] = False
        mask |= differs
    return mask


def bisector_margin(points: np.ndarray, siteset: SiteSet, mode: str = "voronoi") -> np.ndarray:
    """Exact Euclidean distance from each point to the nearest label bisector.

    For a point with best site i, the distance to the bisector against site j
    is (s_j - s_i) / (2 |x_j - x_i|) with s the squared-distance (plus weight)
    score; the minimum over j is a sound lower bound on the distance to the
    cell boundary, exact when the nearest boundary feature is a face.
    Plane topology only.
    """
    if siteset.topology != PLANE:
        raise ValueError("bisector margins are closed-form on the plane only")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    scores = site_sq_distances(pts, siteset)
    if mode == "power":
        scores = scores + siteset.weights[None, :]
    n = siteset.n_sites
    if n == 1:
        return np.full(pts.shape[0], np.inf)
    diff = siteset.sites[None, :, :] - siteset.sites[:, None, :]
    sep = np.sqrt((diff ** 2).sum(-1))  # (N, N) pairwise site separations
    labels = np.argmin(scores, axis=1)
    best = scores[np.arange(pts.shape[0]), labels]
    with np.errstate(divide="ignore", invalid="ignore"):
        plane_dist = (scores - best[:, None]) / (2.0 * sep[labels, :])
    plane_dist[np.arange(pts.shape[0]), labels] = np.inf
    return plane_dist.min(axis=1)


def node_set_hausdorff(mask_a: np.ndarray, mask_b: np.ndarray, grid: GridSpec) -> float:
    """Symmetric Hausdorff distance between two node sets, in domain units."""
    from scipy.spatial import cKDTree

    pts = grid.points()
    a = pts[mask_a.ravel()]
    b = pts[mask_b.ravel()]
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return math.inf
    d_ab = cKDTree(b).query(a)[0].max()
    d_ba = cKDTree(a).query(b)[0].max()
    return float(max(d_ab, d_ba))


def cell_areas(grid: LabelGrid) -> np.ndarray:
    """Grid-measured area of each cell (node count times cell area)."""
    n = int(grid.labels.max()) + 1
    counts = np.bincount(grid.labels[grid.labels != UNASSIGNED].ravel(), minlength=n)
    return counts * grid.spec.h ** 2
