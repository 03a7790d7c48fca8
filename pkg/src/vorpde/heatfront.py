"""Heat-kernel superposition fields on the plane and flat torus.

A point-mass initial condition smoothed for time t gives
u(x, t) = sum_i w_i p_t(x_i, x) with the Gaussian kernel
p_t(x, y) = (4 pi t)^(-1) exp(-d^2(x,y) / 4t) in two dimensions (periodic
image sums on the torus). The probes here measure where u decreases radially
inside cells, where its minima sit along inter-site segments, and how the
kernel gradient scales, all against the exact cell geometry.

Field and probe evaluation is done in log space: at small t the kernel
underflows double precision far from a site, while log u is perfectly
representable, and monotonicity of u is equivalent to monotonicity of log u.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    GridSpec,
    LabelGrid,
    PLANE,
    ScalarField,
    SiteSet,
    TORUS,
    bisector_margin,
    label_points,
    rasterize_tessellation,
)

# relative slack absorbing roundoff when testing for strict decrease of u;
# in log space a relative decrease of 1e-15 is an absolute decrease of ~1e-15
DECREASE_TOL = 1e-15


def default_image_cutoff(t: float, period: float) -> int:
    """Image count K so the discarded periodic tail is below 1e-14 of the kernel."""
    return int(math.ceil(math.sqrt(4.0 * t * 35.0) / period)) + 1


@dataclass
class HeatConfig:
    """Sites with positive heat masses observed at a fixed diffusion time."""

    siteset: SiteSet
    weights_heat: np.ndarray = None
    t: float = 1e-3
    images: int = None  # torus image cutoff; defaults from the tail bound

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("diffusion time must be positive")
        if self.weights_heat is None:
            self.weights_heat = np.ones(self.siteset.n_sites)
        self.weights_heat = np.asarray(self.weights_heat, dtype=float)
        if self.weights_heat.shape != (self.siteset.n_sites,):
            raise ValueError("one heat weight per site required")
        if (self.weights_heat <= 0).any():
            raise ValueError("heat weights must be positive")
        if self.images is None:
            self.images = (
                default_image_cutoff(self.t, self.siteset.period)
                if self.siteset.topology == TORUS
                else 1
            )
        if self.images < 1:
            raise ValueError("image cutoff must be >= 1")


def _axis_image_sum(delta: np.ndarray, t: float, period: float, images: int) -> np.ndarray:
    """sum_k exp(-(delta + k L)^2 / 4t) over k in [-K, K], elementwise.

    The offset is canonicalized to |delta| so the summation order, and hence
    the rounded result, is exactly symmetric in the two kernel arguments.
    """
    ks = np.arange(-images, images + 1)
    shifted = np.abs(delta)[..., None] + ks * period
    return np.exp(-(shifted ** 2) / (4.0 * t)).sum(axis=-1)


def _axis_image_logsum(delta: np.ndarray, t: float, period: float, images: int) -> np.ndarray:
    ks = np.arange(-images, images + 1)
    e = -((np.abs(delta)[..., None] + ks * period) ** 2) / (4.0 * t)
    m = e.max(axis=-1)
    return m + np.log(np.exp(e - m[..., None]).sum(axis=-1))


def heat_kernel(x, y, t: float, topology: str = PLANE, period: float = None, images: int = None):
    """Two-dimensional heat kernel p_t(x, y); periodic image sum on the torus."""
    if t <= 0:
        raise ValueError("diffusion time must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    norm = 1.0 / (4.0 * math.pi * t)
    dx = x[..., 0] - y[..., 0]
    dy = x[..., 1] - y[..., 1]
    if topology == TORUS:
        if period is None:
            raise ValueError("torus kernel needs the period L")
        if images is None:
            images = default_image_cutoff(t, period)
        val = norm * _axis_image_sum(dx, t, period, images) * _axis_image_sum(dy, t, period, images)
    else:
        val = norm * np.exp(-(dx * dx + dy * dy) / (4.0 * t))
    return val if val.shape else float(val)


def _log_site_kernels(points: np.ndarray, cfg: HeatConfig) -> np.ndarray:
    """log p_t(x_i, x) + log(4 pi t), shape (M, N); the common norm is omitted."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s = cfg.siteset
    dx = pts[:, 0:1] - s.sites[None, :, 0]
    dy = pts[:, 1:2] - s.sites[None, :, 1]
    if s.topology == TORUS:
        return _axis_image_logsum(dx, cfg.t, s.period, cfg.images) + _axis_image_logsum(
            dy, cfg.t, s.period, cfg.images
        )
    return -(dx * dx + dy * dy) / (4.0 * cfg.t)


def log_heat_field(points, cfg: HeatConfig) -> np.ndarray:
    """log u(x, t) for u = sum_i w_i p_t(x_i, x), stable at any t."""
    scores = _log_site_kernels(points, cfg) + np.log(cfg.weights_heat)[None, :]
    m = scores.max(axis=1)
    out = m + np.log(np.exp(scores - m[:, None]).sum(axis=1))
    return out - math.log(4.0 * math.pi * cfg.t)


def heat_field(cfg: HeatConfig, grid: GridSpec) -> ScalarField:
    """u(x, t) at every grid node."""
    vals = np.exp(log_heat_field(grid.points(), cfg))
    return ScalarField(grid, vals.reshape(grid.ny, grid.nx)).assert_finite()


def dominant_kernel_label(cfg: HeatConfig, grid: GridSpec) -> LabelGrid:
    """Per node, the site whose weighted kernel term dominates the sum.

    With equal weights the score ordering reduces to the distance ordering, so
    the labeling coincides with the Voronoi rasterization for every t; with
    weights (w_i) it is the power diagram with offsets -4 t log(w_i).
    """
    scores = _log_site_kernels(grid.points(), cfg) + np.log(cfg.weights_heat)[None, :]
    labels = np.argmax(scores, axis=1).astype(np.int32)
    if scores.shape[1] == 1:
        gaps = np.full(scores.shape[0], np.inf)
    else:
        part = np.partition(scores, -2, axis=1)
        gaps = part[:, -1] - part[:, -2]
    return LabelGrid(grid, labels.reshape(grid.ny, grid.nx), gaps.reshape(grid.ny, grid.nx))


def kernel_mass_quadrature(cfg: HeatConfig, pad_factor: float = 10.0, n: int = 512) -> float:
    """Trapezoid-rule mass of the plane field over a box padded by pad_factor*sqrt(t)
    around the site hull. Mass preservation makes this sum_i w_i up to tail and
    quadrature error."""
    if cfg.siteset.topology != PLANE:
        raise ValueError("mass quadrature integrates the plane field")
    pad = pad_factor * math.sqrt(cfg.t)
    sites = cfg.siteset.sites
    xs = np.linspace(sites[:, 0].min() - pad, sites[:, 0].max() + pad, n)
    ys = np.linspace(sites[:, 1].min() - pad, sites[:, 1].max() + pad, n)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    u = np.exp(log_heat_field(pts, cfg)).reshape(n, n)
    return float(np.trapezoid(np.trapezoid(u, xs, axis=1), ys))


def semigroup_residual(cfg: HeatConfig, s: float, x, z, grid: GridSpec) -> float:
    """Relative defect of the semigroup identity on the torus:
    |sum_y p_t(x,y) p_s(y,z) h^2 - p_{t+s}(x,z)| / p_{t+s}(x,z)."""
    top = cfg.siteset.topology
    L = cfg.siteset.period if top == TORUS else None
    pts = grid.points()
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    pt = heat_kernel(np.broadcast_to(x, pts.shape), pts, cfg.t, top, L, cfg.images)
    ps = heat_kernel(pts, np.broadcast_to(z, pts.shape), s, top, L, cfg.images)
    conv = float((pt * ps).sum() * grid.h ** 2)
    exact = heat_kernel(x, z, cfg.t + s, top, L, cfg.images)
    return abs(conv - exact) / exact


@dataclass
class RayProbe:
    """Samples of u along a ray from a site, restricted to the admissible range:
    s > delta, point inside the cell, and farther than eps from the cell boundary.
    verdict is True when u strictly decreases along all consecutive samples,
    False when a rise is observed, and None when the range is empty."""

    site: int
    theta: np.ndarray
    ds: float
    delta: float
    eps: float
    s: np.ndarray = field(default_factory=lambda: np.empty(0))
    log_u: np.ndarray = field(default_factory=lambda: np.empty(0))
    verdict: bool = None

    @property
    def u(self) -> np.ndarray:
        return np.exp(self.log_u)

    @property
    def empty(self) -> bool:
        return self.verdict is None


def _admissible_ray_points(siteset: SiteSet, site: int, theta, delta, eps, ds):
    """Sample points x_i + s*theta with s > delta that lie in cell `site`
    strictly inside the domain, at boundary margin > eps."""
    theta = np.asarray(theta, dtype=float)
    theta = theta / np.hypot(theta[0], theta[1])
    d = siteset.domain
    s_max = math.hypot(d.width, d.height)
    svals = delta + ds * np.arange(1, int(s_max / ds) + 2)
    origin = siteset.sites[site]
    pts = origin[None, :] + svals[:, None] * theta[None, :]
    if siteset.topology == TORUS:
        pts = np.mod(pts, siteset.period)
        inside = np.ones(len(pts), dtype=bool)
    else:
        inside = (
            (pts[:, 0] > d.x0) & (pts[:, 0] < d.x1) & (pts[:, 1] > d.y0) & (pts[:, 1] < d.y1)
        )
    labels, gaps = label_points(pts, siteset)
    in_cell = inside & (labels == site)
    # cells are convex on the plane: truncate at the first exit
    exit_idx = len(pts) if in_cell.all() else int(np.argmin(in_cell))
    pts, svals, gaps = pts[:exit_idx], svals[:exit_idx], gaps[:exit_idx]
    if len(pts) == 0:
        return pts, svals
    if siteset.topology == PLANE:
        margin = bisector_margin(pts, siteset)
    else:
        margin = gaps / 2.0
    keep = margin > eps
    return pts[keep], svals[keep]


def radial_monotonicity_probe(
    cfg: HeatConfig, site: int, theta, delta: float, eps: float, ds: float
) -> RayProbe:
    """Sample u along a ray from site i and test for strict radial decrease."""
    pts, svals = _admissible_ray_points(cfg.siteset, site, theta, delta, eps, ds)
    probe = RayProbe(site=site, theta=np.asarray(theta, float), ds=ds, delta=delta, eps=eps)
    probe.s = svals
    probe.log_u = log_heat_field(pts, cfg) if len(pts) else np.empty(0)
    if len(svals) >= 2:
        probe.verdict = bool((np.diff(probe.log_u) < -DECREASE_TOL).all())
    return probe


@dataclass
class HorizonResult:
    t: float
    none_pass: bool = False


def monotone_time_horizon(
    siteset: SiteSet,
    weights_heat,
    thetas,
    delta: float,
    eps: float,
    ds: float,
    site: int = None,
    t_range=(1e-6, 1.0),
    rtol: float = 1e-3,
) -> HorizonResult:
    """Largest t (bisection to ~3 significant figures) below which every probed
    ray passes the radial monotonicity test. ``site=None`` probes all sites."""
    sites = range(siteset.n_sites) if site is None else [site]

    def passes(t: float) -> bool:
        cfg = HeatConfig(siteset=siteset, weights_heat=weights_heat, t=t)
        for i in sites:
            for theta in thetas:
                probe = radial_monotonicity_probe(cfg, i, theta, delta, eps, ds)
                if probe.verdict is False:
                    return False
        return True

    lo, hi = t_range
    if passes(hi):
        return HorizonResult(hi)
    if not passes(lo):
        return HorizonResult(lo, none_pass=True)
    while hi / lo > 1.0 + 2.0 * rtol:
        mid = math.sqrt(lo * hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return HorizonResult(lo)


def ray_fan(n: int) -> np.ndarray:
    """n unit directions at uniform angles."""
    ang = 2.0 * math.pi * np.arange(n) / n
    return np.column_stack([np.cos(ang), np.sin(ang)])


@dataclass
class PathMinimum:
    s_star: float
    point: np.ndarray
    boundary_distance: float
    log_u_min: float


def path_minimum_probe(cfg: HeatConfig, i: int, j: int, n_samples: int = 401) -> PathMinimum:
    """Location of the sampled minimum of u along the segment x_i -> x_j and its
    distance to the tie set (gap = 0) of the tessellation."""
    if i == j:
        raise ValueError("need two distinct sites")
    s = cfg.siteset
    svals = np.linspace(0.0, 1.0, n_samples)
    pts = s.sites[i][None, :] + svals[:, None] * (s.sites[j] - s.sites[i])[None, :]
    logu = log_heat_field(pts, cfg)
    k = int(np.argmin(logu))
    point = pts[k]
    if s.topology == PLANE:
        dist = float(bisector_margin(point[None, :], s)[0])
    else:
        dist = float(label_points(point[None, :], s)[1][0]) / 2.0
    return PathMinimum(float(svals[k]), point, dist, float(logu[k]))


def squared_interior_margin(siteset: SiteSet, site: int, eps: float, grid: GridSpec):
    """Squared distance-margin separating the eps-interior of a cell from the
    other sites: alpha(eps)^2 with alpha = min over grid nodes of the cell
    having gap > eps of (nearest-other-site distance - own distance).
    Returns None when no node qualifies."""
    lg = rasterize_tessellation(siteset, grid, mode="voronoi")
    qualify = (lg.labels == site) & (lg.gaps > eps)
    if not qualify.any():
        return None
    alpha = float(lg.gaps[qualify].min())
    return alpha * alpha


def kernel_gradient_magnitude(d, t):
    """|grad_y p_t(x, y)| for the plane kernel at distance d: (d / 2t) p_t."""
    d = np.asarray(d, dtype=float)
    return (d / (2.0 * t)) / (4.0 * math.pi * t) * np.exp(-(d * d) / (4.0 * t))


def log_kernel_gradient_magnitude(d, t):
    """log |grad_y p_t| evaluated in closed form (no underflow)."""
    d = np.asarray(d, dtype=float)
    return np.log(d) - math.log(8.0 * math.pi) - 2.0 * np.log(t) - (d * d) / (4.0 * t)


def kernel_gradient_bounds(t_range=(1e-4, 1.0), d_range=(0.1, 3.0), n_mesh: int = 25) -> dict:
    """Fit the smallest constants closing the kernel-gradient envelope on a
    log-spaced (t, d) mesh, with dimension n = 2 and the Gaussian exponent
    -d^2/4t:

        log |grad p_t| <= C_up + (n - 1) log t - d^2/(4t) + log d
        log |grad p_t| >= C_low - (1 + n/2) log t - d^2/(4t) + log d

    The lower envelope matches the radial derivative magnitude exactly, so
    C_low is the constant -log(8 pi); the upper envelope costs an extra
    -3 log t on the mesh.
    """
    ts = np.geomspace(t_range[0], t_range[1], n_mesh)
    ds = np.geomspace(d_range[0], d_range[1], n_mesh)
    T, D = np.meshgrid(ts, ds, indexing="ij")
    logg = log_kernel_gradient_magnitude(D, T)
    up = logg - (2 - 1) * np.log(T) + D * D / (4.0 * T) - np.log(D)
    low = logg + (1 + 2 / 2) * np.log(T) + D * D / (4.0 * T) - np.log(D)
    return {
        "c_up": float(up.max()),
        "c_low": float(low.min()),
        "finite": bool(np.isfinite(up).all() and np.isfinite(low).all()),
        "t_range": list(t_range),
        "d_range": list(d_range),
        "n_mesh": n_mesh,
    }


def torus_cut_locus_check(siteset: SiteSet, grid: GridSpec) -> np.ndarray:
    """Per site: True when every node of its cell has a unique minimizing
    translate with distance margin > h, i.e. the cell avoids the cut locus."""
    if siteset.topology != TORUS:
        raise ValueError("cut locus check applies to the torus")
    L = siteset.period
    pts = grid.points()
    lg = rasterize_tessellation(siteset, grid, mode="voronoi")
    labels = lg.labels.ravel()
    ok = np.ones(siteset.n_sites, dtype=bool)
    ks = np.array([-1.0, 0.0, 1.0]) * L
    for i in range(siteset.n_sites):
        nodes = pts[labels == i]
        if len(nodes) == 0:
            continue
        ax = np.sort((nodes[:, 0:1] - siteset.sites[i, 0] + ks[None, :]) ** 2, axis=1)
        ay = np.sort((nodes[:, 1:2] - siteset.sites[i, 1] + ks[None, :]) ** 2, axis=1)
        best = ax[:, 0] + ay[:, 0]
        second = np.minimum(ax[:, 1] + ay[:, 0], ax[:, 0] + ay[:, 1])
        margin = np.sqrt(second) - np.sqrt(best)
        ok[i] = bool((margin > grid.h).all())
    return ok
