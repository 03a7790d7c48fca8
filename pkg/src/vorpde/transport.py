"""Shrinking-map transport experiments on power diagrams.

The piecewise-quadratic potential

    Phi(x) = |x|^2 / 2 + (lam - 1)/2 * min_i { |x - x_i|^2 + w_i },  0 < lam < 1,

is strongly convex with modulus lam; inside the power cell of site i its
gradient is the affine contraction x -> x_i + lam (x - x_i), which pushes the
uniform measure on the domain onto a measure of density 1/lam^2 on the
shrunken image cells. The checks here verify that structure quantitatively:
push-forward containment and masses, the test-function transport identity,
the constant Hessian determinant lam^2, the gradient jump across cell
boundaries, and the lam -> 0 semi-discrete limit against an exact linear
programming oracle.

All densities are volume-normalized (scaled by 1/|domain|), so masses are
probabilities regardless of the domain size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    GridSpec,
    PLANE,
    SiteSet,
    cell_areas,
    label_points,
    rasterize_tessellation,
    site_sq_distances,
)

MONOMIAL_NAMES = ("1", "y1", "y2", "y1^2", "y1*y2", "y2^2", "y1^3", "y2^3")

BOUNDARY_GAP = 1e-12  # power-gap below which a point counts as a boundary tie


def monomial_values(pts: np.ndarray) -> np.ndarray:
    """The fixed test-function basis evaluated at points, shape (M, 8)."""
    y1, y2 = pts[:, 0], pts[:, 1]
    return np.column_stack(
        [np.ones_like(y1), y1, y2, y1 ** 2, y1 * y2, y2 ** 2, y1 ** 3, y2 ** 3]
    )


@dataclass
class TransportConfig:
    """One (lam, power diagram) transport experiment."""

    siteset: SiteSet
    lam: float
    grid: GridSpec = None  # quadrature grid; defaults to 256^2 on the domain
    n_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.lam < 1.0):
            raise ValueError("lam must lie in (0, 1)")
        if self.siteset.topology != PLANE:
            raise ValueError("transport experiments run on the plane")
        if self.grid is None:
            self.grid = GridSpec(256, 256, self.siteset.domain)
        if self.grid.domain != self.siteset.domain:
            raise ValueError("quadrature grid must cover the site domain")
        counts = np.bincount(
            rasterize_tessellation(self.siteset, self.grid, "power").labels.ravel(),
            minlength=self.siteset.n_sites,
        )
        if (counts == 0).any():
            empty = np.nonzero(counts == 0)[0]
            raise ValueError(f"empty power cells for sites {list(empty)}")


def transport_potential(points, cfg: TransportConfig) -> np.ndarray:
    """Phi(x): continuous, piecewise quadratic, lam-strongly convex."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    power = site_sq_distances(pts, cfg.siteset) + cfg.siteset.weights[None, :]
    val = 0.5 * (pts ** 2).sum(axis=1) + 0.5 * (cfg.lam - 1.0) * power.min(axis=1)
    return val


def brenier_map(points, cfg: TransportConfig):
    """The a.e. gradient of the potential: x -> x_i + lam (x - x_i) on cell i.

    Returns (mapped_points, labels, power_gaps); a gap below 1e-12 flags a
    boundary tie, where the map took the lowest-index branch.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    labels, gaps = label_points(pts, cfg.siteset, mode="power")
    anchors = cfg.siteset.sites[labels]
    mapped = anchors + cfg.lam * (pts - anchors)
    return mapped, labels, gaps


def image_cell_membership(points, cell: int, cfg: TransportConfig) -> np.ndarray:
    """True where a point lies in the shrunken image of the given power cell,
    i.e. its preimage under the cell's contraction lands back in that cell."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    anchor = cfg.siteset.sites[cell]
    pre = anchor + (pts - anchor) / cfg.lam
    d = cfg.siteset.domain
    inside = (
        (pre[:, 0] >= d.x0) & (pre[:, 0] <= d.x1) & (pre[:, 1] >= d.y0) & (pre[:, 1] <= d.y1)
    )
    labels, _ = label_points(pre, cfg.siteset, mode="power")
    return inside & (labels == cell)


def image_membership_any(points, cfg: TransportConfig):
    """Membership in the union of image cells; returns (member, owner) arrays."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    member = np.zeros(len(pts), dtype=bool)
    owner = np.full(len(pts), -1, dtype=np.int32)
    for i in range(cfg.siteset.n_sites):
        m = image_cell_membership(pts, i, cfg)
        fresh = m & ~member
        owner[fresh] = i
        member |= m
    return member, owner


@dataclass
class PushforwardReport:
    n_samples: int
    n_boundary_skipped: int
    n_violations: int
    violation_examples: list
    cell_share: np.ndarray
    expected_share: np.ndarray
    z_scores: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(np.abs(self.z_scores).max())


def pushforward_check(cfg: TransportConfig) -> PushforwardReport:
    """Map seeded uniform samples and verify the push-forward structure:
    every mapped sample lands in its origin cell's image, and per-cell sample
    shares match the oracle area fractions within Monte Carlo error."""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.siteset.domain
    pts = np.column_stack(
        [rng.uniform(d.x0, d.x1, cfg.n_samples), rng.uniform(d.y0, d.y1, cfg.n_samples)]
    )
    mapped, labels, gaps = brenier_map(pts, cfg)
    interior = gaps > BOUNDARY_GAP
    ok = np.ones(cfg.n_samples, dtype=bool)
    for i in range(cfg.siteset.n_sites):
        sel = interior & (labels == i)
        if sel.any():
            ok[sel] = image_cell_membership(mapped[sel], i, cfg)
    violations = np.nonzero(interior & ~ok)[0]
    examples = [
        {"x": pts[j].tolist(), "Tx": mapped[j].tolist(), "label": int(labels[j])}
        for j in violations[:5]
    ]
    areas = cell_areas(rasterize_tessellation(cfg.siteset, cfg.grid, "power"))
    expected = areas / d.area
    share = np.bincount(labels, minlength=cfg.siteset.n_sites) / cfg.n_samples
    sigma = np.sqrt(np.maximum(expected * (1 - expected), 1e-300) / cfg.n_samples)
    z = (share - expected) / sigma
    return PushforwardReport(
        n_samples=cfg.n_samples,
        n_boundary_skipped=int((~interior).sum()),
        n_violations=int(len(violations)),
        violation_examples=examples,
        cell_share=share,
        expected_share=expected,
        z_scores=z,
    )


def _boundary_cells(flags: np.ndarray) -> np.ndarray:
    """Cells whose flag differs from a 4-neighbor (the integrand may jump there)."""
    out = np.zeros_like(flags, dtype=bool)
    out[:, 1:] |= flags[:, 1:] != flags[:, :-1]
    out[:, :-1] |= flags[:, 1:] != flags[:, :-1]
    out[1:, :] |= flags[1:, :] != flags[:-1, :]
    out[:-1, :] |= flags[1:, :] != flags[:-1, :]
    return out


def _subcell_offsets(h: float, s: int) -> np.ndarray:
    c = (np.arange(s) + 0.5) / s - 0.5
    ox, oy = np.meshgrid(c * h, c * h, indexing="xy")
    return np.column_stack([ox.ravel(), oy.ravel()])


def brenier_residual(cfg: TransportConfig, grid: GridSpec = None, subsamples: int = 4) -> np.ndarray:
    """|LHS - RHS| of the transport identity per monomial test function:
    integral of xi against the image density versus the pull-back integral of
    xi(T(x)) against the uniform density.

    Both sides use a composite midpoint rule on the grid: cells straddling a
    discontinuity (image-cell edges on the left, power-cell edges on the
    right) are resolved with subsamples^2 interior points, which keeps the
    boundary quadrature error first-order with a small constant.
    """
    g = grid or cfg.grid
    pts = g.points()
    w = g.h ** 2 / cfg.siteset.domain.area  # volume-normalized node weight
    offs = _subcell_offsets(g.h, subsamples)

    # left side: coverage-weighted image-density integral
    member, _ = image_membership_any(pts, cfg)
    coverage = member.reshape(g.ny, g.nx).astype(float)
    edge = _boundary_cells(coverage > 0.5)
    edge_pts = pts.reshape(g.ny, g.nx, 2)[edge]
    if len(edge_pts):
        sub = (edge_pts[:, None, :] + offs[None, :, :]).reshape(-1, 2)
        subm, _ = image_membership_any(sub, cfg)
        coverage[edge] = subm.reshape(len(edge_pts), -1).mean(axis=1)
    lhs = (monomial_values(pts) * coverage.ravel()[:, None]).sum(axis=0) * w / cfg.lam ** 2

    # right side: pull-back integral with the same sub-cell treatment of the
    # map's jump set
    mapped, labels, _ = brenier_map(pts, cfg)
    vals = monomial_values(mapped)
    edge_r = _boundary_cells(labels.reshape(g.ny, g.nx))
    edge_pts_r = pts.reshape(g.ny, g.nx, 2)[edge_r]
    if len(edge_pts_r):
        sub = (edge_pts_r[:, None, :] + offs[None, :, :]).reshape(-1, 2)
        mapped_sub, _, _ = brenier_map(sub, cfg)
        sub_vals = monomial_values(mapped_sub).reshape(len(edge_pts_r), len(offs), -1).mean(axis=1)
        vals[edge_r.ravel()] = sub_vals
    rhs = vals.sum(axis=0) * w
    return np.abs(lhs - rhs)


@dataclass
class HessianReport:
    n_checked: int
    n_skipped: int
    max_det_error: float
    max_identity_error: float


def hessian_determinant_check(
    cfg: TransportConfig, n_points: int = 100, fd_step: float = 1e-4
) -> HessianReport:
    """Central-difference Hessian of the potential at interior sample points.

    Inside a cell the potential is exactly quadratic, so the finite-difference
    Hessian must equal lam * I and its determinant lam^2 to rounding accuracy.
    Points whose distance to a power boundary is below 10 fd_step are skipped.
    """
    rng = np.random.default_rng(cfg.seed + 1)
    d = cfg.siteset.domain
    pad = 20 * fd_step
    checked = 0
    skipped = 0
    max_det = 0.0
    max_eye = 0.0
    sep = np.sqrt(
        ((cfg.siteset.sites[None, :, :] - cfg.siteset.sites[:, None, :]) ** 2).sum(-1)
    )
    max_sep = sep.max() if cfg.siteset.n_sites > 1 else 1.0
    rounds = 0
    while checked < n_points:
        rounds += 1
        if rounds > 50:
            raise RuntimeError("could not find enough interior sample points")
        pts = np.column_stack(
            [
                rng.uniform(d.x0 + pad, d.x1 - pad, n_points),
                rng.uniform(d.y0 + pad, d.y1 - pad, n_points),
            ]
        )
        _, gaps = label_points(pts, cfg.siteset, mode="power")
        # Euclidean margin to the nearest power bisector is at least
        # gap / (2 max pairwise separation)
        margins = gaps / (2.0 * max_sep)
        for p, margin in zip(pts, margins):
            if checked >= n_points:
                break
            if margin <= 10 * fd_step:
                skipped += 1
                continue
            e = fd_step
            f = lambda q: transport_potential(np.asarray(q, float)[None, :], cfg)[0]
            f0 = f(p)
            fxx = (f((p[0] + e, p[1])) - 2 * f0 + f((p[0] - e, p[1]))) / e ** 2
            fyy = (f((p[0], p[1] + e)) - 2 * f0 + f((p[0], p[1] - e))) / e ** 2
            fxy = (
                f((p[0] + e, p[1] + e))
                - f((p[0] + e, p[1] - e))
                - f((p[0] - e, p[1] + e))
                + f((p[0] - e, p[1] - e))
            ) / (4 * e ** 2)
            det = fxx * fyy - fxy * fxy
            max_det = max(max_det, abs(det - cfg.lam ** 2))
            max_eye = max(
                max_eye, abs(fxx - cfg.lam), abs(fyy - cfg.lam), abs(fxy)
            )
            checked += 1
    return HessianReport(checked, skipped, max_det, max_eye)


def adjacent_cell_pairs(cfg: TransportConfig):
    """Cell pairs sharing a boundary segment, detected on the quadrature grid."""
    lab = rasterize_tessellation(cfg.siteset, cfg.grid, "power").labels
    pairs = set()
    for a, b in ((lab[:, :-1], lab[:, 1:]), (lab[:-1, :], lab[1:, :])):
        differ = a != b
        lo = np.minimum(a[differ], b[differ])
        hi = np.maximum(a[differ], b[differ])
        pairs.update(zip(lo.tolist(), hi.tolist()))
    return sorted(pairs)


def gradient_jump(cfg: TransportConfig, i: int, j: int, offset: float = 1e-6):
    """Jump of the map across the shared boundary of cells i and j.

    Returns (measured, analytic) where analytic = (1 - lam) |x_i - x_j|.
    Raises if the cells share no boundary on the quadrature grid.
    """
    if (min(i, j), max(i, j)) not in adjacent_cell_pairs(cfg):
        raise ValueError(f"cells {i} and {j} are not adjacent")
    lab = rasterize_tessellation(cfg.siteset, cfg.grid, "power").labels
    pts = cfg.grid.points().reshape(cfg.grid.ny, cfg.grid.nx, 2)
    s = cfg.siteset
    w = s.weights

    def power_vals(p):
        return site_sq_distances(p[None, :], s)[0] + w

    best = None
    for (a, b), axis in (((lab[:, :-1], lab[:, 1:]), 1), ((lab[:-1, :], lab[1:, :]), 0)):
        hit = ((a == i) & (b == j)) | ((a == j) & (b == i))
        for iy, ix in np.argwhere(hit):
            p = pts[iy, ix]
            q = pts[iy, ix + 1] if axis == 1 else pts[iy + 1, ix]
            # the power difference is affine along the segment: interpolate the root
            rp = power_vals(p)[i] - power_vals(p)[j]
            rq = power_vals(q)[i] - power_vals(q)[j]
            if rp == rq:
                continue
            tstar = rp / (rp - rq)
            x = p + tstar * (q - p)
            vals = power_vals(x)
            third = np.delete(vals, [i, j])
            margin = third.min() - min(vals[i], vals[j]) if len(third) else np.inf
            if best is None or margin > best[0]:
                best = (margin, x)
    if best is None:
        raise ValueError(f"no boundary crossing found between cells {i} and {j}")
    x = best[1]
    normal = s.sites[j] - s.sites[i]
    normal = normal / np.hypot(*normal)
    side_a, _, _ = brenier_map(x[None, :] - offset * normal[None, :], cfg)
    side_b, _, _ = brenier_map(x[None, :] + offset * normal[None, :], cfg)
    measured = float(np.hypot(*(side_b[0] - side_a[0])))
    analytic = (1.0 - cfg.lam) * float(np.hypot(*(s.sites[i] - s.sites[j])))
    return measured, analytic


def convexity_probe(cfg: TransportConfig, n_triples: int = 10_000) -> bool:
    """Strong midpoint convexity with modulus lam:
    Phi(m) <= (Phi(a) + Phi(b)) / 2 - lam |a - b|^2 / 8 + 1e-12."""
    rng = np.random.default_rng(cfg.seed + 2)
    d = cfg.siteset.domain
    a = np.column_stack([rng.uniform(d.x0, d.x1, n_triples), rng.uniform(d.y0, d.y1, n_triples)])
    b = np.column_stack([rng.uniform(d.x0, d.x1, n_triples), rng.uniform(d.y0, d.y1, n_triples)])
    m = 0.5 * (a + b)
    lhs = transport_potential(m, cfg)
    rhs = (
        0.5 * (transport_potential(a, cfg) + transport_potential(b, cfg))
        - cfg.lam / 8.0 * ((a - b) ** 2).sum(axis=1)
    )
    return bool((lhs <= rhs + 1e-12).all())


def semidiscrete_limit_cost(cfg: TransportConfig):
    """Quadratic transport costs (cost_lam, cost_0): the shrinking map versus
    the lam -> 0 limit sending every point to its cell's site. The map formula
    makes cost_lam = (1 - lam)^2 cost_0 identically."""
    pts = cfg.grid.points()
    w = cfg.grid.h ** 2 / cfg.siteset.domain.area
    mapped, labels, _ = brenier_map(pts, cfg)
    cost_lam = float((((pts - mapped) ** 2).sum(axis=1)).sum() * w)
    cost_0 = float((((pts - cfg.siteset.sites[labels]) ** 2).sum(axis=1)).sum() * w)
    return cost_lam, cost_0


def relabeled_cost(cfg: TransportConfig, perm: np.ndarray) -> float:
    """Quadrature cost of sending each cell to a permuted site."""
    pts = cfg.grid.points()
    w = cfg.grid.h ** 2 / cfg.siteset.domain.area
    _, labels, _ = brenier_map(pts, cfg)
    targets = cfg.siteset.sites[np.asarray(perm)[labels]]
    return float((((pts - targets) ** 2).sum(axis=1)).sum() * w)


@dataclass
class DiscreteOTResult:
    cost: float
    nearest_plan_cost: float
    renormalized: bool


def discrete_ot_oracle(cfg: TransportConfig, n_atoms: int = 400, targets: str = "areas") -> DiscreteOTResult:
    """Exact discrete optimal transport of equal-mass grid atoms to the sites.

    Atoms sit on a k x k grid (k = round(sqrt(n_atoms))). Target masses are the
    oracle cell-area fractions (``targets='areas'``) or the atom-counted shares
    (``targets='atoms'``, whose optimum is exactly the nearest-power-site plan).
    Solved as a small transportation LP with scipy's HiGHS backend.
    """
    from scipy.optimize import linprog
    from scipy.sparse import lil_matrix

    k = int(round(math.sqrt(n_atoms)))
    if k * k > 400:
        raise ValueError("oracle is restricted to at most 400 atoms")
    d = cfg.siteset.domain
    atom_grid = GridSpec(k, k, d)
    atoms = atom_grid.points()
    m = len(atoms)
    n = cfg.siteset.n_sites
    _, labels, _ = brenier_map(atoms, cfg)
    if targets == "areas":
        areas = cell_areas(rasterize_tessellation(cfg.siteset, cfg.grid, "power"))
        nu = areas / d.area
    elif targets == "atoms":
        nu = np.bincount(labels, minlength=n) / m
    else:
        raise ValueError(f"unknown targets {targets!r}")
    renorm = abs(nu.sum() - 1.0) > 1e-12
    nu = nu / nu.sum()

    cost = ((atoms[:, None, :] - cfg.siteset.sites[None, :, :]) ** 2).sum(-1)
    c = cost.ravel()
    A = lil_matrix((m + n, m * n))
    for a in range(m):
        A[a, a * n : (a + 1) * n] = 1.0
    for i in range(n):
        A[m + i, i::n] = 1.0
    rhs = np.concatenate([np.full(m, 1.0 / m), nu])
    res = linprog(c, A_eq=A.tocsr(), b_eq=rhs, bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    nearest = float(cost[np.arange(m), labels].sum() / m)
    return DiscreteOTResult(cost=float(res.fun), nearest_plan_cost=nearest, renormalized=renorm)


@dataclass
class TransportReport:
    """Aggregated results of one (lam, siteset) experiment, JSON-serializable."""

    lam: float
    cell_areas: list
    pushforward: PushforwardReport = None
    residuals: list = None
    hessian: HessianReport = None
    jumps: list = field(default_factory=list)
    convex: bool = None
    cost_lam: float = None
    cost_0: float = None

    def to_dict(self) -> dict:
        out = {
            "lam": self.lam,
            "cell_areas": list(map(float, self.cell_areas)),
            "convex": self.convex,
            "cost_lam": self.cost_lam,
            "cost_0": self.cost_0,
            "jumps": self.jumps,
        }
        if self.pushforward is not None:
            out["pushforward"] = {
                "n_samples": self.pushforward.n_samples,
                "n_boundary_skipped": self.pushforward.n_boundary_skipped,
                "n_violations": self.pushforward.n_violations,
                "violation_examples": self.pushforward.violation_examples,
                "cell_share": self.pushforward.cell_share.tolist(),
                "expected_share": self.pushforward.expected_share.tolist(),
                "max_abs_z": self.pushforward.max_abs_z,
            }
        if self.residuals is not None:
            out["brenier_residuals"] = dict(zip(MONOMIAL_NAMES, map(float, self.residuals)))
        if self.hessian is not None:
            out["hessian"] = {
                "n_checked": self.hessian.n_checked,
                "n_skipped": self.hessian.n_skipped,
                "max_det_error": self.hessian.max_det_error,
                "max_identity_error": self.hessian.max_identity_error,
            }
        return out


def run_transport_report(cfg: TransportConfig, jumps_for: int = 3) -> TransportReport:
    """The full battery for one configuration."""
    areas = cell_areas(rasterize_tessellation(cfg.siteset, cfg.grid, "power"))
    report = TransportReport(lam=cfg.lam, cell_areas=areas.tolist())
    report.pushforward = pushforward_check(cfg)
    report.residuals = brenier_residual(cfg).tolist()
    report.hessian = hessian_determinant_check(cfg)
    for i, j in adjacent_cell_pairs(cfg)[:jumps_for]:
        measured, analytic = gradient_jump(cfg, i, j)
        report.jumps.append(
            {"cells": [int(i), int(j)], "measured": measured, "analytic": analytic}
        )
    report.convex = convexity_probe(cfg)
    report.cost_lam, report.cost_0 = semidiscrete_limit_cost(cfg)
    return report
