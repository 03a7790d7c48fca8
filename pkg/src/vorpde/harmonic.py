"""Harmonic potential on a box with disks removed, and the tessellation its
steepest-ascent streamlines induce.

The potential solves the 5-point Laplace equations with u = 1 on the disk
boundaries and u = 0 on the outer box (the finite stand-in for decay at
infinity; make the box generously larger than the site hull). Streamlines of
grad u started anywhere in the interior climb into one of the disks, labeling
the start point; stagnation and separatrix starts stay unassigned and are
counted, never forced.

Also provides the logarithmic point-source superposition sum_i ln|x - x_i| / 2pi
(the plane fundamental-solution field for unit sources).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import GridSpec, LabelGrid, PLANE, ScalarField, SiteSet, UNASSIGNED

DISK = 1
OUTER = 2
INTERIOR = 0


@dataclass
class PerforatedProblem:
    """Laplace problem on the grid domain with eps-disks removed around sites."""

    siteset: SiteSet
    eps_disk: float
    grid: GridSpec
    tol: float = 1e-8
    omega: float = None  # over-relaxation factor; defaults near-optimal for the grid
    max_sweeps: int = 100_000

    def __post_init__(self):
        g = self.grid
        if self.eps_disk < 2 * g.h:
            raise ValueError("disks must span at least two grid cells")
        if self.omega is None:
            self.omega = 2.0 / (1.0 + math.sin(math.pi / max(g.nx, g.ny)))
        if not (1.0 < self.omega < 2.0):
            raise ValueError("over-relaxation factor must lie in (1, 2)")
        s = self.siteset.sites
        d = g.domain
        clearance = self.eps_disk + 2 * g.h
        for sx, sy in s:
            if not (
                d.x0 + clearance <= sx <= d.x1 - clearance
                and d.y0 + clearance <= sy <= d.y1 - clearance
            ):
                raise ValueError("disks must sit inside the domain with 2h clearance")
        for i in range(len(s)):
            for j in range(i + 1, len(s)):
                if np.hypot(*(s[i] - s[j])) < 2 * self.eps_disk + 2 * g.h:
                    raise ValueError("disks must be pairwise disjoint with 2h clearance")
        self.mask = self._build_mask()
        if (self.mask == INTERIOR).sum() == 0:
            raise ValueError("no interior nodes left after masking")

    def _build_mask(self) -> np.ndarray:
        g = self.grid
        mask = np.full((g.ny, g.nx), INTERIOR, dtype=np.uint8)
        mask[0, :] = mask[-1, :] = OUTER
        mask[:, 0] = mask[:, -1] = OUTER
        X, Y = g.mesh()
        for sx, sy in self.siteset.sites:
            mask[np.hypot(X - sx, Y - sy) <= self.eps_disk] = DISK
        return mask

    def disk_label_at(self, points: np.ndarray) -> np.ndarray:
        """Index of the disk containing each point, or UNASSIGNED."""
        pts = np.atleast_2d(points)
        d = np.sqrt(
            ((pts[:, None, :] - self.siteset.sites[None, :, :]) ** 2).sum(-1)
        )
        inside = d <= self.eps_disk
        out = np.where(inside.any(axis=1), inside.argmax(axis=1), UNASSIGNED)
        return out.astype(np.int32)


@dataclass
class SolveInfo:
    sweeps: int
    final_update: float
    update_history: np.ndarray
    converged: bool


def solve_harmonic(problem: PerforatedProblem):
    """Red-black SOR for the 5-point Laplace stencil; returns (field, info).

    Convergence is declared when the max nodal update of a full sweep drops
    below tol; failure to converge within the sweep cap raises.
    """
    g = problem.grid
    mask = problem.mask
    u = np.zeros((g.ny, g.nx))
    u[mask == DISK] = 1.0
    interior = mask == INTERIOR
    iy, ix = np.indices(u.shape)
    red = interior & ((ix + iy) % 2 == 0)
    black = interior & ((ix + iy) % 2 == 1)
    omega = problem.omega
    history = []
    for sweep in range(1, problem.max_sweeps + 1):
        biggest = 0.0
        for color in (red, black):
            avg = np.zeros_like(u)
            avg[1:-1, 1:-1] = 0.25 * (
                u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:]
            )
            delta = omega * (avg - u)
            step = np.abs(delta[color]).max() if color.any() else 0.0
            biggest = max(biggest, step)
            u[color] += delta[color]
        history.append(biggest)
        if biggest < problem.tol:
            field = ScalarField(g, u).assert_finite()
            return field, SolveInfo(sweep, biggest, np.asarray(history), True)
    raise RuntimeError(
        f"SOR did not reach tol={problem.tol} in {problem.max_sweeps} sweeps "
        f"(last update {history[-1]:.3e})"
    )


def maximum_principle_check(fieldgrid: ScalarField, problem: PerforatedProblem) -> bool:
    """Interior values must lie strictly inside (0, 1) and no interior node may
    exceed all four neighbors by more than the solver tolerance."""
    u = fieldgrid.values
    interior = problem.mask == INTERIOR
    vals = u[interior]
    if not ((vals > 0.0).all() and (vals < 1.0).all()):
        return False
    nb_max = np.full_like(u, -np.inf)
    nb_max[1:-1, 1:-1] = np.maximum.reduce(
        [u[:-2, 1:-1], u[2:, 1:-1], u[1:-1, :-2], u[1:-1, 2:]]
    )
    bulge = (u - nb_max)[interior]
    return bool((bulge <= problem.tol).all())


def _gradient_fields(fieldgrid: ScalarField):
    u = fieldgrid.values
    h = fieldgrid.spec.h
    gx = np.gradient(u, h, axis=1)
    gy = np.gradient(u, h, axis=0)
    return gx, gy


def _bilinear(values: np.ndarray, grid: GridSpec, pts: np.ndarray) -> np.ndarray:
    fx = np.clip((pts[:, 0] - grid.domain.x0) / grid.h - 0.5, 0.0, grid.nx - 1.0)
    fy = np.clip((pts[:, 1] - grid.domain.y0) / grid.h - 0.5, 0.0, grid.ny - 1.0)
    ix0 = np.minimum(fx.astype(int), grid.nx - 2)
    iy0 = np.minimum(fy.astype(int), grid.ny - 2)
    tx = fx - ix0
    ty = fy - iy0
    v00 = values[iy0, ix0]
    v10 = values[iy0, ix0 + 1]
    v01 = values[iy0 + 1, ix0]
    v11 = values[iy0 + 1, ix0 + 1]
    return (
        v00 * (1 - tx) * (1 - ty)
        + v10 * tx * (1 - ty)
        + v01 * (1 - tx) * ty
        + v11 * tx * ty
    )


def ascend_streamlines(
    fieldgrid: ScalarField,
    problem: PerforatedProblem,
    starts: np.ndarray,
    max_steps: int = 10_000,
    grad_floor: float = 1e-12,
) -> np.ndarray:
    """March dx/ds = grad u / |grad u| with step h/2 from each start until a
    disk is entered (its label), the gradient stalls, the path leaves the
    domain, or the step budget runs out (UNASSIGNED)."""
    g = fieldgrid.spec
    gx, gy = _gradient_fields(fieldgrid)
    pts = np.atleast_2d(np.asarray(starts, dtype=float)).copy()
    n = len(pts)
    labels = np.full(n, UNASSIGNED, dtype=np.int32)
    active = np.ones(n, dtype=bool)
    step = g.h / 2.0
    d = g.domain
    hit0 = problem.disk_label_at(pts)
    labels[hit0 >= 0] = hit0[hit0 >= 0]
    active[hit0 >= 0] = False
    for _ in range(max_steps):
        if not active.any():
            break
        cur = pts[active]
        vx = _bilinear(gx, g, cur)
        vy = _bilinear(gy, g, cur)
        norm = np.hypot(vx, vy)
        stalled = norm < grad_floor
        scale = np.where(stalled, 1.0, norm)
        cur = cur + step * np.column_stack([vx / scale, vy / scale])
        outside = (
            (cur[:, 0] < d.x0) | (cur[:, 0] > d.x1) | (cur[:, 1] < d.y0) | (cur[:, 1] > d.y1)
        )
        hit = problem.disk_label_at(cur)
        idx = np.nonzero(active)[0]
        labels[idx[hit >= 0]] = hit[hit >= 0]
        done = stalled | outside | (hit >= 0)
        pts[idx] = cur
        active[idx[done]] = False
    return labels


def steepest_ascent_label(fieldgrid: ScalarField, problem: PerforatedProblem, x0) -> int:
    """Streamline label of a single interior start point."""
    return int(ascend_streamlines(fieldgrid, problem, np.asarray(x0, float)[None, :])[0])


@dataclass
class TessellationReport:
    unassigned_fraction: float
    mismatch_vs_voronoi: float
    solver_sweeps: int
    solver_residual: float

    def to_dict(self) -> dict:
        return {
            "unassigned_fraction": self.unassigned_fraction,
            "mismatch_vs_voronoi": self.mismatch_vs_voronoi,
            "solver_iterations": self.solver_sweeps,
            "residual": self.solver_residual,
        }


def harmonic_tessellation(problem: PerforatedProblem):
    """Streamline label for every non-disk node; disk nodes take their disk id.

    Returns (LabelGrid, TessellationReport, ScalarField). The mismatch against
    the exact Voronoi rasterization (band 2h) is reported, not asserted: the
    streamline tessellation need not coincide with it.
    """
    from .geometry import mismatch_fraction, rasterize_tessellation

    fieldgrid, info = solve_harmonic(problem)
    g = problem.grid
    pts = g.points()
    mask = problem.mask.ravel()
    labels = np.full(len(pts), UNASSIGNED, dtype=np.int32)
    stream = mask == INTERIOR
    labels[stream] = ascend_streamlines(fieldgrid, problem, pts[stream])
    disk_ids = problem.disk_label_at(pts[mask == DISK])
    labels[mask == DISK] = disk_ids
    lg = LabelGrid(g, labels.reshape(g.ny, g.nx))
    oracle = rasterize_tessellation(problem.siteset, g, "voronoi")
    # the outer Dirichlet ring is not streamed; drop it from the comparison
    # by zeroing its reference gap (the band filter then excludes it)
    gaps = oracle.gaps.copy()
    gaps[problem.mask == OUTER] = 0.0
    reference = LabelGrid(g, oracle.labels, gaps=gaps)
    report = TessellationReport(
        unassigned_fraction=float((labels[stream] == UNASSIGNED).mean()),
        mismatch_vs_voronoi=mismatch_fraction(lg, reference, 2 * g.h),
        solver_sweeps=info.sweeps,
        solver_residual=info.final_update,
    )
    return lg, report, fieldgrid


def log_superposition_field(siteset: SiteSet, grid: GridSpec):
    """sum_i ln|x - x_i| / 2pi at every node; per-site distances are clamped
    to h/2 so nodes on top of a site stay finite. Returns (field, clamped_mask)."""
    if siteset.topology != PLANE:
        raise ValueError("the logarithmic superposition lives on the plane")
    pts = grid.points()
    d = np.sqrt(((pts[:, None, :] - siteset.sites[None, :, :]) ** 2).sum(-1))
    clamped = (d < grid.h / 2).any(axis=1)
    vals = np.log(np.maximum(d, grid.h / 2)).sum(axis=1) / (2.0 * math.pi)
    field = ScalarField(grid, vals.reshape(grid.ny, grid.nx)).assert_finite()
    return field, clamped.reshape(grid.ny, grid.nx)
