"""Agent-based colonization game: Brownian explorers claim territory for their
source and reset to it on touching the domain wall or coming within a coalition
radius of an opposing trajectory.

Semantics follow the executable reference behavior exactly: per step each
particle draws two standard normals, the candidate position is tested first
against the open domain (exit resets to the source), then, once the warmup has
elapsed, against all opposing trajectory points stored through the current
iteration (candidate within epsilon resets to the source). New positions only
enter the history after the whole sweep, so decisions within one step never
see one another. Populations stay constant: a reset particle resumes walking
from its source.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import GridSpec, LabelGrid, Rect, SiteSet, UNASSIGNED, label_points


@dataclass
class SimParams:
    """Colonization run parameters (defaults at the reference scale:
    100 particles per source, step 1/10, coalition radius 0.01, warmup 5,
    on the [0, 2]^2 box)."""

    n_sources: int
    particles_per_source: int = 100
    iterations: int = 500
    step: float = 0.1
    epsilon: float = 0.01
    warmup: int = 5
    domain: Rect = field(default_factory=lambda: Rect(0.0, 2.0, 0.0, 2.0))
    seed: int = 0

    def __post_init__(self):
        if self.n_sources < 1:
            raise ValueError("need at least one source")
        if self.particles_per_source < 1:
            raise ValueError("need at least one particle per source")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")


class CoalitionIndex:
    """Spatial hash over stored trajectory points, bucket side = epsilon,
    entries tagged by source. A query needs only the 3x3 bucket neighborhood
    because any point within epsilon differs by less than one bucket per axis."""

    def __init__(self, n_sources: int, epsilon: float):
        self.epsilon = epsilon
        self.inv = 1.0 / epsilon
        self.buckets = [dict() for _ in range(n_sources)]
        self.count = 0

    def insert(self, source: int, x: float, y: float):
        key = (math.floor(x * self.inv), math.floor(y * self.inv))
        self.buckets[source].setdefault(key, []).append((x, y))
        self.count += 1

    def near_other(self, source: int, x: float, y: float) -> bool:
        e2 = self.epsilon * self.epsilon
        bx = math.floor(x * self.inv)
        by = math.floor(y * self.inv)
        for s, bucket in enumerate(self.buckets):
            if s == source:
                continue
            for kx in (bx - 1, bx, bx + 1):
                for ky in (by - 1, by, by + 1):
                    pts = bucket.get((kx, ky))
                    if pts:
                        for px, py in pts:
                            dx = px - x
                            dy = py - y
                            if dx * dx + dy * dy < e2:
                                return True
        return False


@dataclass
class SwarmState:
    sources: np.ndarray  # (n, 2)
    history: np.ndarray  # (n, m, iterations + 1, 2); [:, :, :t+1] is valid
    normals: np.ndarray  # (n, m, iterations, 2) pregenerated per-particle draws
    t: int = 0
    n_coalitions: int = 0
    n_boundary_resets: int = 0
    oracle_disagreements: int = 0

    @property
    def n_sources(self) -> int:
        return self.history.shape[0]

    @property
    def particles_per_source(self) -> int:
        return self.history.shape[1]

    def positions(self) -> np.ndarray:
        return self.history[:, :, self.t, :]

    def trajectory_points(self) -> np.ndarray:
        """All stored points so far as a flat ((t+1) * n * m, 2) array."""
        return self.history[:, :, : self.t + 1, :].reshape(-1, 2)

    def trajectory_sources(self) -> np.ndarray:
        n, m = self.n_sources, self.particles_per_source
        return np.repeat(np.arange(n), m * (self.t + 1))


def init_swarm(params: SimParams):
    """Seeded sources uniform in the domain; every particle starts at its source.

    Each particle owns an independent substream, so its whole sequence of
    normal draws is fixed by (seed, source, particle) regardless of sweep
    order.
    """
    root = np.random.SeedSequence(params.seed)
    children = root.spawn(1 + params.n_sources * params.particles_per_source)
    src_rng = np.random.Generator(np.random.PCG64(children[0]))
    d = params.domain
    n, m = params.n_sources, params.particles_per_source
    sources = np.column_stack(
        [src_rng.uniform(d.x0, d.x1, n), src_rng.uniform(d.y0, d.y1, n)]
    )
    normals = np.empty((n, m, params.iterations, 2))
    for i in range(n):
        for j in range(m):
            gen = np.random.Generator(np.random.PCG64(children[1 + i * m + j]))
            normals[i, j] = gen.standard_normal((params.iterations, 2))
    history = np.empty((n, m, params.iterations + 1, 2))
    history[:, :, 0, :] = sources[:, None, :]
    state = SwarmState(sources=sources, history=history, normals=normals)
    siteset = SiteSet(sites=sources.copy(), domain=d)
    return siteset, state


def coalition_bruteforce(state: SwarmState, source: int, x: float, y: float, epsilon: float) -> bool:
    """Exhaustive scan over all opposing trajectory points through iteration t;
    the independent oracle for the spatial-hash decision."""
    best = None
    hist = state.history[:, :, : state.t + 1, :]
    for s in range(state.n_sources):
        if s == source:
            continue
        d2 = ((hist[s] - [x, y]) ** 2).sum(axis=-1).min()
        best = d2 if best is None else min(best, d2)
    return best is not None and best < epsilon * epsilon


def step_swarm(
    state: SwarmState, params: SimParams, index: CoalitionIndex, oracle_check: bool = False
) -> SwarmState:
    """Advance every particle one iteration in source-major, particle-minor order.

    ``oracle_check`` replays each coalition decision with the exhaustive scan
    and counts disagreements (none expected).
    """
    if state.t >= params.iterations:
        raise ValueError("simulation already ran its configured iterations")
    d = params.domain
    h = params.step
    t = state.t
    warm = t >= params.warmup
    n, m = state.n_sources, state.particles_per_source
    draws = state.normals[:, :, t, :].tolist()
    pos = state.history[:, :, t, :].tolist()
    new = np.empty((n, m, 2))
    for i in range(n):
        sx, sy = state.sources[i]
        for j in range(m):
            rx, ry = draws[i][j]
            px, py = pos[i][j]
            cx = px + h * rx
            cy = py + h * ry
            if cx >= d.x1 or cx <= d.x0 or cy >= d.y1 or cy <= d.y0:
                new[i, j] = sx, sy
                state.n_boundary_resets += 1
                continue
            if warm:
                hit = index.near_other(i, cx, cy)
                if oracle_check and hit != coalition_bruteforce(state, i, cx, cy, params.epsilon):
                    state.oracle_disagreements += 1
                if hit:
                    new[i, j] = sx, sy
                    state.n_coalitions += 1
                    continue
            new[i, j] = cx, cy
    state.history[:, :, t + 1, :] = new
    for i in range(n):
        for j in range(m):
            index.insert(i, new[i, j, 0], new[i, j, 1])
    state.t = t + 1
    return state


@dataclass
class ColonizeMetrics:
    per_source_fraction: np.ndarray
    global_fraction: float
    n_coalitions: int
    n_boundary_resets: int

    def to_dict(self) -> dict:
        return {
            "per_source_fraction": self.per_source_fraction.tolist(),
            "global_fraction": self.global_fraction,
            "n_coalitions": self.n_coalitions,
            "n_boundary_resets": self.n_boundary_resets,
        }


def territory_metrics(state: SwarmState, siteset: SiteSet) -> ColonizeMetrics:
    """Fraction of each source's trajectory points inside its exact cell."""
    pts = state.trajectory_points()
    owners = state.trajectory_sources()
    labels, _ = label_points(pts, siteset, mode="voronoi")
    correct = labels == owners
    n = state.n_sources
    per = np.array([correct[owners == i].mean() for i in range(n)])
    return ColonizeMetrics(
        per_source_fraction=per,
        global_fraction=float(correct.mean()),
        n_coalitions=state.n_coalitions,
        n_boundary_resets=state.n_boundary_resets,
    )


def run_colonization(params: SimParams, oracle_check: bool = False):
    """Full seeded run: init, params.iterations steps, territory metrics."""
    siteset, state = init_swarm(params)
    index = CoalitionIndex(params.n_sources, params.epsilon)
    for i in range(params.n_sources):
        for j in range(params.particles_per_source):
            index.insert(i, state.history[i, j, 0, 0], state.history[i, j, 0, 1])
    for _ in range(params.iterations):
        step_swarm(state, params, index, oracle_check=oracle_check)
    return siteset, state, territory_metrics(state, siteset)


def render_swarm(state: SwarmState, siteset: SiteSet, grid: GridSpec, radius: float) -> LabelGrid:
    """Grid nodes take the source label of the nearest trajectory point within
    the given radius (2 * step by convention), else UNASSIGNED."""
    from scipy.spatial import cKDTree

    pts = state.trajectory_points()
    owners = state.trajectory_sources()
    tree = cKDTree(pts)
    dist, idx = tree.query(grid.points(), distance_upper_bound=radius)
    labels = np.where(np.isfinite(dist), owners[np.minimum(idx, len(pts) - 1)], UNASSIGNED)
    return LabelGrid(grid, labels.astype(np.int32).reshape(grid.ny, grid.nx))
