"""Multi-source eikonal solver: first-order upwind fast marching for |grad T| = 1,
upwind label propagation, per-source distance stacks, and extraction of the
front-collision (singular) set for comparison with the exact cell boundaries.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .geometry import GridSpec, LabelGrid, PLANE, SiteSet, UNASSIGNED, ScalarField


@dataclass
class ArrivalField:
    """Arrival times and upwind source labels from a completed fast march.

    ``order`` records the flat node indices in acceptance sequence; times are
    non-decreasing along it.
    """

    spec: GridSpec
    times: np.ndarray
    labels: np.ndarray
    order: np.ndarray

    def label_grid(self) -> LabelGrid:
        return LabelGrid(self.spec, self.labels)

    def time_field(self) -> ScalarField:
        return ScalarField(self.spec, self.times)


@dataclass
class SingularSet:
    """Nodes where the two earliest fronts arrive within tau of each other."""

    mask: np.ndarray
    tau: float

    def node_indices(self) -> np.ndarray:
        return np.argwhere(self.mask)


def snap_to_node(siteset: SiteSet, grid: GridSpec):
    """Nearest node (ix, iy) for each site."""
    out = []
    for sx, sy in siteset.sites:
        ix = min(grid.nx - 1, max(0, int((sx - grid.domain.x0) / grid.h)))
        iy = min(grid.ny - 1, max(0, int((sy - grid.domain.y0) / grid.h)))
        out.append((ix, iy))
    return out


def fast_march(siteset: SiteSet, grid: GridSpec) -> ArrivalField:
    """First-order upwind fast marching from all sites at time zero.

    Each accepted node solves the standard two-neighbor upwind quadratic from
    its accepted 4-neighbors; labels follow the smaller-time neighbor, with
    the lower site index on exact ties. Narrow-band heap ties break on node
    index, so the sweep is fully deterministic.
    """
    if siteset.topology != PLANE:
        raise ValueError("fast marching runs on the plane")
    nx, ny, h = grid.nx, grid.ny, grid.h
    n = nx * ny
    INF = math.inf
    T = [INF] * n
    lab = [UNASSIGNED] * n
    accepted = bytearray(n)
    heap = []
    push = heapq.heappush
    pop = heapq.heappop

    for k, (ix, iy) in enumerate(snap_to_node(siteset, grid)):
        idx = iy * nx + ix
        if not accepted[idx] and T[idx] > 0.0:  # first (lowest-index) site wins
            T[idx] = 0.0
            lab[idx] = k
            push(heap, (0.0, idx))

    sqrt = math.sqrt
    hh2 = 2.0 * h * h
    order = []
    append_order = order.append
    while heap:
        t, idx = pop(heap)
        if accepted[idx]:
            continue
        accepted[idx] = 1
        append_order(idx)
        ix = idx % nx
        iy = idx // nx
        # relax the four neighbors
        for jx, jy in ((ix - 1, iy), (ix + 1, iy), (ix, iy - 1), (ix, iy + 1)):
            if jx < 0 or jx >= nx or jy < 0 or jy >= ny:
                continue
            jdx = jy * nx + jx
            if accepted[jdx]:
                continue
            a = INF
            la = UNASSIGNED
            if jx > 0 and accepted[jdx - 1] and T[jdx - 1] < a:
                a = T[jdx - 1]
                la = lab[jdx - 1]
            if jx < nx - 1 and accepted[jdx + 1] and T[jdx + 1] < a:
                a = T[jdx + 1]
                la = lab[jdx + 1]
            b = INF
            lb = UNASSIGNED
            if jy > 0 and accepted[jdx - nx] and T[jdx - nx] < b:
                b = T[jdx - nx]
                lb = lab[jdx - nx]
            if jy < ny - 1 and accepted[jdx + nx] and T[jdx + nx] < b:
                b = T[jdx + nx]
                lb = lab[jdx + nx]
            if a < INF and b < INF:
                d = a - b
                if d >= h:
                    tn = b + h
                    ln = lb
                elif d <= -h:
                    tn = a + h
                    ln = la
                else:
                    tn = 0.5 * (a + b + sqrt(hh2 - d * d))
                    if a < b:
                        ln = la
                    elif b < a:
                        ln = lb
                    else:
                        ln = la if la < lb else lb
            elif a < INF:
                tn = a + h
                ln = la
            else:
                tn = b + h
                ln = lb
            if tn < T[jdx]:
                T[jdx] = tn
                lab[jdx] = ln
                push(heap, (tn, jdx))

    return ArrivalField(
        spec=grid,
        times=np.asarray(T, dtype=float).reshape(ny, nx),
        labels=np.asarray(lab, dtype=np.int32).reshape(ny, nx),
        order=np.asarray(order, dtype=np.int64),
    )


def per_source_distance_stack(siteset: SiteSet, grid: GridSpec):
    """Independent fast march per source; field k approximates d(x, x_k)."""
    fields = []
    for k in range(siteset.n_sites):
        single = SiteSet(
            sites=siteset.sites[k : k + 1],
            domain=siteset.domain,
            topology=siteset.topology,
        )
        fields.append(fast_march(single, grid).times)
    return fields


def extract_singular_set(stack, tau: float = None, grid: GridSpec = None) -> SingularSet:
    """Nodes where the second-earliest front trails the earliest by less than tau
    (the fronts-collide criterion). Default tau = 2h when a grid is given."""
    arr = np.stack(stack, axis=0)
    if tau is None:
        if grid is None:
            raise ValueError("need tau or a grid to default tau = 2h")
        tau = 2.0 * grid.h
    if arr.shape[0] < 2:
        return SingularSet(np.zeros(arr.shape[1:], dtype=bool), tau)
    part = np.partition(arr, 1, axis=0)
    return SingularSet((part[1] - part[0]) < tau, tau)


def front_snapshots(stack, times, spec: GridSpec):
    """Label grids of the expanding fronts: at snapshot time T*, a node takes
    the label of the earliest-arriving front if it has arrived, else UNASSIGNED."""
    arr = np.stack(stack, axis=0)
    winner = np.argmin(arr, axis=0).astype(np.int32)
    tmin = arr.min(axis=0)
    out = []
    for tstar in times:
        labels = np.where(tmin <= tstar, winner, UNASSIGNED).astype(np.int32)
        out.append(LabelGrid(spec, labels))
    return out
