"""Experiment dispatch: runs one configured experiment, writes its artifacts
(images, delimited outputs, matplotlib figures) plus a manifest of file hashes
and assertion outcomes.

Exit code contract: 0 when every module-level assertion passed, 2 when outputs
were produced but an assertion failed, 1 (raised to the CLI) on errors.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import colonize as colmod
from . import eikonal as eikmod
from . import figures
from . import formats
from . import harmonic as harmod
from . import heatfront as heatmod
from . import transport as tramod
from .config import ExperimentConfig, build_siteset
from .geometry import (
    GridSpec,
    LabelGrid,
    Rect,
    SiteSet,
    UNASSIGNED,
    boundary_nodes,
    mismatch_fraction,
    node_set_hausdorff,
    rasterize_tessellation,
)


@dataclass
class Assertion:
    name: str
    passed: bool
    value: float = None
    tolerance: float = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "pass": bool(self.passed),
            "value": None if self.value is None else float(self.value),
            "tolerance": None if self.tolerance is None else float(self.tolerance),
        }


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(outdir: Path, cfg: ExperimentConfig, files: list, assertions: list) -> Path:
    manifest = {
        "experiment": cfg.experiment,
        "config_echo": cfg.echo(),
        "files": [
            {"name": Path(f).name, "sha256": _sha256(f)} for f in sorted(files, key=lambda f: Path(f).name)
        ],
        "assertions": [a.to_dict() for a in assertions],
    }
    return formats.write_json(outdir / "manifest.json", manifest)


def _grid(cfg: ExperimentConfig) -> GridSpec:
    n = cfg["grid"]
    return GridSpec(n, n, Rect(*cfg["domain"]))


def _run_voronoi(cfg: ExperimentConfig, outdir: Path):
    siteset = build_siteset(cfg)
    grid = _grid(cfg)
    lg = rasterize_tessellation(siteset, grid, cfg["mode"])
    files = [
        formats.write_pgm(outdir / "cells.pgm", lg, siteset),
        outdir / "cells.pgm.txt",
        formats.write_ppm(outdir / "cells.ppm", lg, siteset),
        outdir / "cells.ppm.txt",
    ]
    mask = boundary_nodes(lg)
    X, Y = grid.mesh()
    rows = [
        [int(ix), int(iy), float(X[iy, ix]), float(Y[iy, ix])]
        for iy, ix in np.argwhere(mask)
    ]
    files.append(formats.write_csv(outdir / "boundary.csv", ["ix", "iy", "x", "y"], rows))
    files.append(figures.save_label_figure(outdir / "cells.png", lg, siteset, title="cells"))

    equal = SiteSet(sites=siteset.sites, weights=np.zeros(siteset.n_sites), domain=siteset.domain)
    same = np.array_equal(
        rasterize_tessellation(equal, grid, "voronoi").labels,
        rasterize_tessellation(equal, grid, "power").labels,
    )
    again = rasterize_tessellation(siteset, grid, cfg["mode"])
    deterministic = np.array_equal(lg.labels, again.labels)
    assertions = [
        Assertion("voronoi.power_equalweights_identity", bool(same)),
        Assertion("voronoi.rasterize_deterministic", bool(deterministic)),
    ]
    return files, assertions


def _run_colonize(cfg: ExperimentConfig, outdir: Path):
    params = colmod.SimParams(
        n_sources=cfg["n_sources"],
        particles_per_source=cfg["particles"],
        iterations=cfg["iterations"],
        step=cfg["step"],
        epsilon=cfg["epsilon"],
        warmup=cfg["warmup"],
        domain=Rect(*cfg["domain"]),
        seed=cfg["seed"],
    )
    siteset, state, metrics = colmod.run_colonization(params)
    grid = _grid(cfg)
    lg = colmod.render_swarm(state, siteset, grid, radius=2 * params.step)
    rows = []
    hist = state.history
    for i in range(params.n_sources):
        for j in range(params.particles_per_source):
            for t in range(state.t + 1):
                rows.append([i, j, t, float(hist[i, j, t, 0]), float(hist[i, j, t, 1])])
    files = [
        formats.write_csv(outdir / "trajectories.csv", ["source", "particle", "iteration", "x", "y"], rows),
        formats.write_pgm(outdir / "swarm.pgm", lg, siteset),
        outdir / "swarm.pgm.txt",
        formats.write_ppm(outdir / "swarm.ppm", lg, siteset),
        outdir / "swarm.ppm.txt",
        figures.save_trajectory_figure(outdir / "swarm.png", state, siteset, title="colonization"),
    ]
    oracle = rasterize_tessellation(siteset, grid, "voronoi")
    render_mismatch = mismatch_fraction(lg, oracle, 2 * params.epsilon)
    payload = dict(metrics.to_dict(), render_mismatch_vs_voronoi=render_mismatch)
    files.append(formats.write_json(outdir / "metrics.json", payload))
    pts = state.trajectory_points()
    d = params.domain
    closure = bool(
        (pts[:, 0] >= d.x0).all()
        and (pts[:, 0] <= d.x1).all()
        and (pts[:, 1] >= d.y0).all()
        and (pts[:, 1] <= d.y1).all()
    )
    assertions = [
        Assertion(
            "colonize.global_fraction_min",
            metrics.global_fraction >= cfg["min_fraction"],
            value=metrics.global_fraction,
            tolerance=cfg["min_fraction"],
        ),
        Assertion("colonize.positions_inside_closed_domain", closure),
    ]
    return files, assertions


def _run_heat(cfg: ExperimentConfig, outdir: Path):
    siteset = build_siteset(cfg)
    weights = cfg.values.get("heat_weights")
    hc = heatmod.HeatConfig(siteset=siteset, weights_heat=weights, t=cfg["t"])
    grid = _grid(cfg)
    lab = heatmod.dominant_kernel_label(hc, grid)
    field = heatmod.heat_field(hc, grid)
    files = [
        formats.write_pgm(outdir / "dominant.pgm", lab, siteset),
        outdir / "dominant.pgm.txt",
        formats.write_field_raw(outdir / "field.f32", field, siteset),
        outdir / "field.f32.txt",
        figures.save_field_figure(
            outdir / "heat.png", field, siteset, title=f"heat field t={cfg['t']:g}", log_scale=True
        ),
    ]

    probes = []
    rows = []
    n_false = 0
    n_empty = 0
    thetas = heatmod.ray_fan(cfg["rays"])
    for i in range(siteset.n_sites):
        for theta in thetas:
            probe = heatmod.radial_monotonicity_probe(
                hc, i, theta, cfg["delta"], cfg["eps"], cfg["ds"]
            )
            if probe.verdict is None:
                n_empty += 1
            elif probe.verdict is False:
                n_false += 1
            probes.append(probe)
    first = next((p for p in probes if len(p.s)), None)
    if first is not None:
        for s, u in zip(first.s, first.u):
            rows.append([first.site, float(first.theta[0]), float(first.theta[1]), float(s), float(u)])
    files.append(
        formats.write_csv(outdir / "probes.csv", ["site", "theta_x", "theta_y", "s", "u"], rows)
    )
    if first is not None:
        files.append(
            figures.save_series_figure(
                outdir / "probe.png",
                [(first.s, np.maximum(first.u, 1e-300), f"site {first.site}")],
                xlabel="s",
                ylabel="u",
                title="radial probe",
                log_y=True,
            )
        )
    bounds = heatmod.kernel_gradient_bounds()
    files.append(formats.write_json(outdir / "bounds.json", bounds))

    assertions = [
        Assertion("heat.radial_probes_no_violations", n_false == 0, value=float(n_false)),
        Assertion("heat.empty_ray_ranges", True, value=float(n_empty)),
    ]
    mass = heatmod.kernel_mass_quadrature(hc)
    total = float(hc.weights_heat.sum())
    assertions.append(
        Assertion(
            "heat.mass_quadrature_relative",
            abs(mass - total) / total <= 1e-4,
            value=abs(mass - total) / total,
            tolerance=1e-4,
        )
    )
    if np.allclose(hc.weights_heat, hc.weights_heat[0]):
        oracle = rasterize_tessellation(siteset, grid, "voronoi")
        assertions.append(
            Assertion("heat.equalweight_matches_voronoi", bool(np.array_equal(lab.labels, oracle.labels)))
        )
    return files, assertions


def _run_eikonal(cfg: ExperimentConfig, outdir: Path):
    siteset = build_siteset(cfg, min_sep=0.35 * min(Rect(*cfg["domain"]).width, Rect(*cfg["domain"]).height))
    grid = _grid(cfg)
    af = eikmod.fast_march(siteset, grid)
    stack = eikmod.per_source_distance_stack(siteset, grid)
    tau = cfg.values.get("tau") or 2 * grid.h
    sing = eikmod.extract_singular_set(stack, tau=tau)
    files = [
        formats.write_field_raw(outdir / "times.f32", af.time_field(), siteset),
        outdir / "times.f32.txt",
        formats.write_pgm(outdir / "labels.pgm", af.label_grid(), siteset),
        outdir / "labels.pgm.txt",
        formats.write_mask_pgm(outdir / "singular.pgm", sing.mask, grid, siteset),
        outdir / "singular.pgm.txt",
    ]
    X, Y = grid.mesh()
    rows = [
        [int(ix), int(iy), float(X[iy, ix]), float(Y[iy, ix])] for iy, ix in sing.node_indices()
    ]
    files.append(formats.write_csv(outdir / "singular.csv", ["ix", "iy", "x", "y"], rows))
    files.append(
        figures.save_field_figure(
            outdir / "eikonal.png",
            af.time_field(),
            siteset,
            title="arrival time and collision set",
            overlay_mask=sing.mask,
        )
    )
    for k, tstar in enumerate(cfg.values.get("snapshots") or []):
        frame = eikmod.front_snapshots(stack, [tstar], grid)[0]
        files.append(formats.write_pgm(outdir / f"frame_{k:03d}.pgm", frame, siteset))
        files.append(outdir / f"frame_{k:03d}.pgm.txt")

    oracle = rasterize_tessellation(siteset, grid, "voronoi")
    band = 2 * math.sqrt(2) * grid.h
    mf = mismatch_fraction(af.label_grid(), oracle, band)
    hd = node_set_hausdorff(sing.mask, boundary_nodes(oracle), grid)
    assertions = [
        Assertion("eikonal.labels_match_oracle_outside_band", mf == 0.0, value=mf, tolerance=0.0),
        Assertion("eikonal.singular_hausdorff_3h", hd <= 3 * grid.h, value=hd, tolerance=3 * grid.h),
    ]
    if siteset.n_sites == 1:
        d = np.full((grid.ny, grid.nx), np.inf)
        for ix, iy in eikmod.snap_to_node(siteset, grid):
            sx = grid.domain.x0 + (ix + 0.5) * grid.h
            sy = grid.domain.y0 + (iy + 0.5) * grid.h
            d = np.minimum(d, np.hypot(X - sx, Y - sy))
        err = float(np.abs(af.times - d).max())
        assertions.append(
            Assertion("eikonal.single_source_error_2h", err <= 2 * grid.h, value=err, tolerance=2 * grid.h)
        )
    return files, assertions


def _run_transport(cfg: ExperimentConfig, outdir: Path):
    siteset = build_siteset(cfg, min_sep=0.3)
    grid = _grid(cfg)
    tc = tramod.TransportConfig(
        siteset=siteset, lam=cfg["lambda"], grid=grid, n_samples=cfg["samples"], seed=cfg["seed"]
    )
    report = tramod.run_transport_report(tc)
    formats.write_json(outdir / "report.json", report.to_dict())
    cells = rasterize_tessellation(siteset, grid, "power")
    member, owner = tramod.image_membership_any(grid.points(), tc)
    image_lg = LabelGrid(grid, np.where(member, owner, UNASSIGNED).reshape(grid.ny, grid.nx))
    rng = np.random.default_rng(cfg["seed"])
    d = siteset.domain
    n_csv = min(cfg["csv_samples"], cfg["samples"])
    pts = np.column_stack([rng.uniform(d.x0, d.x1, n_csv), rng.uniform(d.y0, d.y1, n_csv)])
    mapped, labels, _ = tramod.brenier_map(pts, tc)
    rows = [
        [float(x), float(y), int(lab), float(tx), float(ty)]
        for (x, y), lab, (tx, ty) in zip(pts, labels, mapped)
    ]
    files = [
        outdir / "report.json",
        formats.write_pgm(outdir / "cells.pgm", cells, siteset),
        outdir / "cells.pgm.txt",
        formats.write_pgm(outdir / "image_cells.pgm", image_lg, siteset),
        outdir / "image_cells.pgm.txt",
        formats.write_csv(outdir / "samples.csv", ["x", "y", "label", "Tx", "Ty"], rows),
        figures.save_label_figure(
            outdir / "transport.png", image_lg, siteset, title=f"image cells, lam={tc.lam:g}"
        ),
    ]
    res_tol = 5e-3 * max(1.0, 512.0 / grid.nx)  # first-order boundary quadrature
    jump_ok = all(abs(j["measured"] - j["analytic"]) <= 1e-4 for j in report.jumps)
    cost_ok = abs(report.cost_lam - (1 - tc.lam) ** 2 * report.cost_0) <= 1e-3 * report.cost_lam
    assertions = [
        Assertion(
            "transport.pushforward_zero_violations",
            report.pushforward.n_violations == 0,
            value=float(report.pushforward.n_violations),
            tolerance=0.0,
        ),
        Assertion(
            "transport.cell_mass_within_4_sigma",
            report.pushforward.max_abs_z <= 4.0,
            value=report.pushforward.max_abs_z,
            tolerance=4.0,
        ),
        Assertion(
            "transport.brenier_residual_max",
            max(report.residuals) <= res_tol,
            value=max(report.residuals),
            tolerance=res_tol,
        ),
        Assertion(
            "transport.hessian_det_error",
            report.hessian.max_det_error <= 1e-6,
            value=report.hessian.max_det_error,
            tolerance=1e-6,
        ),
        Assertion("transport.gradient_jump_law", jump_ok, tolerance=1e-4),
        Assertion("transport.cost_identity", cost_ok, tolerance=1e-3),
        Assertion("transport.strong_convexity", bool(report.convex)),
    ]
    return files, assertions


def _run_harmonic(cfg: ExperimentConfig, outdir: Path):
    dom = Rect(*cfg["domain"])
    grid = _grid(cfg)
    eps = cfg["eps_disk"]
    siteset = build_siteset(cfg, min_sep=2 * eps + 6 * grid.h)
    problem = harmod.PerforatedProblem(
        siteset=siteset, eps_disk=eps, grid=grid, tol=cfg["tol"], omega=cfg.values.get("omega")
    )
    lg, report, field = harmod.harmonic_tessellation(problem)
    formats.write_json(outdir / "report.json", report.to_dict())
    files = [
        outdir / "report.json",
        formats.write_field_raw(outdir / "potential.f32", field, siteset),
        outdir / "potential.f32.txt",
        formats.write_pgm(outdir / "tessellation.pgm", lg, siteset),
        outdir / "tessellation.pgm.txt",
        formats.write_ppm(outdir / "tessellation.ppm", lg, siteset),
        outdir / "tessellation.ppm.txt",
        figures.save_field_figure(outdir / "potential.png", field, siteset, title="harmonic potential"),
        figures.save_label_figure(outdir / "harmonic.png", lg, siteset, title="harmonic tessellation"),
    ]
    ok_max = harmod.maximum_principle_check(field, problem)
    assertions = [
        Assertion("harmonic.converged_below_tol", report.solver_residual < cfg["tol"],
                  value=report.solver_residual, tolerance=cfg["tol"]),
        Assertion("harmonic.maximum_principle", bool(ok_max)),
        Assertion(
            "harmonic.unassigned_fraction",
            report.unassigned_fraction <= 0.01,
            value=report.unassigned_fraction,
            tolerance=0.01,
        ),
    ]
    return files, assertions


_EXPERIMENTS = {
    "voronoi": _run_voronoi,
    "colonize": _run_colonize,
    "heat": _run_heat,
    "eikonal": _run_eikonal,
    "transport": _run_transport,
    "harmonic": _run_harmonic,
}


def run_experiment(cfg: ExperimentConfig) -> int:
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    files, assertions = _EXPERIMENTS[cfg.experiment](cfg, outdir)
    write_manifest(outdir, cfg, files, assertions)
    return 0 if all(a.passed for a in assertions) else 2
