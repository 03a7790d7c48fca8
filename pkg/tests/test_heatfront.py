import math

import numpy as np
import pytest

from vorpde.geometry import (
    GridSpec,
    PLANE,
    Rect,
    SiteSet,
    TORUS,
    mismatch_fraction,
    rasterize_tessellation,
)
from vorpde.heatfront import (
    HeatConfig,
    default_image_cutoff,
    dominant_kernel_label,
    heat_field,
    heat_kernel,
    kernel_gradient_bounds,
    kernel_gradient_magnitude,
    kernel_mass_quadrature,
    log_heat_field,
    monotone_time_horizon,
    path_minimum_probe,
    radial_monotonicity_probe,
    ray_fan,
    semigroup_residual,
    squared_interior_margin,
    torus_cut_locus_check,
)

BOX = Rect(0.0, 2.0, 0.0, 2.0)


def siteset(points, weights=None, domain=BOX, topology=PLANE):
    return SiteSet(sites=np.asarray(points, float), weights=weights, domain=domain, topology=topology)


def random_siteset(seed, n, domain=BOX):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.2, 1.8, (n, 2))
    return SiteSet(sites=pts, domain=domain)


class TestHeatKernel:
    def test_plane_closed_form(self):
        # d=1, t=0.25: (4 pi t)^-1 exp(-1/(4t)) = (1/pi) e^-1
        v = heat_kernel((0.0, 0.0), (1.0, 0.0), 0.25)
        assert v == pytest.approx(math.exp(-1.0) / math.pi, rel=1e-14)

    def test_peak_value_is_norm(self):
        t = 1.0 / (4.0 * math.pi)
        assert heat_kernel((0.3, 0.7), (0.3, 0.7), t) == pytest.approx(1.0, rel=1e-14)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            a, b = rng.uniform(0, 2, (2, 2))
            assert heat_kernel(a, b, 0.1) == heat_kernel(b, a, 0.1)
            assert heat_kernel(a, b, 0.1, TORUS, 2.0) == heat_kernel(b, a, 0.1, TORUS, 2.0)

    def test_torus_image_tail_negligible(self):
        k1 = heat_kernel((0.2, 0.4), (1.1, 1.9), 0.01, TORUS, 2.0, images=1)
        k3 = heat_kernel((0.2, 0.4), (1.1, 1.9), 0.01, TORUS, 2.0, images=3)
        assert k1 == pytest.approx(k3, rel=1e-12)

    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            heat_kernel((0, 0), (1, 0), 0.0)

    def test_image_cutoff_covers_tail(self):
        for t in (1e-4, 1e-2, 0.5):
            K = default_image_cutoff(t, 2.0)
            assert math.exp(-((K * 2.0) ** 2) / (4 * t)) < 1e-14


class TestHeatField:
    def test_single_site_radial_symmetry(self):
        cfg = HeatConfig(siteset([(1.0, 1.0)]), t=0.05)
        ring = [(1.3, 1.0), (0.7, 1.0), (1.0, 1.3), (1.0, 0.7)]
        vals = np.exp(log_heat_field(np.asarray(ring), cfg))
        assert np.allclose(vals, vals[0], rtol=1e-13)

    def test_two_site_mirror_symmetry(self):
        cfg = HeatConfig(siteset([(0.5, 1.0), (1.5, 1.0)]), t=0.02)
        for a in (0.1, 0.3):
            left = np.exp(log_heat_field(np.array([[1.0 - a, 1.0]]), cfg))[0]
            right = np.exp(log_heat_field(np.array([[1.0 + a, 1.0]]), cfg))[0]
            assert left == pytest.approx(right, rel=1e-13)

    def test_field_on_grid_positive(self):
        cfg = HeatConfig(random_siteset(3, 4), weights_heat=[1.0, 2.0, 0.5, 1.5], t=0.05)
        f = heat_field(cfg, GridSpec(64, 64, BOX))
        assert (f.values > 0).all()

    def test_mass_preservation_quadrature(self):
        w = np.array([1.0, 2.5, 0.7])
        cfg = HeatConfig(random_siteset(5, 3), weights_heat=w, t=0.01)
        mass = kernel_mass_quadrature(cfg, pad_factor=10.0, n=512)
        assert mass == pytest.approx(w.sum(), rel=1e-4)


class TestDominantKernelLabel:
    def test_equal_weights_match_voronoi_every_t(self):
        s = random_siteset(7, 5)
        g = GridSpec(96, 96, BOX)
        oracle = rasterize_tessellation(s, g, "voronoi")
        for t in (1e-4, 1e-2, 1.0):
            lab = dominant_kernel_label(HeatConfig(s, t=t), g)
            assert np.array_equal(lab.labels, oracle.labels)

    def test_unequal_weights_match_power_diagram(self):
        # weights (1, e) shift the dominance boundary to the power diagram
        # with offsets -4 t log(w_i)
        s = siteset([(0.6, 1.0), (1.4, 1.0)])
        t = 0.05
        g = GridSpec(64, 64, BOX)
        lab = dominant_kernel_label(HeatConfig(s, weights_heat=[1.0, math.e], t=t), g)
        shifted = SiteSet(
            sites=s.sites, weights=-4.0 * t * np.log([1.0, math.e]), domain=BOX
        )
        oracle = rasterize_tessellation(shifted, g, "power")
        assert np.array_equal(lab.labels, oracle.labels)

    def test_small_t_limit_recovers_voronoi(self):
        s = random_siteset(9, 4)
        g = GridSpec(64, 64, BOX)
        oracle = rasterize_tessellation(s, g, "voronoi")
        band = 2 * g.h
        fracs = [
            mismatch_fraction(
                dominant_kernel_label(HeatConfig(s, weights_heat=[1.0, 3.0, 0.4, 2.0], t=t), g),
                oracle,
                band,
            )
            for t in (1e-2, 1e-3, 1e-4)
        ]
        assert fracs[0] >= fracs[-1]
        assert fracs[-1] == 0.0


class TestRadialMonotonicity:
    def test_single_site_always_decreasing(self):
        cfg = HeatConfig(siteset([(1.0, 1.0)]), t=0.3)
        for theta in ray_fan(8):
            probe = radial_monotonicity_probe(cfg, 0, theta, delta=0.02, eps=0.05, ds=0.01)
            assert probe.verdict is True

    def test_two_sites_small_t_passes(self):
        s = siteset([(0.0, 0.0), (2.0, 0.0)], domain=Rect(-1, 3, -2, 2))
        cfg = HeatConfig(s, t=1e-3)
        probe = radial_monotonicity_probe(cfg, 0, (1.0, 0.0), delta=0.02, eps=0.05, ds=0.005)
        assert probe.verdict is True
        assert probe.s.min() > 0.02

    def test_two_sites_large_t_fails(self):
        # at t=1 the neighbor's kernel lifts u near the shared boundary
        s = siteset([(0.0, 0.0), (2.0, 0.0)], domain=Rect(-1, 3, -2, 2))
        cfg = HeatConfig(s, t=1.0)
        probe = radial_monotonicity_probe(cfg, 0, (1.0, 0.0), delta=0.02, eps=0.05, ds=0.005)
        assert probe.verdict is False

    def test_empty_range_flagged(self):
        cfg = HeatConfig(siteset([(1.0, 1.0)]), t=0.1)
        probe = radial_monotonicity_probe(cfg, 0, (1.0, 0.0), delta=50.0, eps=0.05, ds=0.01)
        assert probe.empty
        assert probe.verdict is None

    def test_torus_probe_small_t_passes(self):
        s = siteset([(0.5, 0.5), (1.5, 0.5), (0.5, 1.5), (1.5, 1.5)], topology=TORUS)
        cfg = HeatConfig(s, t=1e-3)
        for theta in ray_fan(8):
            probe = radial_monotonicity_probe(cfg, 0, theta, delta=0.02, eps=0.05, ds=0.01)
            assert probe.verdict in (True, None)

    def test_samples_respect_admissibility(self):
        s = siteset([(0.7, 1.0), (1.3, 1.0)])
        cfg = HeatConfig(s, t=1e-3)
        probe = radial_monotonicity_probe(cfg, 0, (1.0, 0.0), delta=0.02, eps=0.05, ds=0.005)
        # cell boundary at x=1: margin > eps caps x at 0.95, so s < 0.25
        assert probe.s.max() < 0.25 + 1e-9
        assert (probe.s > 0.02).all()


class TestMonotoneTimeHorizon:
    def test_single_site_passes_at_t_max(self):
        s = siteset([(1.0, 1.0)])
        res = monotone_time_horizon(s, None, ray_fan(8), 0.02, 0.05, 0.01)
        assert res.t == 1.0
        assert not res.none_pass

    def test_non_decreasing_in_eps(self):
        s = random_siteset(11, 3)
        thetas = ray_fan(16)
        t1 = monotone_time_horizon(s, None, thetas, 0.02, 0.05, 0.01).t
        t2 = monotone_time_horizon(s, None, thetas, 0.02, 0.10, 0.01).t
        assert t2 >= t1 * (1 - 3e-3)

    def test_non_decreasing_in_delta(self):
        s = random_siteset(11, 3)
        thetas = ray_fan(16)
        t1 = monotone_time_horizon(s, None, thetas, 0.02, 0.05, 0.01).t
        t2 = monotone_time_horizon(s, None, thetas, 0.04, 0.05, 0.01).t
        assert t2 >= t1 * (1 - 3e-3)

    def test_no_passing_time_flagged(self):
        # near the shared boundary at t ~ 1 the two-site field rises radially,
        # so a bisection window of large times has no passing t
        s = siteset([(0.0, 0.0), (2.0, 0.0)], domain=Rect(-1, 3, -2, 2))
        res = monotone_time_horizon(
            s, None, [(1.0, 0.0)], 0.02, 0.05, 0.005, site=0, t_range=(0.9, 1.0)
        )
        assert res.none_pass
        assert res.t == 0.9


class TestPathMinimum:
    def test_symmetric_pair_minimum_at_midpoint(self):
        s = siteset([(0.5, 1.0), (1.5, 1.0)])
        pm = path_minimum_probe(HeatConfig(s, t=1e-3), 0, 1, n_samples=401)
        assert pm.s_star == pytest.approx(0.5, abs=1e-12)
        assert pm.boundary_distance == pytest.approx(0.0, abs=1e-12)

    def test_three_sites_minimum_near_boundary(self):
        s = random_siteset(13, 3)
        cfg = HeatConfig(s, t=1e-3)
        for i, j in ((0, 1), (0, 2), (1, 2)):
            pm = path_minimum_probe(cfg, i, j, n_samples=801)
            assert pm.boundary_distance <= 0.05


class TestInteriorMargin:
    def grid(self):
        return GridSpec(256, 256, Rect(0.0, 2.0, -1.0, 1.0))

    def sites(self):
        return siteset([(0.0, 0.0), (2.0, 0.0)], domain=Rect(-1, 3, -2, 2))

    def test_two_site_margin_value(self):
        # qualifying nodes have gap > eps; on the axis the gap at (1-eps, 0)
        # is exactly 2 eps, so the minimum over the grid is at most that
        phi = squared_interior_margin(self.sites(), 0, 0.1, self.grid())
        assert phi is not None
        assert 0.1 ** 2 < phi <= 0.2 ** 2 + 1e-9

    def test_monotone_in_eps(self):
        vals = [squared_interior_margin(self.sites(), 0, e, self.grid()) for e in (0.05, 0.1, 0.2)]
        assert all(v is not None and v > 0 for v in vals)
        assert vals[0] <= vals[1] <= vals[2]

    def test_empty_when_eps_exceeds_cell(self):
        assert squared_interior_margin(self.sites(), 0, 3.0, self.grid()) is None


class TestGradientBounds:
    def test_closed_form_value(self):
        # d=1, t=0.1: (1/0.2) * (1/(0.4 pi)) * e^-2.5
        expected = 5.0 / (0.4 * math.pi) * math.exp(-2.5)
        assert kernel_gradient_magnitude(1.0, 0.1) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.3265, abs=5e-4)

    def test_magnitude_matches_finite_difference(self):
        # oracle: |grad_y p| via central differences of the kernel itself
        x = np.array([0.0, 0.0])
        for d, t in ((0.5, 0.1), (1.0, 0.2), (1.5, 0.3)):
            e = 1e-6
            gx = (heat_kernel(x, (d + e, 0.0), t) - heat_kernel(x, (d - e, 0.0), t)) / (2 * e)
            gy = (heat_kernel(x, (d, e), t) - heat_kernel(x, (d, -e), t)) / (2 * e)
            fd = math.hypot(gx, gy)
            assert kernel_gradient_magnitude(d, t) == pytest.approx(fd, rel=1e-8)

    def test_fitted_constants(self):
        rep = kernel_gradient_bounds()
        assert rep["finite"]
        # lower envelope is exact for the radial derivative: C_low = -log(8 pi)
        assert rep["c_low"] == pytest.approx(-math.log(8 * math.pi), abs=1e-9)
        assert rep["c_up"] >= rep["c_low"]

    def test_gaussian_tail_dominates(self):
        for t in (1e-3, 1e-2):
            d = np.array([0.5, 1.0, 2.0])
            g = kernel_gradient_magnitude(d, t)
            assert g[0] > g[1] > g[2]


class TestTorusCutLocus:
    def test_single_site_fails(self):
        s = siteset([(1.0, 1.0)], topology=TORUS)
        assert not torus_cut_locus_check(s, GridSpec(64, 64, BOX)).any()

    def test_quarter_grid_pattern_passes(self):
        s = siteset([(0.5, 0.5), (1.5, 0.5), (0.5, 1.5), (1.5, 1.5)], topology=TORUS)
        assert torus_cut_locus_check(s, GridSpec(64, 64, BOX)).all()

    def test_antipodal_pair_fails(self):
        s = siteset([(0.5, 0.5), (1.5, 1.5)], topology=TORUS)
        assert not torus_cut_locus_check(s, GridSpec(64, 64, BOX)).all()


def test_semigroup_property_torus():
    s = siteset([(0.3, 0.7)], topology=TORUS)
    cfg = HeatConfig(s, t=0.05)
    res = semigroup_residual(cfg, 0.05, (0.3, 0.7), (1.2, 0.4), GridSpec(128, 128, BOX))
    assert res < 1e-3
