import numpy as np
import pytest

from vorpde.colonize import (
    CoalitionIndex,
    SimParams,
    coalition_bruteforce,
    init_swarm,
    render_swarm,
    run_colonization,
    step_swarm,
    territory_metrics,
)
from vorpde.geometry import GridSpec, UNASSIGNED, mismatch_fraction, rasterize_tessellation


def small_params(**kw):
    defaults = dict(
        n_sources=2, particles_per_source=10, iterations=50, step=0.1, epsilon=0.01, seed=3
    )
    defaults.update(kw)
    return SimParams(**defaults)


def fresh_index(params, state):
    index = CoalitionIndex(params.n_sources, params.epsilon)
    for i in range(params.n_sources):
        for j in range(params.particles_per_source):
            index.insert(i, state.history[i, j, 0, 0], state.history[i, j, 0, 1])
    return index


class TestInit:
    def test_same_seed_identical(self):
        p = small_params()
        s1, st1 = init_swarm(p)
        s2, st2 = init_swarm(p)
        assert np.array_equal(s1.sites, s2.sites)
        assert np.array_equal(st1.normals, st2.normals)

    def test_particles_start_at_sources(self):
        p = small_params(n_sources=4, particles_per_source=100, iterations=1)
        siteset, state = init_swarm(p)
        assert state.history.shape[:2] == (4, 100)
        for i in range(4):
            assert (state.history[i, :, 0, :] == siteset.sites[i]).all()

    def test_different_seeds_differ(self):
        s1, _ = init_swarm(small_params(seed=1))
        s2, _ = init_swarm(small_params(seed=2))
        assert not np.array_equal(s1.sites, s2.sites)


class TestStep:
    def test_huge_step_always_resets_to_source(self):
        # any draw exits the open domain, so every particle bounces home
        p = small_params(n_sources=1, particles_per_source=5, iterations=3, step=10.0)
        siteset, state = init_swarm(p)
        index = fresh_index(p, state)
        for _ in range(3):
            step_swarm(state, p, index)
        assert (state.history[:, :, 1:4, :] == siteset.sites[0]).all()
        assert state.n_boundary_resets == 15

    def test_single_source_never_coalesces(self):
        p = small_params(n_sources=1, particles_per_source=8, iterations=40)
        _, state, metrics = run_colonization(p)
        assert metrics.n_coalitions == 0
        assert metrics.global_fraction == 1.0

    def test_candidate_near_opposing_history_resets(self):
        p = small_params(n_sources=2, particles_per_source=1, iterations=10, warmup=0)
        siteset, state = init_swarm(p)
        index = fresh_index(p, state)
        # plant an opposing trajectory point exactly where particle (0, 0)
        # is about to step
        rx, ry = state.normals[0, 0, 0]
        cand = state.history[0, 0, 0] + p.step * np.array([rx, ry])
        state.history[1, 0, 0] = cand + np.array([p.epsilon / 3, 0.0])
        index = fresh_index(p, state)
        step_swarm(state, p, index)
        assert (state.history[0, 0, 1] == siteset.sites[0]).all()
        assert state.n_coalitions >= 1

    def test_warmup_defers_coalitions(self):
        p = small_params(n_sources=2, particles_per_source=1, iterations=10, warmup=10)
        siteset, state = init_swarm(p)
        rx, ry = state.normals[0, 0, 0]
        cand = state.history[0, 0, 0] + p.step * np.array([rx, ry])
        state.history[1, 0, 0] = cand + np.array([p.epsilon / 3, 0.0])
        index = fresh_index(p, state)
        step_swarm(state, p, index)
        assert state.n_coalitions == 0

    def test_positions_stay_in_closed_domain(self):
        p = small_params(n_sources=3, particles_per_source=20, iterations=60, seed=11)
        _, state, _ = run_colonization(p)
        pts = state.trajectory_points()
        d = p.domain
        assert (pts[:, 0] >= d.x0).all() and (pts[:, 0] <= d.x1).all()
        assert (pts[:, 1] >= d.y0).all() and (pts[:, 1] <= d.y1).all()

    def test_index_grows_by_population_each_step(self):
        p = small_params(n_sources=2, particles_per_source=7, iterations=5)
        _, state = init_swarm(p)
        index = fresh_index(p, state)
        pop = 2 * 7
        assert index.count == pop
        for k in range(5):
            step_swarm(state, p, index)
            assert index.count == pop * (k + 2)

    def test_step_past_configured_iterations_rejected(self):
        p = small_params(iterations=1)
        _, state = init_swarm(p)
        index = fresh_index(p, state)
        step_swarm(state, p, index)
        with pytest.raises(ValueError):
            step_swarm(state, p, index)


class TestCoalitionOracle:
    def test_hash_matches_bruteforce_on_seeded_run(self):
        p = small_params(n_sources=2, particles_per_source=10, iterations=50)
        _, state, _ = run_colonization(p, oracle_check=True)
        assert state.oracle_disagreements == 0

    def test_no_self_coalition(self):
        # a lone source laying a dense trail must never trip on itself
        p = small_params(n_sources=1, particles_per_source=30, iterations=50, epsilon=0.2)
        _, state, metrics = run_colonization(p)
        assert metrics.n_coalitions == 0

    def test_bruteforce_direct(self):
        p = small_params(n_sources=2, particles_per_source=1, iterations=2)
        _, state = init_swarm(p)
        x, y = state.history[1, 0, 0]
        assert coalition_bruteforce(state, 0, x + p.epsilon / 2, y, p.epsilon)
        assert not coalition_bruteforce(state, 0, x + 3 * p.epsilon, y, p.epsilon)
        assert not coalition_bruteforce(state, 1, x + p.epsilon / 2, y, p.epsilon)


class TestDeterminism:
    def test_run_is_pure_function_of_params(self):
        p = small_params(seed=21)
        s1, st1, m1 = run_colonization(p)
        s2, st2, m2 = run_colonization(p)
        assert np.array_equal(st1.history, st2.history)
        assert m1.to_dict() == m2.to_dict()


class TestMetrics:
    def test_zero_iterations_all_points_correct(self):
        p = small_params(n_sources=2, iterations=0, seed=5)
        siteset, state = init_swarm(p)
        metrics = territory_metrics(state, siteset)
        assert metrics.global_fraction == 1.0

    def test_reference_scale_run_claims_cells(self):
        p = SimParams(n_sources=4, seed=0)
        _, _, metrics = run_colonization(p)
        assert metrics.global_fraction >= 0.8


class TestRender:
    def test_zero_iterations_labels_only_near_sources(self):
        p = small_params(n_sources=2, iterations=0, seed=5)
        siteset, state = init_swarm(p)
        g = GridSpec(64, 64, p.domain)
        lg = render_swarm(state, siteset, g, radius=2 * p.step)
        labeled = lg.labels != UNASSIGNED
        assert labeled.any()
        X, Y = g.mesh()
        for i in range(2):
            d = np.hypot(X - siteset.sites[i, 0], Y - siteset.sites[i, 1])
            assert (d[lg.labels == i] <= 2 * p.step + 1e-12).all()

    def test_single_source_blob_is_connected(self):
        from scipy import ndimage

        p = small_params(n_sources=1, particles_per_source=40, iterations=80, seed=9)
        siteset, state, _ = run_colonization(p)
        g = GridSpec(64, 64, p.domain)
        lg = render_swarm(state, siteset, g, radius=2 * p.step)
        labeled = lg.labels != UNASSIGNED
        _, n_components = ndimage.label(labeled)
        assert n_components == 1
        ix = min(g.nx - 1, int((siteset.sites[0, 0] - g.domain.x0) / g.h))
        iy = min(g.ny - 1, int((siteset.sites[0, 1] - g.domain.y0) / g.h))
        assert labeled[iy, ix]  # the blob contains the source node

    def test_reference_scale_render_matches_oracle(self):
        p = SimParams(n_sources=4, seed=0)
        siteset, state, _ = run_colonization(p)
        g = GridSpec(128, 128, p.domain)
        lg = render_swarm(state, siteset, g, radius=2 * p.step)
        oracle = rasterize_tessellation(siteset, g)
        assert mismatch_fraction(lg, oracle, 2 * p.epsilon) < 0.2
