import numpy as np
import pytest

import netconn as nc
from conftest import make_complete, make_path, rgg_from_seed

FIEDLER_P3 = np.array([1.0, 0.0, -1.0]) / np.sqrt(2.0)


def diminishing(eps_bar, eps0=0.3, gamma=0.51, alpha0=1.0, beta=0.51):
    return nc.StepSchedule.diminishing(eps_bar=eps_bar, eps0=eps0, gamma=gamma,
                                       alpha0=alpha0, beta=beta)


class TestInitState:
    def test_unit_norm_and_mean_free(self):
        for seed in range(5):
            state = nc.init_state(7, np.random.default_rng(seed))
            assert np.linalg.norm(state.x) == pytest.approx(1.0, abs=1e-12)
            assert abs(state.x.sum()) < 1e-9
            assert 0.0 <= state.y <= 1.0 and 0.0 <= state.z <= 1.0
            assert state.k == 0

    def test_deterministic(self):
        a = nc.init_state(5, np.random.default_rng(42))
        b = nc.init_state(5, np.random.default_rng(42))
        assert np.array_equal(a.x, b.x) and a.y == b.y and a.z == b.z

    def test_two_nodes(self):
        state = nc.init_state(2, np.random.default_rng(0))
        want = np.array([1.0, -1.0]) / np.sqrt(2.0)
        assert np.allclose(np.abs(state.x), np.abs(want), atol=1e-12)

    def test_rejects_single_node(self):
        with pytest.raises(ValueError):
            nc.init_state(1, np.random.default_rng(0))


class TestStepCentralized:
    def test_fiedler_fixed_point(self, p3):
        """With no link failures the Fiedler vector is a fixed point of
        the eigenvector update and its Rayleigh value is 1 - eps_bar."""
        sched = diminishing(eps_bar=0.1, eps0=0.1)
        fm = nc.LinkFailureModel(1.0)
        state = nc.EstimatorState(x=FIEDLER_P3.copy(), y=0.5, z=0.0, k=0)
        out = nc.step_centralized(state, p3, fm, sched, np.random.default_rng(0))
        assert min(np.linalg.norm(out.x - FIEDLER_P3), np.linalg.norm(out.x + FIEDLER_P3)) < 1e-12
        # y0 was 0.9, so y moved toward it
        y0 = (out.y - (1 - sched.value(0)[1]) * state.y) / sched.value(0)[1]
        assert y0 == pytest.approx(0.9, abs=1e-12)

    def test_z_tracks_eig_map(self, p3):
        sched = diminishing(eps_bar=0.1, eps0=0.1)
        fm = nc.LinkFailureModel(1.0)
        rng = np.random.default_rng(0)
        state = nc.EstimatorState(x=FIEDLER_P3.copy(), y=0.5, z=0.0, k=0)
        for _ in range(400):
            state = nc.step_centralized(state, p3, fm, sched, rng)
        assert state.z == pytest.approx(1.0, abs=1e-3)
        assert state.z == pytest.approx((1.0 - state.y) / 0.1, rel=1e-15)

    def test_frozen_smoothing_keeps_y_z(self, p3):
        sched = nc.StepSchedule.constant(eps_bar=0.1, eps=0.1, alpha=0.0)
        fm = nc.LinkFailureModel(0.7)
        rng = np.random.default_rng(3)
        state = nc.step_centralized(nc.init_state(3, rng), p3, fm, sched, rng)
        y0, z0 = state.y, state.z
        for _ in range(50):
            state = nc.step_centralized(state, p3, fm, sched, rng)
        assert state.y == y0 and state.z == z0

    def test_unit_norm_invariant(self, rgg20):
        sched = diminishing(eps_bar=0.15, eps0=0.4, alpha0=1.5)
        fm = nc.LinkFailureModel(0.8)
        rng = np.random.default_rng(9)
        state = nc.init_state(rgg20.n, rng)
        for _ in range(500):
            state = nc.step_centralized(state, rgg20, fm, sched, rng)
            assert np.linalg.norm(state.x) == pytest.approx(1.0, abs=1e-9)

    def test_mean_projection_stays_small(self, rgg20):
        sched = diminishing(eps_bar=0.15, eps0=0.4, alpha0=1.5)
        fm = nc.LinkFailureModel(0.8)
        rng = np.random.default_rng(10)
        state = nc.init_state(rgg20.n, rng)
        worst = 0.0
        for _ in range(1000):
            state = nc.step_centralized(state, rgg20, fm, sched, rng)
            worst = max(worst, abs(state.x.sum()) / np.sqrt(rgg20.n))
        assert worst <= 1e-6

    def test_rayleigh_scale_invariance(self, rgg20):
        """The eigenvalue update must not depend on the scale of x; this
        is what makes the sqrt(n)-scaled distributed iterate valid."""
        sched = diminishing(eps_bar=0.15, eps0=0.4)
        fm = nc.LinkFailureModel(0.8)
        base = nc.init_state(rgg20.n, np.random.default_rng(4))
        ref = nc.step_centralized(base, rgg20, fm, sched, np.random.default_rng(77))
        for c in (np.sqrt(rgg20.n), -1.0, 1e-3):
            scaled = nc.EstimatorState(x=c * base.x, y=base.y, z=base.z, k=0)
            out = nc.step_centralized(scaled, rgg20, fm, sched, np.random.default_rng(77))
            assert out.y == pytest.approx(ref.y, abs=1e-12)

    def test_matches_dense_matrix_algebra(self, rgg10):
        """The edge-based step equals the explicit deflated-matrix form
        built from the same Laplacian sample."""
        sched = diminishing(eps_bar=0.2, eps0=0.35)
        fm = nc.LinkFailureModel(0.6)
        state = nc.init_state(rgg10.n, np.random.default_rng(1))
        out = nc.step_centralized(state, rgg10, fm, sched, np.random.default_rng(123))
        lap = nc.sample_laplacian(rgg10, fm, np.random.default_rng(123))
        eps_k, alpha_k = sched.value(0)
        b_mat = nc.deflate(nc.iteration_matrix(lap, sched.eps_bar))
        b2_mat = nc.deflate(nc.iteration_matrix(lap, eps_k))
        x = state.x
        y0 = float(x @ b_mat @ x) / float(x @ x)
        y_ref = state.y + alpha_k * (y0 - state.y)
        x_ref = b2_mat @ x
        x_ref /= np.linalg.norm(x_ref)
        assert out.y == pytest.approx(y_ref, abs=1e-12)
        assert np.abs(out.x - x_ref).max() < 1e-12

    def test_degenerate_iterate_error(self, p3):
        # eps[k]*lambda2 = 1 with x on the Fiedler direction annihilates
        sched = nc.StepSchedule.constant(eps_bar=0.5, eps=1.0, alpha=0.5)
        state = nc.EstimatorState(x=FIEDLER_P3.copy(), y=0.5, z=1.0, k=0)
        with pytest.raises(nc.DegenerateIterateError):
            nc.step_centralized(state, p3, nc.LinkFailureModel(1.0), sched, np.random.default_rng(0))


class TestRunEstimator:
    def test_k4_converges(self, k4):
        sched = diminishing(eps_bar=0.2, eps0=0.2, alpha0=1.5)
        state, trace = nc.run_estimator(k4, nc.LinkFailureModel(1.0), sched, 2000,
                                        np.random.default_rng(0), trace_every=100)
        assert abs(state.z - 4.0) < 1e-2
        assert trace.columns[:3] == ("k", "y", "z")
        ks = trace.column("k")
        assert ks == sorted(ks) and ks[-1] == 2000

    def test_lossy_rgg_converges_with_oracle_trace(self, rgg20):
        fm = nc.LinkFailureModel(0.8)
        pairs = nc.dense_sym_eig(nc.expected_laplacian(rgg20, fm))
        sched = nc.StepSchedule.diminishing(eps_bar=0.15, eps0=0.4, gamma=0.51,
                                            alpha0=1.5, beta=0.51)
        state, trace = nc.run_estimator(rgg20, fm, sched, 5000, np.random.default_rng(8),
                                        oracle=pairs, trace_every=250)
        lam2 = pairs[1].value
        assert abs(state.z - lam2) < 0.05 * lam2
        ferr = trace.column("fiedler_err")
        assert ferr[-1] < 0.2
        bounds = trace.column("bound")
        assert all(b2 < b1 for b1, b2 in zip(bounds, bounds[1:]))

    def test_mean_error_shrinks_across_seeds(self, rgg20):
        """Later iterates are closer on average: 50-seed mean of
        |z - lambda2| at k=5000 is below the mean at k=500 (slow step
        sequence, so the early checkpoint is still in the transient)."""
        fm = nc.LinkFailureModel(1.0)
        lam2 = nc.dense_sym_eig(nc.laplacian(rgg20))[1].value
        sched = diminishing(eps_bar=0.15, eps0=0.08, alpha0=1.0)
        early, late = [], []
        for seed in range(50):
            state, trace = nc.run_estimator(rgg20, fm, sched, 5000,
                                            np.random.default_rng(seed), trace_every=500)
            zs = dict(zip(trace.column("k"), trace.column("z")))
            early.append(abs(zs[500] - lam2))
            late.append(abs(zs[5000] - lam2))
        assert np.mean(late) < np.mean(early)

    def test_stop_rule(self, k4):
        sched = diminishing(eps_bar=0.2, eps0=0.2, alpha0=1.5)
        state, trace = nc.run_estimator(k4, nc.LinkFailureModel(1.0), sched, 50_000,
                                        np.random.default_rng(0), trace_every=0,
                                        stop_delta=5e-4, stop_patience=50)
        assert state.k < 50_000
        assert abs(state.z - 4.0) < 0.05

    def test_adaptive_mode_uses_constant_steps(self, rgg10):
        sched = diminishing(eps_bar=0.15, eps0=0.4, alpha0=0.9)
        fm = nc.LinkFailureModel(0.9)
        s1, _ = nc.run_estimator(rgg10, fm, sched, 30, np.random.default_rng(5), mode="adaptive")
        const = nc.StepSchedule.constant(eps_bar=0.15, eps=0.15, alpha=0.9)
        s2, _ = nc.run_estimator(rgg10, fm, const, 30, np.random.default_rng(5))
        assert s1.z == s2.z and np.array_equal(s1.x, s2.x)

    def test_disconnected_expected_graph_goes_to_zero(self):
        a = np.zeros((6, 6))
        for i, j in ((0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)):
            a[i, j] = a[j, i] = 1.0
        topo = nc.Topology(adjacency=a)
        sched = diminishing(eps_bar=0.2, eps0=0.2)
        state, _ = nc.run_estimator(topo, nc.LinkFailureModel(1.0), sched, 3000,
                                    np.random.default_rng(1), trace_every=0)
        assert abs(state.z) < 1e-2


class TestTracking:
    def test_scripted_topology_switches(self):
        """Constant-step mode re-tracks the connectivity after each
        scripted switch (lossy links, three regimes)."""
        fm = nc.LinkFailureModel(0.5)
        topos = [rgg_from_seed(33, 20, 60.0),
                 rgg_from_seed(8, 20, 60.0),
                 rgg_from_seed(57, 20, 60.0)]
        oracle_vals = [nc.dense_sym_eig(nc.expected_laplacian(t, fm))[1].value for t in topos]
        sched = nc.StepSchedule.constant(eps_bar=0.1, eps=0.1, alpha=0.25)
        segments = [(t, 3000) for t in topos]
        state, trace = nc.run_tracking(segments, fm, sched, np.random.default_rng(2),
                                       oracle_values=oracle_vals, trace_every=50)
        ks = np.asarray(trace.column("k"))
        segs = np.asarray(trace.column("segment"))
        zs = np.asarray(trace.column("z"))
        for idx, lam in enumerate(oracle_vals):
            tail = zs[(segs == idx) & (ks > (idx + 1) * 3000 - 600)]
            assert abs(tail.mean() - lam) < 0.25 * lam

    def test_validation(self):
        sched = nc.StepSchedule.constant(eps_bar=0.1)
        with pytest.raises(ValueError):
            nc.run_tracking([], nc.LinkFailureModel(1.0), sched, np.random.default_rng(0))


class TestDeflation:
    def test_deflated_matrices_shift_top_eigenvalue(self):
        """With the exact Fiedler pair removed, the expected deflated
        matrix peaks at 1 - eps_bar*lambda3."""
        p4 = make_path(4)
        lap = nc.laplacian(p4)
        pairs = nc.dense_sym_eig(lap)
        lam2, lam3 = pairs[1].value, pairs[2].value
        eps_bar, eps_k = 0.25, 0.2
        b_mat = nc.deflate(nc.iteration_matrix(lap, eps_bar))
        b2_mat = nc.deflate(nc.iteration_matrix(lap, eps_k))
        ctx = nc.DeflationContext(stage=3, known_pairs=(nc.EigPair(lam2, pairs[1].vector),))
        c_mat, c2_mat = nc.deflated_matrices(ctx, b_mat, b2_mat, eps_bar, eps_k)
        assert nc.dense_sym_eig(c_mat)[-1].value == pytest.approx(1 - eps_bar * lam3, abs=1e-10)
        assert nc.dense_sym_eig(c2_mat)[-1].value == pytest.approx(1 - eps_k * lam3, abs=1e-10)

    def test_zero_pair_is_no_deflation(self):
        b = np.array([[0.3, 0.1], [0.1, 0.3]])
        ctx = nc.DeflationContext(stage=2)
        c, c2 = nc.deflated_matrices(ctx, b, b, 0.1, 0.1)
        assert np.array_equal(c, b) and np.array_equal(c2, b)

    def test_context_validation(self):
        with pytest.raises(ValueError):
            nc.DeflationContext(stage=4)
        with pytest.raises(ValueError):
            nc.DeflationContext(stage=3)
        bad = nc.EigPair(1.0, np.array([1.0, 1.0]))
        with pytest.raises(ValueError, match="unit norm"):
            nc.DeflationContext(stage=3, known_pairs=(bad,))

    def test_estimate_spectrum_recovers_third_eigenvalue(self, p3):
        sched = diminishing(eps_bar=0.25, eps0=0.3, alpha0=1.0)
        results = nc.estimate_spectrum(p3, nc.LinkFailureModel(1.0), sched,
                                       stages=2, iters=4000, rng=np.random.default_rng(6))
        assert abs(results[0][0] - 1.0) < 5e-2
        assert abs(results[1][0] - 3.0) < 5e-2

    def test_single_stage_equals_run_estimator(self, p3):
        sched = diminishing(eps_bar=0.25, eps0=0.3)
        res = nc.estimate_spectrum(p3, nc.LinkFailureModel(0.9), sched,
                                   stages=1, iters=200, rng=np.random.default_rng(3))
        state, _ = nc.run_estimator(p3, nc.LinkFailureModel(0.9), sched, 200,
                                    np.random.default_rng(3), trace_every=0)
        assert res[0][0] == state.z
