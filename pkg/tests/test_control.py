import numpy as np
import pytest

import netconn as nc


@pytest.fixture(scope="module")
def small_deployment():
    """60 nodes over 50x50 m at the reference density 0.024/m^2."""
    gen = np.random.default_rng(60)
    pos = gen.uniform(0, 50, (60, 2))
    radio = nc.RadioParams(p_tx=1.0, p_th=0.01, xi=2.0, rho=60 / 2500)
    return pos, radio


def test_power_update_examples():
    cfg = nc.ControlConfig(lambda_star=0.15, mu=0.05)
    assert nc.power_update(1.0, 0.0599, cfg) == pytest.approx(1.004505, abs=1e-12)
    assert nc.power_update(2.0, 0.15, cfg) == 2.0
    assert nc.power_update(2.0, 0.3, cfg) < 2.0


def test_power_update_clamps():
    cfg = nc.ControlConfig(lambda_star=0.1, mu=10.0, p_min=0.5, p_max=2.0)
    assert nc.power_update(1.0, 5.0, cfg) == 0.5
    assert nc.power_update(1.0, -5.0, cfg) == 2.0


def test_control_config_validation():
    with pytest.raises(ValueError):
        nc.ControlConfig(lambda_star=0.0, mu=0.1)
    with pytest.raises(ValueError):
        nc.ControlConfig(lambda_star=0.1, mu=-0.1)
    with pytest.raises(ValueError):
        nc.ControlConfig(lambda_star=0.1, mu=0.1, p_min=2.0, p_max=1.0)


def test_collision_success_prob_values():
    # zeta * p_tx = 10 with M = 15 gives (14/15)**10
    radio = nc.RadioParams(p_tx=1.0, p_th=0.01, xi=2.0, rho=0.1 / np.pi)
    mac = nc.MacModel(m_channels=15, radio=radio)
    assert nc.mean_degree(radio) == pytest.approx(10.0, rel=1e-12)
    assert nc.collision_success_prob(mac, 1.0) == pytest.approx((14.0 / 15.0) ** 10, rel=1e-12)
    assert nc.collision_success_prob(mac, 1.0) == pytest.approx(0.50162, abs=5e-5)
    # vanishing power leaves no neighbors to collide with
    assert nc.collision_success_prob(mac, 1e-12) == pytest.approx(1.0, abs=1e-9)


def test_collision_success_prob_monotonicity():
    radio = nc.RadioParams(p_tx=1.0, p_th=0.01, xi=2.0, rho=0.04)
    for m in (2, 5, 20):
        mac = nc.MacModel(m_channels=m, radio=radio)
        probs = [nc.collision_success_prob(mac, p) for p in np.linspace(0.1, 8.0, 25)]
        assert np.all(np.diff(probs) < 0)
        assert all(0 < p <= 1 for p in probs)
    for p in (0.5, 2.0, 6.0):
        by_m = [nc.collision_success_prob(nc.MacModel(m_channels=m, radio=radio), p)
                for m in (2, 5, 10, 20, 40)]
        assert np.all(np.diff(by_m) > 0)


def test_mac_model_validation():
    radio = nc.RadioParams(p_tx=1.0, p_th=0.01)
    with pytest.raises(ValueError):
        nc.MacModel(m_channels=1, radio=radio)
    with pytest.raises(ValueError):
        nc.MacModel(m_channels=2.5, radio=radio)
    mac = nc.MacModel(m_channels=3, radio=radio)
    with pytest.raises(ValueError):
        nc.collision_success_prob(mac, 0.0)


def test_connectivity_vs_power_factorization_and_dominance(small_deployment):
    pos, radio = small_deployment
    grid = np.linspace(0.2, 4.0, 8)
    pg = nc.PowerGraph(pos, radio)
    curves = {}
    for m in (5, 10, 20):
        mac = nc.MacModel(m_channels=m, radio=radio)
        curves[m] = nc.connectivity_vs_power(pos, mac, grid, power_graph=pg)
        assert curves[m].factorization_error < 1e-10
    for lo, hi in ((5, 10), (10, 20)):
        diff = curves[hi].lambda2_expected - curves[lo].lambda2_expected
        assert np.all(diff >= -1e-12)
        positive = curves[lo].lambda2_geom > 1e-9
        assert np.all(diff[positive] > 0)


def test_connectivity_vs_power_needs_grid():
    pos = np.array([[0.0, 0.0], [5.0, 0.0], [10.0, 5.0]])
    radio = nc.RadioParams(p_tx=1.0, p_th=0.01, rho=0.01)
    mac = nc.MacModel(m_channels=5, radio=radio)
    with pytest.raises(ValueError):
        nc.connectivity_vs_power(pos, mac, [1.0])


def test_power_graph_caches_by_edge_set(small_deployment):
    pos, radio = small_deployment
    pg = nc.PowerGraph(pos, radio)
    t1 = pg.topology(1.0)
    t2 = pg.topology(1.0000001)  # same bracket
    assert t1 is t2
    assert pg.lambda2_geom(1.0) == pg.lambda2_geom(1.0000001)


def test_kw_ascend_quadratic_sanity():
    """Noise-free concave quadratic: the symmetric difference is the
    exact slope and the iterate lands on the vertex."""
    kw = nc.KwConfig(q0=1.0, c0=1.0, inner_iters=1, t_max=200)
    p_final, trace = nc.kw_ascend(lambda p: -(p - 5.0) ** 2, kw, p0=0.8, p_min=1e-4, p_max=100.0)
    assert abs(p_final - 5.0) <= 0.1
    ps = trace.column("p")
    assert abs(ps[5] - 5.0) < 1e-9  # exact after the first few steps


def test_kw_config_validation():
    with pytest.raises(ValueError):
        nc.KwConfig(q0=0.0, c0=1.0)
    with pytest.raises(ValueError):
        nc.KwConfig(q0=1.0, c0=-1.0)
    with pytest.raises(ValueError):
        nc.KwConfig(q0=1.0, c0=1.0, t_max=0)
    q, c = nc.KwConfig(q0=2.0, c0=1.0).gains(7)
    assert q == pytest.approx(0.25) and c == pytest.approx(0.5)


def test_measure_connectivity_deterministic(small_deployment):
    pos, radio = small_deployment
    mac = nc.MacModel(m_channels=10, radio=radio)
    z1 = nc.measure_connectivity(1.5, pos, mac, 200, np.random.default_rng(11))
    z2 = nc.measure_connectivity(1.5, pos, mac, 200, np.random.default_rng(11))
    assert z1 == z2


def test_measure_connectivity_accuracy_no_failures(small_deployment):
    pos, radio = small_deployment
    pg = nc.PowerGraph(pos, radio)
    mac = nc.MacModel(m_channels=10, radio=radio)
    lam2 = pg.lambda2_geom(1.5)
    z = nc.measure_connectivity(1.5, pos, mac, 4000, np.random.default_rng(0),
                                fm=nc.LinkFailureModel(1.0), power_graph=pg)
    assert abs(z - lam2) <= 0.05 * lam2


def test_measure_connectivity_zero_mean_error(small_deployment):
    """The truncation error behaves like zero-mean noise: the sample
    mean over many seeds stays within three standard errors of truth."""
    pos, radio = small_deployment
    pg = nc.PowerGraph(pos, radio)
    mac = nc.MacModel(m_channels=10, radio=radio)
    pc = nc.collision_success_prob(mac, 1.5)
    lam2 = pc * pg.lambda2_geom(1.5)
    zs = [nc.measure_connectivity(1.5, pos, mac, 4000, np.random.default_rng(s), power_graph=pg)
          for s in range(60)]
    se = np.std(zs, ddof=1) / np.sqrt(len(zs))
    assert abs(np.mean(zs) - lam2) <= 3 * se + 0.02 * lam2


def test_run_connectivity_control_frozen_gain_reduces_to_estimator(small_deployment):
    pos, radio = small_deployment
    sched = nc.StepSchedule.diminishing(eps_bar=0.05, eps0=0.05, gamma=0.55,
                                        alpha0=1.0, beta=0.55)
    cfg = nc.ControlConfig(lambda_star=0.15, mu=0.0)
    p_final, state, trace = nc.run_connectivity_control(
        pos, sched, cfg, 300, np.random.default_rng(5), radio=radio,
        fm=nc.LinkFailureModel(1.0), p0=1.0, trace_every=50)
    assert p_final == 1.0
    assert np.all(np.asarray(trace.column("p_tx")) == 1.0)
    # same trajectory as stepping the estimator from the cold start
    pg = nc.PowerGraph(pos, radio)
    topo = pg.topology(1.0)
    rng = np.random.default_rng(5)
    ref = nc.init_state(topo.n, rng)
    ref = nc.EstimatorState(x=ref.x, y=1.0, z=0.0, k=0)
    for _ in range(300):
        ref = nc.step_centralized(ref, topo, nc.LinkFailureModel(1.0), sched, rng)
    assert state.z == pytest.approx(ref.z, abs=1e-12)


def test_run_connectivity_control_rejects_ambiguous_failures(small_deployment):
    pos, radio = small_deployment
    sched = nc.StepSchedule.diminishing(eps_bar=0.05, eps0=0.05, gamma=0.55,
                                        alpha0=1.0, beta=0.55)
    cfg = nc.ControlConfig(lambda_star=0.15, mu=0.05)
    with pytest.raises(ValueError, match="exactly one"):
        nc.run_connectivity_control(pos, sched, cfg, 10, np.random.default_rng(0),
                                    radio=radio)
    with pytest.raises(ValueError, match="exactly one"):
        nc.run_connectivity_control(pos, sched, cfg, 10, np.random.default_rng(0),
                                    radio=radio, fm=nc.LinkFailureModel(1.0),
                                    mac=nc.MacModel(m_channels=5, radio=radio))


def test_run_connectivity_control_mac_coupling(small_deployment):
    """Under the MAC model the link success probability follows the
    power, so the recorded truth column responds to both."""
    pos, radio = small_deployment
    sched = nc.StepSchedule.diminishing(eps_bar=0.05, eps0=0.05, gamma=0.55,
                                        alpha0=1.0, beta=0.55)
    cfg = nc.ControlConfig(lambda_star=0.3, mu=0.05)
    mac = nc.MacModel(m_channels=10, radio=radio)
    p_final, state, trace = nc.run_connectivity_control(
        pos, sched, cfg, 500, np.random.default_rng(3), radio=radio, mac=mac,
        p0=1.0, trace_every=100)
    lam = np.asarray(trace.column("lambda2_true"))
    assert np.all(np.isfinite(lam))
    pg = nc.PowerGraph(pos, radio)
    expected = nc.collision_success_prob(mac, p_final) * pg.lambda2_geom(p_final)
    assert lam[-1] == pytest.approx(expected, rel=1e-12)
