"""Connectivity control loops.

Three layers build on the estimator: a target-tracking power controller
that nudges the common transmit power by mu*(target - estimate) each
iteration; a random-MAC collision model in which the per-link success
probability decays with transmit power as (1 - 1/M)**d, d being the
mean neighbor count; and a Kiefer-Wolfowitz stochastic maximizer that
climbs the resulting power/connectivity curve using only noisy
symmetric-difference measurements.

All nodes share one scalar transmit power; per-node powers would make
the graph directed, which the link model does not cover.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import EstimatorState, init_state, step_centralized
from .graphs import (
    LinkFailureModel,
    RadioParams,
    Topology,
    build_rgg,
    coverage_radius,
    expected_laplacian,
    laplacian,
    mean_degree,
)
from .spectral import StepSchedule, dense_sym_eig
from .trace import TraceRecord

__all__ = [
    "ControlConfig",
    "MacModel",
    "KwConfig",
    "PowerGraph",
    "ConnectivityCurve",
    "power_update",
    "collision_success_prob",
    "connectivity_vs_power",
    "run_connectivity_control",
    "measure_connectivity",
    "kw_maximize",
    "kw_ascend",
]


@dataclass(frozen=True)
class ControlConfig:
    """Target connectivity, integrator gain, and physical power clamps."""

    lambda_star: float
    mu: float
    p_min: float = 1e-4
    p_max: float = 1e3

    def __post_init__(self):
        if self.lambda_star <= 0:
            raise ValueError(f"lambda_star must be > 0, got {self.lambda_star}")
        if self.mu < 0:
            # mu = 0 freezes the power, reducing the loop to the plain
            # estimator; useful as a baseline.
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if not 0 < self.p_min <= self.p_max:
            raise ValueError(f"need 0 < p_min <= p_max, got ({self.p_min}, {self.p_max})")


@dataclass(frozen=True)
class MacModel:
    """Random channel-selection MAC with m_channels slots per node."""

    m_channels: int
    radio: RadioParams

    def __post_init__(self):
        if not (isinstance(self.m_channels, int) and self.m_channels >= 2):
            raise ValueError(f"m_channels must be an integer >= 2, got {self.m_channels!r}")


@dataclass(frozen=True)
class KwConfig:
    """Kiefer-Wolfowitz gains q[t] = q0/(t+1) and perturbations
    c[t] = c0/(t+1)**(1/3); this pair satisfies the usual divergent-sum
    and square-summable conditions for any positive q0, c0."""

    q0: float
    c0: float
    inner_iters: int = 500
    t_max: int = 50

    def __post_init__(self):
        if self.q0 <= 0 or self.c0 <= 0:
            raise ValueError("q0 and c0 must be > 0")
        if self.inner_iters < 1:
            raise ValueError(f"inner_iters must be >= 1, got {self.inner_iters}")
        if self.t_max < 1:
            raise ValueError(f"t_max must be >= 1, got {self.t_max}")

    def gains(self, t: int) -> tuple[float, float]:
        return self.q0 / (t + 1.0), self.c0 / (t + 1.0) ** (1.0 / 3.0)


def power_update(p: float, z_est: float, cfg: ControlConfig) -> float:
    """Integrator step toward the target connectivity, clamped to the
    physically realizable power range."""
    return float(np.clip(p + cfg.mu * (cfg.lambda_star - z_est), cfg.p_min, cfg.p_max))


def collision_success_prob(mac: MacModel, p_tx: float) -> float:
    """Probability that a packet survives the random channel choice of
    the d = pi*r^2*rho neighbors: (1 - 1/M)**d.  More power means more
    neighbors and hence more collisions, so this decays with p_tx."""
    if p_tx <= 0:
        raise ValueError(f"p_tx must be > 0, got {p_tx}")
    d = mean_degree(mac.radio.at_power(p_tx))
    return (1.0 - 1.0 / mac.m_channels) ** d


class PowerGraph:
    """Geometric graphs of one node deployment across transmit powers.

    The edge set is a step function of the coverage radius, so both the
    topology and the connectivity of the underlying geometric graph are
    cached per distance bracket; sweeping or dithering the power costs
    one eigensolve per distinct edge set instead of one per query.
    """

    def __init__(self, positions: np.ndarray, radio: RadioParams):
        self.positions = np.asarray(positions, dtype=float)
        self.radio = radio
        n = self.positions.shape[0]
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        iu = np.triu_indices(n, k=1)
        pair_d = dist[iu]
        if n > 1 and pair_d.min() == 0.0:
            raise ValueError("duplicate positions: two distinct nodes at distance 0")
        self._thresholds = np.unique(pair_d)
        self._topos: dict[int, Topology] = {}
        self._lambda2: dict[int, float] = {}

    def _bracket(self, p_tx: float) -> int:
        r = coverage_radius(self.radio.at_power(p_tx))
        return bisect.bisect_right(self._thresholds, r)

    def topology(self, p_tx: float) -> Topology:
        key = self._bracket(p_tx)
        topo = self._topos.get(key)
        if topo is None:
            topo = build_rgg(self.positions, self.radio.at_power(p_tx))
            self._topos[key] = topo
        return topo

    def lambda2_geom(self, p_tx: float) -> float:
        """Connectivity of the failure-free geometric graph at p_tx."""
        key = self._bracket(p_tx)
        val = self._lambda2.get(key)
        if val is None:
            val = dense_sym_eig(laplacian(self._topos.get(key) or self.topology(p_tx)))[1].value
            self._lambda2[key] = val
        return val


@dataclass
class ConnectivityCurve:
    """lambda2 of the expected graph along a transmit-power grid."""

    p_grid: np.ndarray
    success_prob: np.ndarray
    lambda2_geom: np.ndarray
    lambda2_expected: np.ndarray
    factorization_error: float


def connectivity_vs_power(
    positions: np.ndarray,
    mac: MacModel,
    p_grid,
    power_graph: PowerGraph | None = None,
) -> ConnectivityCurve:
    """Sweep the transmit power: at each grid point rebuild the
    geometric graph, apply the collision success probability uniformly
    and take lambda2 of the expected Laplacian.

    With a uniform success probability the expected Laplacian is just
    p_c times the geometric one, so lambda2_expected factors exactly as
    p_c(M, P) * lambda2_geom(P); the returned factorization_error
    reports the worst deviation between the direct eigensolve and the
    factored value.
    """
    p_grid = np.asarray(p_grid, dtype=float)
    if p_grid.size < 2:
        raise ValueError(f"need at least 2 grid points, got {p_grid.size}")
    pg = power_graph or PowerGraph(positions, mac.radio)
    succ = np.empty(p_grid.size)
    lam_geom = np.empty(p_grid.size)
    lam_exp = np.empty(p_grid.size)
    worst = 0.0
    for idx, p in enumerate(p_grid):
        topo = pg.topology(p)
        pc = collision_success_prob(mac, p)
        lam_g = pg.lambda2_geom(p)
        lap_bar = expected_laplacian(topo, LinkFailureModel(success_prob=pc))
        lam_e = dense_sym_eig(lap_bar)[1].value
        succ[idx] = pc
        lam_geom[idx] = lam_g
        lam_exp[idx] = lam_e
        worst = max(worst, abs(lam_e - pc * lam_g))
    return ConnectivityCurve(p_grid=p_grid, success_prob=succ, lambda2_geom=lam_geom,
                             lambda2_expected=lam_exp, factorization_error=worst)


def run_connectivity_control(
    positions: np.ndarray,
    schedule: StepSchedule,
    cfg: ControlConfig,
    iters: int,
    rng: np.random.Generator,
    radio: RadioParams,
    fm: LinkFailureModel | None = None,
    mac: MacModel | None = None,
    p0: float = 1.0,
    trace_every: int = 1,
) -> tuple[float, EstimatorState, TraceRecord]:
    """Interleave the estimator with the power controller.

    Each iteration rebuilds the geometric graph at the current common
    power, advances the estimator one step on it and feeds the fresh
    estimate to the power update.  Link failures come either from a
    fixed model (fm) or from the power-coupled MAC collision model
    (mac).  The trace records the estimate, the power, and the true
    connectivity of the expected graph from the eigensolver oracle.
    """
    if (fm is None) == (mac is None):
        raise ValueError("provide exactly one of fm or mac")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    pg = PowerGraph(positions, radio)
    p = float(np.clip(p0, cfg.p_min, cfg.p_max))
    state = init_state(pg.positions.shape[0], rng)
    # Cold start: assume zero connectivity until measured.  A random
    # initial estimate makes the Rayleigh transient look like excess
    # connectivity, and the controller would slash power into a
    # disconnected regime it cannot observe its way out of.
    state = EstimatorState(x=state.x, y=1.0, z=0.0, k=0)
    trace = TraceRecord(columns=("k", "z", "p_tx", "lambda2_true"))
    for i in range(iters):
        topo = pg.topology(p)
        if mac is not None:
            pc = collision_success_prob(mac, p)
            fm_k = LinkFailureModel(success_prob=pc)
        else:
            fm_k = fm
            pc = fm.success_prob if isinstance(fm.success_prob, float) else float("nan")
        state = step_centralized(state, topo, fm_k, schedule, rng)
        p = power_update(p, state.z, cfg)
        if trace_every and (state.k % trace_every == 0 or i == iters - 1):
            lam_true = pc * pg.lambda2_geom(p) if pc == pc else float("nan")
            trace.append((state.k, state.z, p, lam_true))
    return p, state, trace


def _auto_schedule(topo: Topology) -> StepSchedule:
    # eps_bar = 1/d_max is always below 2/lambda_N, so the measurement
    # stays stable across the whole power range without an eigensolve.
    # Constant steps: on large graphs the low eigenspace separates slowly,
    # and a diminishing eps would freeze the iterate long before it gets
    # there; the residual fluctuation just becomes part of the
    # measurement noise.
    d_max = float(topo.degrees.max(initial=0.0))
    eps_bar = 1.0 / d_max if d_max > 0 else 1.0
    return StepSchedule.constant(eps_bar=eps_bar, eps=eps_bar, alpha=0.05)


def measure_connectivity(
    p_tx: float,
    positions: np.ndarray,
    mac: MacModel,
    inner_iters: int,
    rng: np.random.Generator,
    schedule: StepSchedule | None = None,
    fm: LinkFailureModel | None = None,
    power_graph: PowerGraph | None = None,
) -> float:
    """Noisy connectivity measurement at one power: build the random-MAC
    graph, restart the estimator from a fresh random state and run it for
    inner_iters iterations; the returned z is the true lambda2 of the
    expected graph plus a zero-mean truncation error."""
    if inner_iters < 1:
        raise ValueError(f"inner_iters must be >= 1, got {inner_iters}")
    pg = power_graph or PowerGraph(positions, mac.radio)
    topo = pg.topology(p_tx)
    if fm is None:
        fm = LinkFailureModel(success_prob=collision_success_prob(mac, p_tx))
    sched = schedule or _auto_schedule(topo)
    state = init_state(topo.n, rng)
    for _ in range(inner_iters):
        state = step_centralized(state, topo, fm, sched, rng)
    return state.z


def kw_ascend(
    objective,
    cfg: KwConfig,
    p0: float,
    p_min: float = 1e-4,
    p_max: float = 1e3,
) -> tuple[float, TraceRecord]:
    """Kiefer-Wolfowitz ascent on a scalar objective known only through
    (possibly noisy) evaluations: p <- p + q[t] * (f(p+c) - f(p-c))/(2c),
    with probe points and the iterate clamped to stay positive."""
    if p0 <= 0:
        raise ValueError(f"p0 must be > 0, got {p0}")
    p = float(np.clip(p0, p_min, p_max))
    trace = TraceRecord(columns=("t", "p", "gradient_estimate"))
    for t in range(cfg.t_max):
        q_t, c_t = cfg.gains(t)
        up = min(p + c_t, p_max)
        down = max(p - c_t, p_min)
        grad = (objective(up) - objective(down)) / (2.0 * c_t)
        p = float(np.clip(p + q_t * grad, p_min, p_max))
        trace.append((t, p, grad))
    return p, trace


def kw_maximize(
    positions: np.ndarray,
    mac: MacModel,
    kw: KwConfig,
    p0: float,
    rng: np.random.Generator,
    schedule: StepSchedule | None = None,
    p_min: float = 1e-4,
    p_max: float = 1e3,
    power_graph: PowerGraph | None = None,
    trace_oracle: bool = True,
) -> tuple[float, TraceRecord]:
    """Maximize the expected-graph connectivity over the transmit power.

    Every step runs the stochastic estimator twice, at p+c[t] and
    p-c[t], and ascends the finite-difference slope.  The trace logs the
    power trajectory together with the true lambda2 of the expected
    graph at each visited power (from the cached eigensolver oracle);
    trace_oracle=False skips that column (one full eigensolve per newly
    visited edge set, which dominates the cost on large deployments).
    """
    if p0 <= 0:
        raise ValueError(f"p0 must be > 0, got {p0}")
    pg = power_graph or PowerGraph(positions, mac.radio)
    p = float(np.clip(p0, p_min, p_max))
    trace = TraceRecord(columns=("t", "p_tx", "lambda2_true"))
    for t in range(kw.t_max):
        q_t, c_t = kw.gains(t)
        up = min(p + c_t, p_max)
        down = max(p - c_t, p_min)
        z_up = measure_connectivity(up, positions, mac, kw.inner_iters, rng,
                                    schedule=schedule, power_graph=pg)
        z_down = measure_connectivity(down, positions, mac, kw.inner_iters, rng,
                                      schedule=schedule, power_graph=pg)
        grad = (z_up - z_down) / (2.0 * c_t)
        p = float(np.clip(p + q_t * grad, p_min, p_max))
        if trace_oracle:
            lam_true = collision_success_prob(mac, p) * pg.lambda2_geom(p)
        else:
            lam_true = float("nan")
        trace.append((t, p, lam_true))
    return p, trace
