"""Distributed implementation of the stochastic power iteration.

Every outer iteration runs two nested average-consensus rounds over the
failing links: round 1 spreads the mean of the eigenvector components,
round 2 simultaneously spreads the Rayleigh-ratio numerator and
denominator and the mean of the squared update (whose square root gives
the scaled norm), each round stopping once every node's relative change
falls below its delta threshold.  All remaining updates are local, so a
node only ever broadcasts one scalar in round 1 and two in round 2,
giving a communication cost of (N1 + 2*N2)*C per outer iteration.

The simulator is synchronous and lockstep: node states live in arrays
and the per-tick neighbor exchange is realized by applying the sampled
Laplacian, not by materializing per-node inboxes.  Round termination is
decided by the omniscient scheduler; a deployment would need an explicit
termination protocol on top.  Consensus requires symmetric failures
(doubly stochastic tick matrices); asymmetric models are rejected.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimator import DegenerateIterateError, EstimatorState
from .graphs import LinkFailureModel, Topology, apply_sampled_laplacian, sample_edge_weights
from .spectral import StepSchedule
from .trace import TraceRecord

__all__ = [
    "ConsensusConfig",
    "NodeState",
    "NodeStates",
    "CommCost",
    "RoundTimeoutError",
    "consensus_average",
    "consensus_ratio",
    "local_b",
    "distributed_step",
    "run_distributed",
]

_ZERO_GUARD = 1e-8
_DENOM_FLOOR = 1e-12


class RoundTimeoutError(RuntimeError):
    """A consensus round hit its tick cap; carries the partial values."""

    def __init__(self, message: str, values: np.ndarray, iters: int):
        super().__init__(message)
        self.values = values
        self.iters = iters


@dataclass(frozen=True)
class ConsensusConfig:
    """Inner-loop parameters: consensus step eps_c for the tick matrix
    I - eps_c*L[t], stopping thresholds delta1 (mean round), delta2
    (ratio/norm round) and delta3 (outer stop rule), and a tick cap."""

    eps_c: float
    delta1: float
    delta2: float
    delta3: float = 5e-4
    max_iters: int = 100_000

    def __post_init__(self):
        if self.eps_c <= 0:
            raise ValueError(f"eps_c must be > 0, got {self.eps_c}")
        for name in ("delta1", "delta2", "delta3"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class NodeState:
    """Read-only view of one node's local variables."""

    x: float
    y: float
    z: float
    m: float
    b: float
    b2: float


@dataclass
class NodeStates:
    """Local variables of all nodes, stored as arrays for the lockstep
    simulation; index i holds node i's copy."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    m: np.ndarray
    b: np.ndarray
    b2: np.ndarray
    k: int = 0

    @classmethod
    def init_random(cls, n: int, rng: np.random.Generator, common: bool = False) -> "NodeStates":
        """Every node picks x_i, y_i, z_i at random; with common=True the
        nodes share one random y and z (x stays per-node)."""
        if n < 2:
            raise ValueError(f"need at least 2 nodes, got {n}")
        x = rng.standard_normal(n)
        if common:
            y = np.full(n, rng.uniform(0.0, 1.0))
            z = np.full(n, rng.uniform(0.0, 1.0))
        else:
            y = rng.uniform(0.0, 1.0, n)
            z = rng.uniform(0.0, 1.0, n)
        zero = np.zeros(n)
        return cls(x=x, y=y, z=z, m=zero.copy(), b=zero.copy(), b2=zero.copy(), k=0)

    @classmethod
    def from_state(cls, state: EstimatorState) -> "NodeStates":
        """Start the distributed run from a centralized state (the local
        components carry the sqrt(n) scaling the algorithm maintains)."""
        n = state.x.size
        x = np.sqrt(n) * state.x.copy()
        zero = np.zeros(n)
        return cls(x=x, y=np.full(n, state.y), z=np.full(n, state.z),
                   m=zero.copy(), b=zero.copy(), b2=zero.copy(), k=state.k)

    @property
    def n(self) -> int:
        return self.x.size

    def node(self, i: int) -> NodeState:
        return NodeState(x=float(self.x[i]), y=float(self.y[i]), z=float(self.z[i]),
                         m=float(self.m[i]), b=float(self.b[i]), b2=float(self.b2[i]))

    def z_dispersion(self) -> float:
        return float(self.z.max() - self.z.min())


@dataclass
class CommCost:
    """Accumulated scalar-broadcast cost (N1 + 2*N2)*C per outer step."""

    scalar_cost: float = 1.0
    n1: int = 0
    n2: int = 0
    total: float = 0.0

    def add_step(self, n1: int, n2: int) -> None:
        self.n1 = n1
        self.n2 = n2
        self.total += (n1 + 2 * n2) * self.scalar_cost


def _require_symmetric(fm: LinkFailureModel) -> None:
    if fm.symmetry != "symmetric":
        raise ValueError(
            "consensus rounds need symmetric link failures; asymmetric samples "
            "break the doubly-stochastic tick matrices"
        )


def _consensus_core(
    streams: np.ndarray,
    topo: Topology,
    fm: LinkFailureModel,
    cfg: ConsensusConfig,
    rng: np.random.Generator,
    delta: float,
    monitor=None,
) -> tuple[np.ndarray, int]:
    """Iterate v <- (I - eps_c*L[t]) v on every stream with one shared
    link sample per tick, until every monitored per-node sequence moves
    by less than delta (relative, with an absolute floor near zero).

    By default the raw streams are monitored; a round that exists to
    compute derived quantities (a ratio, a norm) passes a monitor that
    maps the streams to those quantities, so the stop rule watches what
    the nodes actually consume.
    """
    _require_symmetric(fm)
    v = np.array(streams, dtype=float)
    single = v.ndim == 1
    if single:
        v = v[None, :]
    watch = monitor(v) if monitor is not None else v
    sums = v.sum(axis=1)
    for tick in range(1, cfg.max_iters + 1):
        wk = sample_edge_weights(topo, fm, rng)
        v_new = np.empty_like(v)
        for s in range(v.shape[0]):
            v_new[s] = v[s] - cfg.eps_c * apply_sampled_laplacian(topo, wk, v[s])
        new_sums = v_new.sum(axis=1)
        if np.abs(new_sums - sums).max() > 1e-9 * max(1.0, float(np.abs(sums).max())):
            raise AssertionError("consensus tick failed to preserve stream sums")
        watch_new = monitor(v_new) if monitor is not None else v_new
        with np.errstate(invalid="ignore"):
            done = np.abs(watch_new - watch) <= delta * np.maximum(np.abs(watch), _ZERO_GUARD)
        v = v_new
        watch = watch_new
        if done.all():
            return (v[0] if single else v), tick
    raise RoundTimeoutError(
        f"consensus round did not reach delta={delta} within {cfg.max_iters} ticks",
        values=(v[0] if single else v),
        iters=cfg.max_iters,
    )


def _step_monitor(v: np.ndarray) -> np.ndarray:
    """Per-node quantities round 2 exists to deliver: the Rayleigh-ratio
    value (the averaged numerator; its denominator is the constant
    maintained by the scaled eigenvector update) and the scaled norm."""
    return np.vstack([v[0], np.sqrt(np.maximum(v[1], 0.0))])


def _ratio_monitor(v: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return (v[0] / v[1])[None, :]


def consensus_average(
    values: np.ndarray,
    topo: Topology,
    fm: LinkFailureModel,
    cfg: ConsensusConfig,
    rng: np.random.Generator,
    delta: float | None = None,
) -> tuple[np.ndarray, int]:
    """Average-consensus round over failing links.

    Each tick applies I - eps_c*L[t] with a fresh symmetric failure
    sample; the doubly stochastic ticks preserve the sum, so the common
    limit is the true mean of the inputs.  Returns the per-node values
    at stop time and the number of ticks used.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (topo.n,):
        raise ValueError(f"values must have shape ({topo.n},), got {values.shape}")
    return _consensus_core(values, topo, fm, cfg, rng, cfg.delta1 if delta is None else delta)


def consensus_ratio(
    numer: np.ndarray,
    denom: np.ndarray,
    topo: Topology,
    fm: LinkFailureModel,
    cfg: ConsensusConfig,
    rng: np.random.Generator,
    delta: float | None = None,
) -> tuple[np.ndarray, int]:
    """Weighted-average consensus: run the two recursions on the same
    link samples and read out the per-node ratio, which converges to
    sum(numer)/sum(denom) — a Rayleigh ratio when fed x_i*b_i and
    x_i**2."""
    numer = np.asarray(numer, dtype=float)
    denom = np.asarray(denom, dtype=float)
    if numer.shape != (topo.n,) or denom.shape != (topo.n,):
        raise ValueError(f"numer and denom must both have shape ({topo.n},)")
    if abs(denom.sum()) < _DENOM_FLOOR:
        raise ValueError("denominator entries sum to ~0; the ratio limit is undefined")
    streams = np.vstack([numer, denom])
    out, ticks = _consensus_core(streams, topo, fm, cfg, rng,
                                 cfg.delta2 if delta is None else delta,
                                 monitor=_ratio_monitor)
    if np.abs(out[1]).min() < _DENOM_FLOOR:
        raise DegenerateIterateError("a node's local denominator collapsed below 1e-12 at read-out")
    return out[0] / out[1], ticks


def local_b(
    x_i: float,
    neighbor_x: np.ndarray,
    link_weights: np.ndarray,
    m: float,
    eps_bar: float,
    eps_k: float,
) -> tuple[float, float]:
    """Node-local pieces of the deflated updates, from this tick's
    surviving incident links: b_i = x_i + eps*sum_j a_ij (x_j - x_i) - m
    evaluated at eps_bar and at eps[k]."""
    neighbor_x = np.asarray(neighbor_x, dtype=float)
    link_weights = np.asarray(link_weights, dtype=float)
    acc = float(link_weights @ (neighbor_x - x_i))
    return x_i + eps_bar * acc - m, x_i + eps_k * acc - m


def distributed_step(
    nodes: NodeStates,
    topo: Topology,
    fm: LinkFailureModel,
    schedule: StepSchedule,
    cfg: ConsensusConfig,
    rng: np.random.Generator,
) -> tuple[NodeStates, tuple[int, int]]:
    """One outer iteration of the distributed estimator.

    Round 1 estimates the mean m[k] of the x_i to delta1.  Each node
    then forms its local b_i and b2_i from one shared link sample.
    Round 2 spreads the two scalars each node must broadcast, x_i*b_i
    and b2_i**2, together to delta2: because the scaled eigenvector
    update keeps mean(x**2) = 1, the average of x_i*b_i already is the
    Rayleigh ratio, and sqrt(mean(b2**2)) = ||b2||/sqrt(n) is the scaled
    norm.  The y, z and x updates are then purely local; x_i becomes
    b2_i over the scaled norm, restoring the sqrt(n) scale.  Returns the
    updated ensemble and the (N1, N2) tick counts; the broadcast cost is
    (N1 + 2*N2) scalars per node.
    """
    _require_symmetric(fm)
    eps_k, alpha_k = schedule.value(nodes.k)
    eps_bar = schedule.eps_bar
    m_vec, n1 = consensus_average(nodes.x, topo, fm, cfg, rng, delta=cfg.delta1)
    wk = sample_edge_weights(topo, fm, rng)
    lap_x = apply_sampled_laplacian(topo, wk, nodes.x)
    b = nodes.x - eps_bar * lap_x - m_vec
    b2 = nodes.x - eps_k * lap_x - m_vec
    streams = np.vstack([nodes.x * b, b2 * b2])
    out, n2 = _consensus_core(streams, topo, fm, cfg, rng, delta=cfg.delta2,
                              monitor=_step_monitor)
    y0 = out[0]
    scaled_norm = np.sqrt(np.maximum(out[1], 0.0))
    if scaled_norm.min() < 1e-14:
        raise DegenerateIterateError("the scaled norm estimate collapsed; iterate annihilated")
    y_new = nodes.y + alpha_k * (y0 - nodes.y)
    z_new = (1.0 - y_new) / eps_bar
    x_new = b2 / scaled_norm
    updated = NodeStates(x=x_new, y=y_new, z=z_new, m=m_vec, b=b, b2=b2, k=nodes.k + 1)
    return updated, (n1, n2)


def run_distributed(
    topo: Topology,
    fm: LinkFailureModel,
    schedule: StepSchedule,
    cfg: ConsensusConfig,
    outer_iters: int,
    rng: np.random.Generator,
    nodes: NodeStates | None = None,
    scalar_cost: float = 1.0,
    stop_delta3: float | None = None,
    stop_patience: int = 50,
    trace_every: int = 1,
) -> tuple[NodeStates, TraceRecord, CommCost]:
    """Iterate distributed_step, accounting communication cost.

    The trace reports node 0's estimate plus the cross-node dispersion,
    and the per-step and accumulated tick counts.  When stop_delta3 is
    set, the run ends once node 0's z changes by less than delta3
    (relative) for stop_patience consecutive outer iterations.
    """
    if outer_iters < 1:
        raise ValueError(f"outer_iters must be >= 1, got {outer_iters}")
    if nodes is None:
        nodes = NodeStates.init_random(topo.n, rng)
    cost = CommCost(scalar_cost=scalar_cost)
    trace = TraceRecord(columns=("outer_k", "n1", "n2", "cost_total", "z_node0", "z_dispersion", "m_k"))
    quiet = 0
    for i in range(outer_iters):
        z_prev = float(nodes.z[0])
        nodes, (n1, n2) = distributed_step(nodes, topo, fm, schedule, cfg, rng)
        cost.add_step(n1, n2)
        if trace_every and (nodes.k % trace_every == 0 or i == outer_iters - 1):
            trace.append((nodes.k, n1, n2, cost.total, float(nodes.z[0]),
                          nodes.z_dispersion(), float(nodes.m[0])))
        if stop_delta3 is not None:
            if abs(nodes.z[0] - z_prev) <= stop_delta3 * max(abs(z_prev), _ZERO_GUARD):
                quiet += 1
                if quiet >= stop_patience:
                    break
            else:
                quiet = 0
    return nodes, trace, cost
