"""Centralized stochastic power iteration.

Each iteration draws one random Laplacian L[k], forms the deflated
matrices B[k] = I - eps_bar*L[k] - (1/n)ones and
B2[k] = I - eps[k]*L[k] - (1/n)ones from that same draw, updates the
connectivity estimate through a smoothed Rayleigh ratio and pushes the
eigenvector iterate through B2[k].  With a connected expected graph and
diminishing steps the iterate converges to the normalized Fiedler
vector of the expected Laplacian and z[k] to its second-smallest
eigenvalue, almost surely, even though individual samples may be
disconnected.

Sequential deflation reuses the same recursion to pull out the third
eigenpair once the first stage has converged.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import (
    LinkFailureModel,
    Topology,
    apply_sampled_laplacian,
    sample_edge_weights,
)
from .spectral import EigPair, StepSchedule, convergence_bound, sign_normalize
from .trace import TraceRecord

__all__ = [
    "DegenerateIterateError",
    "EstimatorState",
    "DeflationContext",
    "init_state",
    "step_centralized",
    "run_estimator",
    "run_tracking",
    "deflated_matrices",
    "estimate_spectrum",
    "fiedler_error",
]

_NORM_FLOOR = 1e-14
_MEAN_REMOVAL_PERIOD = 100


class DegenerateIterateError(RuntimeError):
    """The power-iteration step annihilated the iterate (||B2 x|| ~ 0)."""


@dataclass(frozen=True)
class EstimatorState:
    """Iterates of the power iteration: x approximates the Fiedler
    vector, y the matching eigenvalue of the deflated consensus matrix,
    z = (1 - y)/eps_bar the algebraic connectivity."""

    x: np.ndarray
    y: float
    z: float
    k: int = 0


@dataclass(frozen=True)
class DeflationContext:
    """Targets the third eigenpair by removing already-known ones.

    known_pairs holds the previously estimated (value, vector) pairs;
    vectors must be unit norm and mutually orthogonal.
    """

    stage: int
    known_pairs: tuple[EigPair, ...] = ()

    def __post_init__(self):
        if self.stage not in (2, 3):
            raise ValueError(f"stage must be 2 or 3, got {self.stage}")
        if self.stage == 3 and len(self.known_pairs) != 1:
            raise ValueError("stage 3 needs exactly one known eigenpair")
        vecs = [np.asarray(p.vector, dtype=float) for p in self.known_pairs]
        for v in vecs:
            if abs(np.linalg.norm(v) - 1.0) > 1e-6:
                raise ValueError("known eigenvectors must be unit norm")
        for i in range(len(vecs)):
            for j in range(i + 1, len(vecs)):
                if abs(vecs[i] @ vecs[j]) > 1e-6:
                    raise ValueError("known eigenvectors must be mutually orthogonal")


def init_state(n: int, rng: np.random.Generator) -> EstimatorState:
    """Random initial state: x uniform on the unit sphere, then
    mean-removed and renormalized so the iterate starts inside the
    subspace orthogonal to the all-ones vector; y and z uniform in
    [0, 1]."""
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    while True:
        x = rng.standard_normal(n)
        nrm = np.linalg.norm(x)
        if nrm < _NORM_FLOOR:
            continue
        x /= nrm
        x -= x.mean()
        nrm = np.linalg.norm(x)
        if nrm >= 1e-6:
            x /= nrm
            break
    y = float(rng.uniform(0.0, 1.0))
    z = float(rng.uniform(0.0, 1.0))
    return EstimatorState(x=x, y=y, z=z, k=0)


def _deflation_terms(deflation: DeflationContext | None):
    if deflation is None or deflation.stage == 2 or not deflation.known_pairs:
        return None
    pair = deflation.known_pairs[0]
    return float(pair.value), np.asarray(pair.vector, dtype=float)


def step_centralized(
    state: EstimatorState,
    topo: Topology,
    fm: LinkFailureModel,
    schedule: StepSchedule,
    rng: np.random.Generator,
    deflation: DeflationContext | None = None,
) -> EstimatorState:
    """One iteration of the stochastic power iteration.

    Draws a single Laplacian sample and uses it for both the Rayleigh
    ratio (fixed eps_bar) and the eigenvector update (diminishing
    eps[k]); the asymmetry between the two step sizes is deliberate.
    """
    eps_k, alpha_k = schedule.value(state.k)
    eps_bar = schedule.eps_bar
    x = state.x
    wk = sample_edge_weights(topo, fm, rng)
    lap_x = apply_sampled_laplacian(topo, wk, x)
    mean_x = x.mean()
    bx = x - eps_bar * lap_x - mean_x
    b2x = x - eps_k * lap_x - mean_x
    known = _deflation_terms(deflation)
    if known is not None:
        lam2, u2 = known
        proj = float(u2 @ x)
        bx = bx - (1.0 - eps_bar * lam2) * proj * u2
        b2x = b2x - (1.0 - eps_k * lam2) * proj * u2
    xx = float(x @ x)
    y0 = float(x @ bx) / xx
    y_new = state.y + alpha_k * (y0 - state.y)
    z_new = (1.0 - y_new) / eps_bar
    nrm = float(np.linalg.norm(b2x))
    if nrm < _NORM_FLOOR:
        raise DegenerateIterateError(
            f"power-iteration update annihilated the iterate at k={state.k} (norm {nrm:.2e})"
        )
    x_new = b2x / nrm
    k_new = state.k + 1
    if k_new % _MEAN_REMOVAL_PERIOD == 0:
        # One eps[k]*noise kick per step slowly leaks mass onto the
        # all-ones direction; strip it periodically.
        x_new = x_new - x_new.mean()
        nrm = float(np.linalg.norm(x_new))
        if nrm < _NORM_FLOOR:
            raise DegenerateIterateError(f"iterate collapsed onto the all-ones vector at k={state.k}")
        x_new = x_new / nrm
    return EstimatorState(x=x_new, y=y_new, z=z_new, k=k_new)


def fiedler_error(x: np.ndarray, fiedler: np.ndarray) -> float:
    """Distance to the normalized Fiedler vector up to sign."""
    return float(min(np.linalg.norm(x - fiedler), np.linalg.norm(x + fiedler)))


def _normalize_mode(schedule: StepSchedule, mode: str) -> StepSchedule:
    if mode == "diminishing":
        return schedule
    if mode == "adaptive":
        if schedule.kind == "constant":
            return schedule
        return StepSchedule.constant(eps_bar=schedule.eps_bar, eps=schedule.eps_bar, alpha=schedule.alpha0)
    raise ValueError(f"mode must be 'diminishing' or 'adaptive', got {mode!r}")


def run_estimator(
    topo: Topology,
    fm: LinkFailureModel,
    schedule: StepSchedule,
    iters: int,
    rng: np.random.Generator,
    mode: str = "diminishing",
    oracle: list[EigPair] | None = None,
    trace_every: int = 1,
    deflation: DeflationContext | None = None,
    state: EstimatorState | None = None,
    stop_delta: float | None = None,
    stop_patience: int = 50,
) -> tuple[EstimatorState, TraceRecord]:
    """Run the estimator for a fixed number of iterations.

    mode='adaptive' freezes the steps at eps[k] = eps_bar and
    alpha[k] = alpha0 for tracking time-varying graphs.  When the oracle
    spectrum of the expected Laplacian is supplied, the trace also
    carries the Fiedler-vector error and the theoretical decay bound.
    When stop_delta is set, the run ends early once the relative change
    of z stays below it for stop_patience consecutive iterations.
    """
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    sched = _normalize_mode(schedule, mode)
    if state is None:
        state = init_state(topo.n, rng)
    lam2 = lam3 = None
    fiedler = None
    if oracle is not None:
        lam2 = oracle[1].value
        fiedler = oracle[1].vector
        lam3 = oracle[2].value if len(oracle) > 2 else None
    trace = TraceRecord(columns=("k", "y", "z", "fiedler_err", "bound"))
    eps_sum = 0.0
    quiet = 0
    for i in range(iters):
        eps_k, _ = sched.value(state.k)
        z_prev = state.z
        state = step_centralized(state, topo, fm, sched, rng, deflation=deflation)
        eps_sum += eps_k
        if trace_every and (state.k % trace_every == 0 or i == iters - 1):
            ferr = fiedler_error(state.x, fiedler) if fiedler is not None else float("nan")
            if lam2 is not None and lam3 is not None:
                bound = float(np.exp(-(lam3 - lam2) * eps_sum))
            else:
                bound = float("nan")
            trace.append((state.k, state.y, state.z, ferr, bound))
        if stop_delta is not None:
            if abs(state.z - z_prev) <= stop_delta * max(abs(z_prev), 1e-8):
                quiet += 1
                if quiet >= stop_patience:
                    break
            else:
                quiet = 0
    return state, trace


def run_tracking(
    segments: list[tuple[Topology, int]],
    fm: LinkFailureModel,
    schedule: StepSchedule,
    rng: np.random.Generator,
    oracle_values: list[float] | None = None,
    trace_every: int = 1,
) -> tuple[EstimatorState, TraceRecord]:
    """Adaptive tracking through scripted topology switches.

    Runs the constant-step estimator over each (topology, iters)
    segment, carrying the state across switches; the trace tags each row
    with the segment index and, when given, the true connectivity of the
    segment's expected graph.
    """
    if not segments:
        raise ValueError("need at least one (topology, iters) segment")
    if oracle_values is not None and len(oracle_values) != len(segments):
        raise ValueError("oracle_values must match the number of segments")
    sched = _normalize_mode(schedule, "adaptive")
    state = init_state(segments[0][0].n, rng)
    trace = TraceRecord(columns=("k", "segment", "y", "z", "lambda2_true"))
    for seg_idx, (topo, iters) in enumerate(segments):
        if topo.n != state.x.size:
            raise ValueError("all segments must share the same node count")
        true_val = float("nan") if oracle_values is None else float(oracle_values[seg_idx])
        for i in range(iters):
            state = step_centralized(state, topo, fm, sched, rng)
            if trace_every and (state.k % trace_every == 0 or i == iters - 1):
                trace.append((state.k, seg_idx, state.y, state.z, true_val))
    return state, trace


def deflated_matrices(
    ctx: DeflationContext,
    b_mat: np.ndarray,
    b2_mat: np.ndarray,
    eps_bar: float,
    eps_k: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Second-stage matrices C = B - (1 - eps_bar*lam2) u2 u2^T and
    C2 = B2 - (1 - eps_k*lam2) u2 u2^T; with the exact first pair their
    dominant eigenvector moves to the third Laplacian eigenvector."""
    known = _deflation_terms(ctx)
    if known is None:
        return np.asarray(b_mat, dtype=float), np.asarray(b2_mat, dtype=float)
    lam2, u2 = known
    outer = np.outer(u2, u2)
    c_mat = np.asarray(b_mat, dtype=float) - (1.0 - eps_bar * lam2) * outer
    c2_mat = np.asarray(b2_mat, dtype=float) - (1.0 - eps_k * lam2) * outer
    return c_mat, c2_mat


def estimate_spectrum(
    topo: Topology,
    fm: LinkFailureModel,
    schedule: StepSchedule,
    stages: int,
    iters: int,
    rng: np.random.Generator,
    trace_every: int = 0,
) -> list[tuple[float, np.ndarray]]:
    """Estimate the second (and optionally third) eigenpair of the
    expected Laplacian by sequential deflation: the first stage is the
    plain estimator, the second reruns it with the stage-1 pair removed.
    """
    if stages not in (1, 2):
        raise ValueError(f"stages must be 1 or 2, got {stages}")
    state, _ = run_estimator(topo, fm, schedule, iters, rng, trace_every=trace_every)
    u2 = sign_normalize(state.x / np.linalg.norm(state.x))
    results = [(state.z, u2)]
    if stages == 2:
        ctx = DeflationContext(stage=3, known_pairs=(EigPair(value=state.z, vector=u2),))
        state3, _ = run_estimator(
            topo, fm, schedule, iters, rng, trace_every=trace_every, deflation=ctx
        )
        u3 = sign_normalize(state3.x / np.linalg.norm(state3.x))
        results.append((state3.z, u3))
    return results
