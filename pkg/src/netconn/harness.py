"""Reproducible experiment runner.

A run is described by one JSON document; the same document plus the same
seed list always produces byte-identical CSV traces and a summary JSON
with aggregate statistics.  Scenarios map onto the library pipelines:

    estimate    centralized estimator on a fixed lossy topology
    track       adaptive (constant-step) estimator across scripted
                topology switches
    distributed consensus-based estimator with communication accounting
    control     estimator interleaved with the power controller
    mac-sweep   connectivity-vs-power curves under the collision MAC
    kw          Kiefer-Wolfowitz connectivity maximization

Config layout (keys by scenario; common keys first)::

    {
      "scenario": "estimate",
      "topology": {"rgg": {"n": 20, "area": [60, 60], "seed": 7,
                            "p_tx": 1.0, "p_th": 0.01, "xi": 2.0}}
                  or {"file": "topo.json"},
      "failures": {"p_success": 0.8, "mode": "symmetric"},
      "schedule": {"kind": "diminishing", "eps_bar": 0.2, "eps0": 0.4,
                    "gamma": 0.51, "alpha0": 1.5, "beta": 0.51},
      "iters": 2000, "trace_every": 10, "seeds": [0, 1, 2],
      // track:        "segments": [{"iters": 500, "topology": {...}}, ...]
      // distributed:  "consensus": {"eps_c": 0.2, "delta1": 0.1,
      //                "delta2": 1e-4, "delta3": 5e-4}, "outer_iters": 300
      // control:      "control": {"lambda_star": 0.15, "mu": 0.05, "p0": 1.0}
      //               plus "failures" or "mac" {"channels": 5}
      // mac-sweep:    "mac_sweep": {"channels": [5, 10, 15, 20],
      //                "p_grid": {"from": 0.25, "to": 6.0, "num": 16}}
      // kw:           "kw": {"q0": 1.0, "c0": 1.0, "inner_iters": 500,
      //                "t_max": 25, "p0": 1.0}, "mac": {"channels": 15}
    }

Seeds may also be given as a string "A..B" (inclusive).  Every parameter
is validated against the module preconditions before anything runs.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .consensus import ConsensusConfig, NodeStates, run_distributed
from .control import (
    ControlConfig,
    KwConfig,
    MacModel,
    PowerGraph,
    collision_success_prob,
    connectivity_vs_power,
    kw_maximize,
    run_connectivity_control,
)
from .estimator import fiedler_error, run_estimator, run_tracking
from .graphs import (
    DegenerateGraphError,
    LinkFailureModel,
    RadioParams,
    Topology,
    build_rgg,
    expected_laplacian,
    load_topology,
)
from .spectral import StepSchedule, dense_sym_eig, eps_bar_bound
from .trace import TraceRecord, format_value

__all__ = ["ConfigError", "ResolvedConfig", "resolve_config", "run_scenario", "compare_oracle",
           "SCENARIOS", "config_hash"]

SCENARIOS = ("estimate", "track", "distributed", "control", "mac-sweep", "kw")

_DEGENERATE_TOL = 1e-9


class ConfigError(ValueError):
    """A configuration field failed validation; message names the field."""


def _field(doc: dict, key: str, where: str, required: bool = True, default=None):
    if key not in doc:
        if required:
            raise ConfigError(f"{where}: missing required key '{key}'")
        return default
    return doc[key]


def _positions_for_rgg(spec: dict, where: str) -> tuple[np.ndarray, RadioParams]:
    n = int(_field(spec, "n", where))
    if n < 2:
        raise ConfigError(f"{where}.n: need at least 2 nodes, got {n}")
    area = _field(spec, "area", where)
    if not (isinstance(area, (list, tuple)) and len(area) == 2 and all(a > 0 for a in area)):
        raise ConfigError(f"{where}.area: expected [width, height] with positive sides, got {area!r}")
    seed = int(_field(spec, "seed", where))
    p_tx = float(_field(spec, "p_tx", where, required=False, default=1.0))
    p_th = float(_field(spec, "p_th", where, required=False, default=0.01))
    xi = float(_field(spec, "xi", where, required=False, default=2.0))
    rho = spec.get("rho")
    if rho is None:
        rho = n / (float(area[0]) * float(area[1]))
    try:
        radio = RadioParams(p_tx=p_tx, p_th=p_th, xi=xi, rho=float(rho))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    gen = np.random.default_rng(seed)
    positions = gen.uniform([0.0, 0.0], [float(area[0]), float(area[1])], size=(n, 2))
    return positions, radio


def _resolve_topology(spec: dict, where: str) -> tuple[Topology, RadioParams | None]:
    if not isinstance(spec, dict) or not ({"rgg", "file"} & spec.keys()):
        raise ConfigError(f"{where}: expected an object with an 'rgg' or 'file' key")
    if "file" in spec:
        try:
            return load_topology(spec["file"]), None
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{where}.file: {exc}") from exc
    positions, radio = _positions_for_rgg(spec["rgg"], f"{where}.rgg")
    try:
        return build_rgg(positions, radio), radio
    except ValueError as exc:
        raise ConfigError(f"{where}.rgg: {exc}") from exc


def _resolve_failures(spec: dict, where: str) -> LinkFailureModel:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected an object")
    p = _field(spec, "p_success", where)
    mode = spec.get("mode", "symmetric")
    try:
        return LinkFailureModel(success_prob=float(p), symmetry=mode)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _resolve_schedule(spec: dict, where: str) -> StepSchedule:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where}: expected an object")
    kind = spec.get("kind", "diminishing")
    try:
        if kind == "constant":
            return StepSchedule.constant(
                eps_bar=float(_field(spec, "eps_bar", where)),
                eps=float(spec["eps0"]) if "eps0" in spec else None,
                alpha=float(spec.get("alpha0", 1.0)),
            )
        return StepSchedule.diminishing(
            eps_bar=float(_field(spec, "eps_bar", where)),
            eps0=float(_field(spec, "eps0", where)),
            gamma=float(_field(spec, "gamma", where)),
            alpha0=float(_field(spec, "alpha0", where)),
            beta=float(_field(spec, "beta", where)),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _resolve_seeds(spec, where: str) -> list[int]:
    if isinstance(spec, str):
        lo, sep, hi = spec.partition("..")
        if not sep:
            raise ConfigError(f"{where}: seed ranges look like 'A..B', got {spec!r}")
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    if isinstance(spec, int):
        return [spec]
    if isinstance(spec, (list, tuple)) and spec and all(isinstance(s, int) for s in spec):
        return list(spec)
    raise ConfigError(f"{where}: expected an int, a list of ints or 'A..B', got {spec!r}")


def _oracle_summary(lap_bar: np.ndarray) -> dict:
    pairs = dense_sym_eig(lap_bar)
    lam2 = pairs[1].value if len(pairs) > 1 else 0.0
    lam3 = pairs[2].value if len(pairs) > 2 else lam2
    return {
        "lambda2": lam2,
        "lambda3": lam3,
        "lambda_max": pairs[-1].value,
        "degenerate_connectivity": bool(lam2 <= _DEGENERATE_TOL),
        "degenerate_gap": bool(lam3 - lam2 <= _DEGENERATE_TOL),
    }


@dataclass
class ResolvedConfig:
    """Validated configuration with all module objects constructed."""

    scenario: str
    doc: dict
    seeds: list[int]
    topology: Topology | None = None
    radio: RadioParams | None = None
    failures: LinkFailureModel | None = None
    schedule: StepSchedule | None = None
    iters: int = 0
    trace_every: int = 1
    segments: list[tuple[Topology, int]] | None = None
    consensus: ConsensusConfig | None = None
    outer_iters: int = 0
    scalar_cost: float = 1.0
    common_init: bool = False
    control: ControlConfig | None = None
    control_p0: float = 1.0
    mac_channels: int | None = None
    mac_sweep_channels: list[int] | None = None
    p_grid: np.ndarray | None = None
    kw: KwConfig | None = None
    kw_p0: float = 1.0
    oracle: dict | None = None
    deflation_stages: int = 1


def _check_eps_bar(schedule: StepSchedule, lap_bar: np.ndarray, where: str) -> None:
    try:
        bound = eps_bar_bound(lap_bar)
    except DegenerateGraphError:
        return  # edgeless expected graph: flagged degenerate, estimator still runs
    if not schedule.eps_bar < bound:
        raise ConfigError(
            f"{where}: eps_bar={schedule.eps_bar} must be below 2/lambda_max = {bound:.6g} "
            "for the expected graph"
        )


def resolve_config(doc: dict, overrides: dict | None = None) -> ResolvedConfig:
    """Validate a config document and build every module object.

    Overrides (CLI flags) replace top-level keys before validation.
    Raises ConfigError with the offending field in the message.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object at the top level")
    doc = dict(doc)
    for key, value in (overrides or {}).items():
        if value is not None:
            doc[key] = value
    scenario = _field(doc, "scenario", "config")
    if scenario not in SCENARIOS:
        raise ConfigError(f"config.scenario: unknown scenario {scenario!r}; pick one of {', '.join(SCENARIOS)}")
    seeds = _resolve_seeds(_field(doc, "seeds", "config", required=False, default=[0]), "config.seeds")
    rc = ResolvedConfig(scenario=scenario, doc=doc, seeds=seeds)
    rc.trace_every = int(doc.get("trace_every", 1))
    if rc.trace_every < 0:
        raise ConfigError(f"config.trace_every: must be >= 0, got {rc.trace_every}")

    if scenario in ("estimate", "distributed"):
        rc.topology, rc.radio = _resolve_topology(_field(doc, "topology", "config"), "config.topology")
        rc.failures = _resolve_failures(_field(doc, "failures", "config"), "config.failures")
        rc.schedule = _resolve_schedule(_field(doc, "schedule", "config"), "config.schedule")
        lap_bar = expected_laplacian(rc.topology, rc.failures)
        rc.oracle = _oracle_summary(lap_bar)
        _check_eps_bar(rc.schedule, lap_bar, "config.schedule.eps_bar")

    if scenario == "estimate":
        rc.iters = int(_field(doc, "iters", "config"))
        if rc.iters < 1:
            raise ConfigError(f"config.iters: must be >= 1, got {rc.iters}")
        rc.deflation_stages = int(doc.get("deflation_stages", 1))
        if rc.deflation_stages not in (1, 2):
            raise ConfigError(f"config.deflation_stages: must be 1 or 2, got {rc.deflation_stages}")

    elif scenario == "track":
        rc.failures = _resolve_failures(_field(doc, "failures", "config"), "config.failures")
        rc.schedule = _resolve_schedule(_field(doc, "schedule", "config"), "config.schedule")
        segs = _field(doc, "segments", "config")
        if not isinstance(segs, list) or not segs:
            raise ConfigError("config.segments: expected a non-empty list")
        rc.segments = []
        oracle_vals = []
        n_ref = None
        for idx, seg in enumerate(segs):
            where = f"config.segments[{idx}]"
            topo, _ = _resolve_topology(_field(seg, "topology", where), f"{where}.topology")
            iters = int(_field(seg, "iters", where))
            if iters < 1:
                raise ConfigError(f"{where}.iters: must be >= 1, got {iters}")
            if n_ref is None:
                n_ref = topo.n
            elif topo.n != n_ref:
                raise ConfigError(f"{where}: segment node count {topo.n} != {n_ref}")
            lap_bar = expected_laplacian(topo, rc.failures)
            oracle_vals.append(_oracle_summary(lap_bar))
            rc.segments.append((topo, iters))
        rc.oracle = {"segments": oracle_vals}

    elif scenario == "distributed":
        spec = _field(doc, "consensus", "config")
        try:
            rc.consensus = ConsensusConfig(
                eps_c=float(_field(spec, "eps_c", "config.consensus")),
                delta1=float(_field(spec, "delta1", "config.consensus")),
                delta2=float(_field(spec, "delta2", "config.consensus")),
                delta3=float(spec.get("delta3", 5e-4)),
                max_iters=int(spec.get("max_iters", 100_000)),
            )
        except ValueError as exc:
            raise ConfigError(f"config.consensus: {exc}") from exc
        if rc.failures.symmetry != "symmetric":
            raise ConfigError("config.failures.mode: the distributed scenario needs symmetric failures")
        lam_max = rc.oracle["lambda_max"]
        if lam_max > 0 and not rc.consensus.eps_c < 2.0 / lam_max:
            raise ConfigError(
                f"config.consensus.eps_c: {rc.consensus.eps_c} must be below 2/lambda_max = {2.0 / lam_max:.6g}"
            )
        rc.outer_iters = int(_field(doc, "outer_iters", "config"))
        if rc.outer_iters < 1:
            raise ConfigError(f"config.outer_iters: must be >= 1, got {rc.outer_iters}")
        rc.scalar_cost = float(doc.get("scalar_cost", 1.0))
        rc.common_init = bool(doc.get("common_init", False))

    elif scenario == "control":
        topo_spec = _field(doc, "topology", "config")
        if "rgg" not in topo_spec:
            raise ConfigError("config.topology: the control scenario needs an 'rgg' topology (positions + radio)")
        rc.topology, rc.radio = _resolve_topology(topo_spec, "config.topology")
        rc.schedule = _resolve_schedule(_field(doc, "schedule", "config"), "config.schedule")
        spec = _field(doc, "control", "config")
        try:
            rc.control = ControlConfig(
                lambda_star=float(_field(spec, "lambda_star", "config.control")),
                mu=float(_field(spec, "mu", "config.control")),
                p_min=float(spec.get("p_min", 1e-4)),
                p_max=float(spec.get("p_max", 1e3)),
            )
        except ValueError as exc:
            raise ConfigError(f"config.control: {exc}") from exc
        rc.control_p0 = float(spec.get("p0", 1.0))
        has_fm = "failures" in doc
        has_mac = "mac" in doc
        if has_fm == has_mac:
            raise ConfigError("config: the control scenario needs exactly one of 'failures' or 'mac'")
        if has_fm:
            rc.failures = _resolve_failures(doc["failures"], "config.failures")
        else:
            rc.mac_channels = int(_field(doc["mac"], "channels", "config.mac"))
        rc.iters = int(_field(doc, "iters", "config"))
        if rc.iters < 1:
            raise ConfigError(f"config.iters: must be >= 1, got {rc.iters}")

    elif scenario == "mac-sweep":
        topo_spec = _field(doc, "topology", "config")
        if "rgg" not in topo_spec:
            raise ConfigError("config.topology: the mac-sweep scenario needs an 'rgg' topology")
        rc.topology, rc.radio = _resolve_topology(topo_spec, "config.topology")
        spec = _field(doc, "mac_sweep", "config")
        channels = _field(spec, "channels", "config.mac_sweep")
        if not (isinstance(channels, list) and channels and all(isinstance(c, int) and c >= 2 for c in channels)):
            raise ConfigError("config.mac_sweep.channels: expected a list of integers >= 2")
        rc.mac_sweep_channels = channels
        rc.p_grid = _resolve_grid(_field(spec, "p_grid", "config.mac_sweep"), "config.mac_sweep.p_grid")

    elif scenario == "kw":
        topo_spec = _field(doc, "topology", "config")
        if "rgg" not in topo_spec:
            raise ConfigError("config.topology: the kw scenario needs an 'rgg' topology")
        rc.topology, rc.radio = _resolve_topology(topo_spec, "config.topology")
        rc.mac_channels = int(_field(_field(doc, "mac", "config"), "channels", "config.mac"))
        spec = _field(doc, "kw", "config")
        try:
            rc.kw = KwConfig(
                q0=float(_field(spec, "q0", "config.kw")),
                c0=float(_field(spec, "c0", "config.kw")),
                inner_iters=int(spec.get("inner_iters", 500)),
                t_max=int(spec.get("t_max", 50)),
            )
        except ValueError as exc:
            raise ConfigError(f"config.kw: {exc}") from exc
        rc.kw_p0 = float(spec.get("p0", 1.0))
        if rc.kw_p0 <= 0:
            raise ConfigError(f"config.kw.p0: must be > 0, got {rc.kw_p0}")

    return rc


def _resolve_grid(spec, where: str) -> np.ndarray:
    if isinstance(spec, dict):
        try:
            grid = np.linspace(float(spec["from"]), float(spec["to"]), int(spec["num"]))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{where}: expected {{from, to, num}}, got {spec!r} ({exc})") from exc
    elif isinstance(spec, list) and len(spec) >= 2:
        grid = np.asarray([float(v) for v in spec])
    else:
        raise ConfigError(f"{where}: expected a list of >= 2 powers or {{from, to, num}}")
    if np.any(grid <= 0):
        raise ConfigError(f"{where}: powers must be > 0")
    return grid


def config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _meta(rc: ResolvedConfig, seed: int) -> dict:
    return {"config_hash": config_hash(rc.doc), "seed": seed, "version": f"netconn-{__version__}"}


def _run_estimate_seed(rc: ResolvedConfig, seed: int) -> tuple[TraceRecord, dict]:
    rng = np.random.default_rng(seed)
    lap_bar = expected_laplacian(rc.topology, rc.failures)
    pairs = dense_sym_eig(lap_bar)
    state, trace = run_estimator(
        rc.topology, rc.failures, rc.schedule, rc.iters, rng,
        oracle=pairs, trace_every=rc.trace_every,
    )
    lam2 = rc.oracle["lambda2"]
    final = {
        "seed": seed,
        "z_final": state.z,
        "abs_err": abs(state.z - lam2),
        "alignment": abs(float(state.x @ pairs[1].vector)),
        "fiedler_err": fiedler_error(state.x, pairs[1].vector),
    }
    if rc.deflation_stages == 2:
        from .estimator import estimate_spectrum

        rng2 = np.random.default_rng(seed)
        stages = estimate_spectrum(rc.topology, rc.failures, rc.schedule,
                                   stages=2, iters=rc.iters, rng=rng2)
        final["z3_final"] = stages[1][0]
        final["z3_abs_err"] = abs(stages[1][0] - rc.oracle["lambda3"])
    return trace, final


def _run_track_seed(rc: ResolvedConfig, seed: int) -> tuple[TraceRecord, dict]:
    rng = np.random.default_rng(seed)
    oracle_vals = [seg["lambda2"] for seg in rc.oracle["segments"]]
    state, trace = run_tracking(
        rc.segments, rc.failures, rc.schedule, rng,
        oracle_values=oracle_vals, trace_every=rc.trace_every,
    )
    return trace, {"seed": seed, "z_final": state.z}


def _run_distributed_seed(rc: ResolvedConfig, seed: int) -> tuple[TraceRecord, dict]:
    rng = np.random.default_rng(seed)
    nodes = NodeStates.init_random(rc.topology.n, rng, common=rc.common_init)
    nodes, trace, cost = run_distributed(
        rc.topology, rc.failures, rc.schedule, rc.consensus, rc.outer_iters, rng,
        nodes=nodes, scalar_cost=rc.scalar_cost, trace_every=rc.trace_every,
    )
    lam2 = rc.oracle["lambda2"]
    return trace, {
        "seed": seed,
        "z_final": float(nodes.z[0]),
        "abs_err": abs(float(nodes.z[0]) - lam2),
        "z_dispersion": nodes.z_dispersion(),
        "comm_total": cost.total,
    }


def _run_control_seed(rc: ResolvedConfig, seed: int) -> tuple[TraceRecord, dict]:
    rng = np.random.default_rng(seed)
    mac = None
    if rc.mac_channels is not None:
        mac = MacModel(m_channels=rc.mac_channels, radio=rc.radio)
    p_final, state, trace = run_connectivity_control(
        rc.topology.positions, rc.schedule, rc.control, rc.iters, rng,
        radio=rc.radio, fm=rc.failures, mac=mac, p0=rc.control_p0,
        trace_every=rc.trace_every,
    )
    lam = np.asarray(trace.column("lambda2_true"))
    tail = lam[int(math.floor(0.8 * lam.size)):]
    return trace, {
        "seed": seed,
        "p_final": p_final,
        "z_final": state.z,
        "lambda2_tail_mean": float(tail.mean()) if tail.size else float("nan"),
    }


def _run_kw_seed(rc: ResolvedConfig, seed: int) -> tuple[TraceRecord, dict]:
    rng = np.random.default_rng(seed)
    mac = MacModel(m_channels=rc.mac_channels, radio=rc.radio)
    trace_oracle = bool(rc.doc.get("kw", {}).get("trace_oracle", True))
    p_final, trace = kw_maximize(rc.topology.positions, mac, rc.kw, rc.kw_p0, rng,
                                 trace_oracle=trace_oracle)
    summary = {"seed": seed, "p_final": p_final}
    if trace_oracle:
        summary["lambda2_final"] = trace.last("lambda2_true")
    else:
        pg = PowerGraph(rc.topology.positions, rc.radio)
        summary["lambda2_final"] = collision_success_prob(
            MacModel(m_channels=rc.mac_channels, radio=rc.radio), p_final
        ) * pg.lambda2_geom(p_final)
    return trace, summary


_SEED_RUNNERS = {
    "estimate": _run_estimate_seed,
    "track": _run_track_seed,
    "distributed": _run_distributed_seed,
    "control": _run_control_seed,
    "kw": _run_kw_seed,
}


def _seed_worker(args):
    doc, seed, out_dir = args
    rc = resolve_config(doc)
    trace, final = _SEED_RUNNERS[rc.scenario](rc, seed)
    trace.meta.update(_meta(rc, seed))
    path = os.path.join(out_dir, f"{rc.scenario.replace('-', '_')}_seed{seed}.csv")
    trace.write_csv(path)
    return seed, final, path


def _run_mac_sweep(rc: ResolvedConfig, out_dir: str) -> dict:
    pg = PowerGraph(rc.topology.positions, rc.radio)
    trace = TraceRecord(columns=("row", "m_channels", "p_tx", "p_success", "lambda2_geom", "lambda2_expected"))
    trace.meta.update({"config_hash": config_hash(rc.doc), "seed": "-", "version": f"netconn-{__version__}"})
    summary_curves = []
    row = 0
    worst = 0.0
    for m in rc.mac_sweep_channels:
        mac = MacModel(m_channels=m, radio=rc.radio)
        curve = connectivity_vs_power(rc.topology.positions, mac, rc.p_grid, power_graph=pg)
        worst = max(worst, curve.factorization_error)
        for p, pc, lg, le in zip(curve.p_grid, curve.success_prob, curve.lambda2_geom, curve.lambda2_expected):
            trace.append((row, m, float(p), float(pc), float(lg), float(le)))
            row += 1
        summary_curves.append({
            "m_channels": m,
            "lambda2_max": float(curve.lambda2_expected.max()),
            "argmax_p_tx": float(curve.p_grid[int(curve.lambda2_expected.argmax())]),
        })
    path = os.path.join(out_dir, "mac_sweep.csv")
    trace.write_csv(path)
    return {"curves": summary_curves, "factorization_error": worst, "files": [path]}


def run_scenario(doc: dict, out_dir: str, jobs: int = 1) -> dict:
    """Execute a scenario per seed and write traces plus a summary JSON.

    Per-seed failures are captured in the summary without aborting the
    sweep.  Returns the summary dict (also written to summary.json).
    """
    rc = resolve_config(doc)
    os.makedirs(out_dir, exist_ok=True)
    summary: dict = {
        "scenario": rc.scenario,
        "config": rc.doc,
        "config_hash": config_hash(rc.doc),
        "version": f"netconn-{__version__}",
        "seeds": rc.seeds,
        "oracle": rc.oracle,
        "per_seed": [],
        "errors": [],
        "files": [],
    }
    if rc.scenario == "mac-sweep":
        summary.update(_run_mac_sweep(rc, out_dir))
    else:
        tasks = [(rc.doc, seed, out_dir) for seed in rc.seeds]
        results = []
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for seed, task in zip(rc.seeds, tasks):
                    try:
                        results.append(pool.submit(_seed_worker, task))
                    except Exception as exc:  # pragma: no cover - submission failure
                        summary["errors"].append({"seed": seed, "error": str(exc)})
                gathered = []
                for seed, fut in zip(rc.seeds, results):
                    try:
                        gathered.append(fut.result())
                    except Exception as exc:
                        summary["errors"].append({"seed": seed, "error": str(exc)})
                results = gathered
        else:
            gathered = []
            for task in tasks:
                try:
                    gathered.append(_seed_worker(task))
                except ConfigError:
                    raise
                except Exception as exc:
                    summary["errors"].append({"seed": task[1], "error": str(exc)})
            results = gathered
        results.sort(key=lambda item: item[0])
        for seed, final, path in results:
            summary["per_seed"].append(final)
            summary["files"].append(path)
        _aggregate(rc, summary)
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    summary["summary_path"] = path
    return summary


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _aggregate(rc: ResolvedConfig, summary: dict) -> None:
    per_seed = summary["per_seed"]
    if not per_seed:
        return
    if rc.scenario in ("estimate", "distributed"):
        lam2 = rc.oracle["lambda2"]
        z_col = "z_node0" if rc.scenario == "distributed" else "z"
        curves = []
        for path in summary["files"]:
            trace = TraceRecord.read_csv(path)
            ks = trace.column(trace.columns[0])
            zs = trace.column(z_col)
            curves.append((ks, zs))
        common = curves[0][0]
        if all(c[0] == common for c in curves):
            mse = [float(np.mean([(c[1][i] - lam2) ** 2 for c in curves])) for i in range(len(common))]
            summary["mse_curve"] = {"k": list(common), "mse": mse}
        errs = sorted(s["abs_err"] for s in per_seed)
        summary["median_abs_err"] = errs[len(errs) // 2]
    if rc.scenario == "distributed":
        summary["comm_total_mean"] = float(np.mean([s["comm_total"] for s in per_seed]))
    if rc.scenario == "control":
        summary["p_final_mean"] = float(np.mean([s["p_final"] for s in per_seed]))
        summary["lambda2_tail_mean"] = float(np.mean([s["lambda2_tail_mean"] for s in per_seed]))
    if rc.scenario == "kw":
        finals = sorted(s["lambda2_final"] for s in per_seed)
        summary["lambda2_final_median"] = finals[len(finals) // 2]


def compare_oracle(doc: dict) -> dict:
    """Run an estimate/track/distributed scenario and report the
    estimates against the dense eigensolver oracle: absolute error,
    Fiedler alignment and the error-versus-bound series."""
    rc = resolve_config(doc)
    if rc.scenario not in ("estimate", "track", "distributed"):
        raise ConfigError(f"config.scenario: compare_oracle supports estimate/track/distributed, got {rc.scenario!r}")
    report: dict = {"scenario": rc.scenario, "oracle": rc.oracle, "per_seed": []}
    if rc.scenario == "track":
        for seed in rc.seeds:
            trace, final = _run_track_seed(rc, seed)
            segs = []
            for idx, seg_oracle in enumerate(rc.oracle["segments"]):
                zs = [r for r in trace.rows if r[1] == idx]
                if zs:
                    segs.append({"segment": idx, "lambda2": seg_oracle["lambda2"],
                                 "z_final": zs[-1][3], "abs_err": abs(zs[-1][3] - seg_oracle["lambda2"])})
            report["per_seed"].append({"seed": seed, "segments": segs})
        return report
    lam2 = rc.oracle["lambda2"]
    bound_rows = None
    for seed in rc.seeds:
        if rc.scenario == "estimate":
            trace, final = _run_estimate_seed(rc, seed)
            ks = trace.column("k")
            errs = np.abs(np.asarray(trace.column("z")) - lam2)
            if bound_rows is None:
                bound_rows = {"k": ks, "bound": trace.column("bound"), "abs_err": [list(errs)]}
            else:
                bound_rows["abs_err"].append(list(errs))
        else:
            trace, final = _run_distributed_seed(rc, seed)
        report["per_seed"].append(final)
    if bound_rows is not None:
        med = np.median(np.asarray(bound_rows["abs_err"]), axis=0)
        report["bound_curve"] = {"k": bound_rows["k"], "bound": bound_rows["bound"],
                                 "median_abs_err": [float(v) for v in med]}
    report["degenerate"] = rc.oracle.get("degenerate_connectivity", False)
    return report
