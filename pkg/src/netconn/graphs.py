"""Network topology models with random link failures.

Graphs are undirected, with a symmetric nonnegative weight matrix and no
self loops.  A link-failure model turns a fixed "ideal" topology into a
sequence of i.i.d. random Laplacians: every active edge survives a given
iteration with its success probability, independently across iterations.
All randomness flows through an explicit ``numpy.random.Generator`` so
runs are reproducible from a seed; independent replications should use
spawned child generators.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "DegenerateGraphError",
    "Topology",
    "RadioParams",
    "LinkFailureModel",
    "coverage_radius",
    "build_rgg",
    "laplacian",
    "sample_laplacian",
    "expected_laplacian",
    "mean_degree",
    "topology_to_json",
    "topology_from_json",
    "save_topology",
    "load_topology",
]


class DegenerateGraphError(ValueError):
    """The graph has no usable spectral structure (e.g. no edges at all)."""


@dataclass(frozen=True)
class RadioParams:
    """Free-space radio parameters shared by all nodes.

    p_tx / p_th are transmit and receiver-threshold powers in mW, xi is
    the path-loss exponent (2 for free space) and rho the node density
    in nodes per square meter (only used by degree/collision formulas).
    """

    p_tx: float
    p_th: float
    xi: float = 2.0
    rho: float = 1.0

    def __post_init__(self):
        for name in ("p_tx", "p_th", "xi", "rho"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"RadioParams.{name} must be finite and > 0, got {v!r}")

    def at_power(self, p_tx: float) -> "RadioParams":
        return RadioParams(p_tx=p_tx, p_th=self.p_th, xi=self.xi, rho=self.rho)


@dataclass(frozen=True)
class Topology:
    """An ideal (failure-free) network graph.

    ``adjacency`` is the symmetric n-by-n weight matrix with zero
    diagonal; ``positions`` optionally carries per-node 2D coordinates
    in meters for geometric graphs.
    """

    adjacency: np.ndarray
    positions: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        scale = max(1.0, float(np.abs(a).max())) if a.size else 1.0
        if np.abs(a - a.T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0.0):
            raise ValueError("adjacency must have a zero diagonal (no self loops)")
        if np.any(a < 0.0):
            raise ValueError("adjacency weights must be nonnegative")
        a = (a + a.T) / 2.0
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        if self.positions is not None:
            p = np.asarray(self.positions, dtype=float)
            if p.shape != (a.shape[0], 2):
                raise ValueError(f"positions must have shape ({a.shape[0]}, 2), got {p.shape}")
            if not np.all(np.isfinite(p)):
                raise ValueError("positions must be finite")
            p.setflags(write=False)
            object.__setattr__(self, "positions", p)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Upper-triangular edge arrays (i, j, weight) with i < j."""
        ei, ej = np.nonzero(np.triu(self.adjacency, k=1))
        w = self.adjacency[ei, ej]
        return ei, ej, w

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def neighbors(self, i: int) -> np.ndarray:
        return np.nonzero(self.adjacency[i] > 0.0)[0]


def coverage_radius(radio: RadioParams) -> float:
    """Maximum link distance in meters: the received power P_tx / r**xi
    falls below the threshold beyond r = (p_tx / p_th)**(1/xi)."""
    return (radio.p_tx / radio.p_th) ** (1.0 / radio.xi)


def build_rgg(positions: np.ndarray, radio: RadioParams) -> Topology:
    """Geometric graph over 2D positions: unit-weight edges between every
    pair of nodes within the coverage radius.

    Rejects coincident nodes (zero pairwise distance), which would make
    the link model ill-defined.
    """
    pos = np.asarray(positions, dtype=float)
    if pos.ndim != 2 or pos.shape[1] != 2:
        raise ValueError(f"positions must be an (n, 2) array, got shape {pos.shape}")
    if not np.all(np.isfinite(pos)):
        raise ValueError("positions must be finite")
    n = pos.shape[0]
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    off = ~np.eye(n, dtype=bool)
    if n > 1 and np.any(dist[off] == 0.0):
        raise ValueError("duplicate positions: two distinct nodes at distance 0")
    r = coverage_radius(radio)
    adjacency = (off & (dist <= r)).astype(float)
    return Topology(adjacency=adjacency, positions=pos)


def laplacian(topo: Topology) -> np.ndarray:
    """Graph Laplacian D - A (diagonal holds the weighted degrees)."""
    return np.diag(topo.degrees) - topo.adjacency


@dataclass(frozen=True)
class LinkFailureModel:
    """Per-iteration i.i.d. link failures.

    ``success_prob`` is either one probability applied to every active
    edge or an n-by-n matrix of per-edge probabilities (only the entries
    on active edges matter).  In ``symmetric`` mode one Bernoulli draw
    decides both directions of an edge, so every sampled Laplacian stays
    symmetric; in ``asymmetric`` mode the two directions are drawn
    independently.
    """

    success_prob: float | np.ndarray = 1.0
    symmetry: str = "symmetric"

    def __post_init__(self):
        if self.symmetry not in ("symmetric", "asymmetric"):
            raise ValueError(f"symmetry must be 'symmetric' or 'asymmetric', got {self.symmetry!r}")
        p = self.success_prob
        if isinstance(p, np.ndarray):
            q = np.asarray(p, dtype=float)
            if np.any(q < 0.0) or np.any(q > 1.0):
                raise ValueError("per-edge success probabilities must lie in [0, 1]")
            q.setflags(write=False)
            object.__setattr__(self, "success_prob", q)
        else:
            p = float(p)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"success probability must lie in [0, 1], got {p}")
            object.__setattr__(self, "success_prob", p)

    def edge_probs(self, topo: Topology) -> np.ndarray:
        """Success probability per undirected edge, aligned with topo.edges."""
        ei, ej, _ = topo.edges
        if isinstance(self.success_prob, np.ndarray):
            p = self.success_prob
            if p.shape != (topo.n, topo.n):
                raise ValueError(f"per-edge probability matrix must be {topo.n}x{topo.n}, got {p.shape}")
            if self.symmetry == "symmetric" and np.abs(p[ei, ej] - p[ej, ei]).max(initial=0.0) > 0:
                raise ValueError("symmetric failures need a symmetric probability matrix on active edges")
            return p[ei, ej]
        return np.full(ei.shape, self.success_prob)

    def directed_edge_probs(self, topo: Topology) -> tuple[np.ndarray, np.ndarray]:
        ei, ej, _ = topo.edges
        if isinstance(self.success_prob, np.ndarray):
            return self.success_prob[ei, ej], self.success_prob[ej, ei]
        p = np.full(ei.shape, self.success_prob)
        return p, p


def sample_edge_weights(topo: Topology, fm: LinkFailureModel, rng: np.random.Generator) -> np.ndarray:
    """Draw one failure realization; returns surviving edge weights.

    Symmetric mode returns shape (E,), one weight per undirected edge.
    Asymmetric mode returns shape (E, 2): column 0 is the i->j direction
    of the upper-triangular edge list, column 1 the j->i direction.
    """
    _, _, w = topo.edges
    if fm.symmetry == "symmetric":
        keep = rng.random(w.shape) < fm.edge_probs(topo)
        return np.where(keep, w, 0.0)
    pij, pji = fm.directed_edge_probs(topo)
    u = rng.random((w.shape[0], 2))
    out = np.empty((w.shape[0], 2))
    out[:, 0] = np.where(u[:, 0] < pij, w, 0.0)
    out[:, 1] = np.where(u[:, 1] < pji, w, 0.0)
    return out


def laplacian_from_edge_weights(topo: Topology, wk: np.ndarray) -> np.ndarray:
    """Dense Laplacian of one failure realization (see sample_edge_weights)."""
    ei, ej, _ = topo.edges
    n = topo.n
    lap = np.zeros((n, n))
    idx = np.arange(n)
    if wk.ndim == 1:
        lap[ei, ej] = -wk
        lap[ej, ei] = -wk
        deg = np.bincount(ei, wk, n) + np.bincount(ej, wk, n)
        lap[idx, idx] = deg
    else:
        lap[ei, ej] = -wk[:, 0]
        lap[ej, ei] = -wk[:, 1]
        deg = np.bincount(ei, wk[:, 0], n) + np.bincount(ej, wk[:, 1], n)
        lap[idx, idx] = deg
    return lap


def apply_sampled_laplacian(topo: Topology, wk: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Compute L[k] @ x from surviving edge weights without forming L[k]."""
    ei, ej, _ = topo.edges
    n = topo.n
    if wk.ndim == 1:
        deg = np.bincount(ei, wk, n) + np.bincount(ej, wk, n)
        s = np.bincount(ei, wk * x[ej], n) + np.bincount(ej, wk * x[ei], n)
    else:
        deg = np.bincount(ei, wk[:, 0], n) + np.bincount(ej, wk[:, 1], n)
        s = np.bincount(ei, wk[:, 0] * x[ej], n) + np.bincount(ej, wk[:, 1] * x[ei], n)
    return deg * x - s


def sample_laplacian(topo: Topology, fm: LinkFailureModel, rng: np.random.Generator) -> np.ndarray:
    """One i.i.d. Laplacian sample under the failure model.

    Row sums are zero in both symmetry modes; in symmetric mode the
    sample is also a symmetric PSD Laplacian of the surviving subgraph.
    """
    return laplacian_from_edge_weights(topo, sample_edge_weights(topo, fm, rng))


def expected_laplacian(topo: Topology, fm: LinkFailureModel) -> np.ndarray:
    """Entrywise expectation of the sampled Laplacian.

    Off-diagonal entries are -p_ij * a_ij and the diagonal makes every
    row sum to zero; with a uniform success probability this is just
    p * laplacian(topo).
    """
    if isinstance(fm.success_prob, np.ndarray):
        p = fm.success_prob
        if p.shape != (topo.n, topo.n):
            raise ValueError(f"per-edge probability matrix must be {topo.n}x{topo.n}, got {p.shape}")
        a_bar = p * topo.adjacency
    else:
        a_bar = fm.success_prob * topo.adjacency
    return np.diag(a_bar.sum(axis=1)) - a_bar


def mean_degree(radio: RadioParams) -> float:
    """Average neighbor count of a node in a homogeneous deployment:
    pi * r**2 * rho with r the coverage radius."""
    r = coverage_radius(radio)
    return math.pi * r * r * radio.rho


def topology_to_json(topo: Topology) -> dict:
    """JSON document {n, positions, edges: [[i, j, w], ...]}, 0-based."""
    ei, ej, w = topo.edges
    doc = {
        "n": topo.n,
        "positions": None if topo.positions is None else topo.positions.tolist(),
        "edges": [[int(i), int(j), float(wij)] for i, j, wij in zip(ei, ej, w)],
    }
    return doc


def topology_from_json(doc: dict) -> Topology:
    if not isinstance(doc, dict) or "n" not in doc or "edges" not in doc:
        raise ValueError("topology document must have 'n' and 'edges' keys")
    n = int(doc["n"])
    if n < 1:
        raise ValueError(f"node count must be >= 1, got {n}")
    adjacency = np.zeros((n, n))
    for entry in doc["edges"]:
        if len(entry) != 3:
            raise ValueError(f"edge entries must be [i, j, w], got {entry!r}")
        i, j, w = int(entry[0]), int(entry[1]), float(entry[2])
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
        adjacency[i, j] = w
        adjacency[j, i] = w
    positions = doc.get("positions")
    return Topology(adjacency=adjacency, positions=None if positions is None else np.asarray(positions, dtype=float))


def save_topology(topo: Topology, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(topology_to_json(topo), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_topology(path) -> Topology:
    with open(path, "r", encoding="utf-8") as fh:
        return topology_from_json(json.load(fh))
