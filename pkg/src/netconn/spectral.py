"""Spectral kernel: consensus iteration matrices, the eigenvalue map
between a Laplacian and its consensus matrix, diminishing step
schedules, and a dense cyclic-Jacobi eigensolver.

The Jacobi solver is the validation oracle for the whole package: every
stochastic estimate ultimately gets checked against it, so it sweeps
until the off-diagonal mass is below 1e-12 times the Frobenius norm,
well under any tolerance it is used to validate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import DegenerateGraphError, Topology

__all__ = [
    "StepSchedule",
    "EigPair",
    "iteration_matrix",
    "deflate",
    "eig_map",
    "eps_bar_bound",
    "eps_bar_bound_from_degree",
    "dense_sym_eig",
    "convergence_bound",
    "sign_normalize",
]

_SIGN_EPS = 1e-9


@dataclass(frozen=True)
class StepSchedule:
    """Step-size sequences eps[k] = eps0/(k+1)**gamma and
    alpha[k] = alpha0/(k+1)**beta, plus the fixed eps_bar used by the
    consensus matrix I - eps_bar*L.

    The diminishing kind requires 0.5 < gamma, beta <= 1 so the sums of
    the steps diverge while the sums of their squares stay finite; the
    constant kind freezes eps[k] = eps0 and alpha[k] = alpha0 for
    adaptive tracking.
    """

    eps_bar: float
    kind: str = "diminishing"
    eps0: float = 0.4
    gamma: float = 0.51
    alpha0: float = 1.5
    beta: float = 0.51

    def __post_init__(self):
        if not (isinstance(self.eps_bar, (int, float)) and self.eps_bar > 0):
            raise ValueError(f"eps_bar must be > 0, got {self.eps_bar!r}")
        if self.kind not in ("diminishing", "constant"):
            raise ValueError(f"kind must be 'diminishing' or 'constant', got {self.kind!r}")
        if self.eps0 <= 0:
            raise ValueError(f"eps0 must be > 0, got {self.eps0}")
        if self.kind == "diminishing":
            if self.alpha0 <= 0:
                raise ValueError(f"alpha0 must be > 0, got {self.alpha0}")
            if not 0.5 < self.gamma <= 1.0:
                raise ValueError(f"gamma must lie in (0.5, 1], got {self.gamma}")
            if not 0.5 < self.beta <= 1.0:
                raise ValueError(f"beta must lie in (0.5, 1], got {self.beta}")
        else:
            # A frozen smoothing step (alpha = 0) is a legitimate constant
            # schedule: the eigenvector iterate still runs.
            if self.alpha0 < 0:
                raise ValueError(f"alpha0 must be >= 0, got {self.alpha0}")
            if self.gamma != 0.0 or self.beta != 0.0:
                raise ValueError("constant schedules must have gamma = beta = 0")

    @classmethod
    def diminishing(cls, eps_bar: float, eps0: float, gamma: float, alpha0: float, beta: float) -> "StepSchedule":
        return cls(eps_bar=eps_bar, kind="diminishing", eps0=eps0, gamma=gamma, alpha0=alpha0, beta=beta)

    @classmethod
    def constant(cls, eps_bar: float, eps: float | None = None, alpha: float = 1.0) -> "StepSchedule":
        """Constant steps; eps defaults to eps_bar (tracking mode)."""
        return cls(eps_bar=eps_bar, kind="constant", eps0=eps_bar if eps is None else eps,
                   gamma=0.0, alpha0=alpha, beta=0.0)

    def value(self, k: int) -> tuple[float, float]:
        """(eps[k], alpha[k]) at iteration k >= 0."""
        if k < 0:
            raise ValueError(f"iteration index must be >= 0, got {k}")
        if self.kind == "constant":
            return self.eps0, self.alpha0
        t = float(k + 1)
        return self.eps0 / t ** self.gamma, self.alpha0 / t ** self.beta

    def eps_values(self, k: int) -> np.ndarray:
        """Vector (eps[0], ..., eps[k])."""
        if self.kind == "constant":
            return np.full(k + 1, self.eps0)
        return self.eps0 / np.arange(1.0, k + 2.0) ** self.gamma


@dataclass(frozen=True)
class EigPair:
    """Eigenvalue with its unit-norm, sign-normalized eigenvector."""

    value: float
    vector: np.ndarray


def sign_normalize(vec: np.ndarray) -> np.ndarray:
    """Flip sign so the first component with magnitude above 1e-9 is
    positive; eigenvectors are only defined up to sign."""
    for c in vec:
        if abs(c) > _SIGN_EPS:
            return -vec if c < 0 else vec
    return vec


def iteration_matrix(lap: np.ndarray, eps: float) -> np.ndarray:
    """Consensus matrix I - eps*L; rows always sum to one."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    lap = np.asarray(lap, dtype=float)
    return np.eye(lap.shape[0]) - eps * lap


def deflate(w_matrix: np.ndarray) -> np.ndarray:
    """Remove the all-ones component: W - (1/n) * ones."""
    w = np.asarray(w_matrix, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"matrix must be square, got shape {w.shape}")
    return w - 1.0 / w.shape[0]


def eig_map(lambda_w, eps_bar: float):
    """Map an eigenvalue of I - eps_bar*L back to the Laplacian one:
    (1 - lambda_w) / eps_bar.  Accepts scalars or arrays."""
    if eps_bar <= 0:
        raise ValueError(f"eps_bar must be > 0, got {eps_bar}")
    return (1.0 - lambda_w) / eps_bar


def eps_bar_bound(lap_expected: np.ndarray) -> float:
    """Upper limit 2/lambda_N for the consensus step; any eps_bar chosen
    strictly inside (0, bound) keeps all nontrivial modes of I - eps*L
    inside the unit circle."""
    pairs = dense_sym_eig(lap_expected)
    lam_n = pairs[-1].value
    if lam_n <= 0:
        raise DegenerateGraphError("expected Laplacian has no positive eigenvalue (empty graph)")
    return 2.0 / lam_n


def eps_bar_bound_from_degree(topo: Topology) -> float:
    """Degree-based fallback 1/d_max, always inside (0, 2/lambda_N]
    because lambda_N <= 2*d_max; usable when the spectrum is unknown."""
    d_max = float(topo.degrees.max(initial=0.0))
    if d_max <= 0:
        raise DegenerateGraphError("graph has no edges")
    return 1.0 / d_max


def _jacobi_rounds(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Round-robin pivot schedule: n-1 rounds of pairwise-disjoint
    (p, q) index arrays that together cover every pair once."""
    m = n if n % 2 == 0 else n + 1
    idx = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            x, y = idx[i], idx[m - 1 - i]
            if x < n and y < n:
                ps.append(min(x, y))
                qs.append(max(x, y))
        rounds.append((np.asarray(ps), np.asarray(qs)))
        idx = [idx[0], idx[-1]] + idx[1:-1]
    return rounds


def dense_sym_eig(m: np.ndarray) -> list[EigPair]:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi
    rotations, eigenvalues ascending.

    The sweep visits every off-diagonal pair once per cycle, applying
    the pivots in a round-robin order so each batch of disjoint
    rotations can be executed as one vectorized block.  Sweeps stop when
    the off-diagonal Frobenius norm drops below 1e-12 times the
    Frobenius norm of the input (or after 100 sweeps).  Eigenvectors
    come out orthonormal to machine precision and sign-normalized.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max())) if a.size else 1.0
    if np.abs(a - a.T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric within 1e-10")
    n = a.shape[0]
    stacked = np.vstack([(a + a.T) / 2.0, np.eye(n)])
    a = stacked[:n]
    fro = float(np.linalg.norm(a))
    if fro > 0.0 and n > 1:
        off_tol = 1e-12 * fro
        rounds = _jacobi_rounds(n)
        offmat = np.empty_like(a)
        for sweep in range(100):
            # Off-diagonal Frobenius norm, summed directly: subtracting
            # diagonal mass from the total cancels catastrophically.
            np.copyto(offmat, a)
            np.fill_diagonal(offmat, 0.0)
            off = float(np.linalg.norm(offmat))
            if off <= off_tol:
                break
            # Skip negligible pivots early on (threshold strategy); later
            # sweeps rotate everything that still matters.
            thresh = 0.2 * off / (n * n) if sweep < 3 else off_tol / n
            for p_all, q_all in rounds:
                apq = a[p_all, q_all]
                active = np.abs(apq) > thresh
                if not active.any():
                    continue
                p = p_all[active]
                q = q_all[active]
                apq = apq[active]
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.where(tau == 0.0, 1.0, np.sign(tau) / (np.abs(tau) + np.hypot(1.0, tau)))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                cc = c[:, None]
                ss = s[:, None]
                rp = a[p]
                rq = a[q]
                a[p] = cc * rp - ss * rq
                a[q] = ss * rp + cc * rq
                # Column update on the stacked matrix rotates the
                # eigenvector accumulator in the same pass.
                cp = stacked[:, p]
                cq = stacked[:, q]
                stacked[:, p] = c * cp - s * cq
                stacked[:, q] = s * cp + c * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
    values = np.diag(a).copy()
    v = stacked[n:]
    order = np.argsort(values, kind="stable")
    pairs = []
    for idx in order:
        vec = sign_normalize(v[:, idx].copy())
        vec.setflags(write=False)
        pairs.append(EigPair(value=float(values[idx]), vector=vec))
    return pairs


def convergence_bound(lambda2: float, lambda3: float, schedule: StepSchedule, k: int) -> float:
    """Upper bound exp(-(lambda3 - lambda2) * sum(eps[0..k])) on the
    slowest decaying eigenvector mode of the power iteration."""
    if not (lambda3 >= lambda2 >= 0):
        raise ValueError(f"need lambda3 >= lambda2 >= 0, got lambda2={lambda2}, lambda3={lambda3}")
    return float(np.exp(-(lambda3 - lambda2) * schedule.eps_values(k).sum()))
