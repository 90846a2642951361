"""Attacks on state secrecy: observability machinery and initial-state estimators.

Given a known (A, C) pair and a window of outputs, the initial state is
recovered by least squares on the stacked observation equation
y_stack = M_o x(0) + v_stack.  When observations are scarce (mT < n) a sparse
initial state can still be pinned down by exhaustive support search, with a
uniqueness certificate from the spark condition of M_o.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations
from typing import Optional

import numpy as np

from .dynamics import SystemModel, Trajectory

__all__ = [
    "RankDeficientError",
    "NoSolutionError",
    "ObservabilityBundle",
    "StateEstimate",
    "observability_matrix",
    "observability_bundle",
    "estimate_initial_state",
    "sparse_initial_state",
    "check_local_estimability",
]

RANK_RTOL = 1e-9  # relative singular-value cutoff for rank decisions


class RankDeficientError(ValueError):
    """The observation window does not pin down the state (rank(M_o) < n)."""


class NoSolutionError(ValueError):
    """No support of admissible size matches the observations."""


@dataclass(frozen=True)
class ObservabilityBundle:
    M_o: np.ndarray
    M_c: np.ndarray
    rank_Mo: int
    rank_Mc: int
    observable: bool
    measurable: bool


@dataclass(frozen=True)
class StateEstimate:
    x_hat: np.ndarray
    window: tuple[int, int]
    residual_norm: float
    error_norm: Optional[float] = None

    def with_truth(self, x_true) -> "StateEstimate":
        err = float(np.linalg.norm(self.x_hat - np.asarray(x_true, dtype=float)))
        return replace(self, error_norm=err)

    def to_dict(self) -> dict:
        out = {
            "x_hat": [float(v) for v in self.x_hat],
            "window": list(self.window),
            "residual_norm": self.residual_norm,
        }
        if self.error_norm is not None:
            out["error_norm"] = self.error_norm
        return out


def observability_matrix(A: np.ndarray, C: np.ndarray, T: int) -> np.ndarray:
    """Stack [C; CA; ...; C A^(T-1)]."""
    blocks = []
    Ck = np.asarray(C, dtype=float)
    for _ in range(T):
        blocks.append(Ck)
        Ck = Ck @ A
    return np.vstack(blocks)


def _rank(M: np.ndarray, tol: float) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol * s[0])) if s[0] > 0 else 0


def observability_bundle(model: SystemModel, T: int, tol: float = RANK_RTOL) -> ObservabilityBundle:
    """T-horizon observability/controllability matrices with their ranks."""
    if T < 1:
        raise ValueError("T must be >= 1")
    n = model.n
    M_o = observability_matrix(model.A, model.C, T)
    if model.B is None:
        M_c = np.zeros((n, 0))
    else:
        blocks = []
        Ak = model.B
        for _ in range(T):
            blocks.append(Ak)
            Ak = model.A @ Ak
        M_c = np.hstack(blocks)
    rank_mo = _rank(M_o, tol)
    rank_mc = _rank(M_c, tol)
    return ObservabilityBundle(
        M_o=M_o,
        M_c=M_c,
        rank_Mo=rank_mo,
        rank_Mc=rank_mc,
        observable=rank_mo == n,
        measurable=_rank(model.C, tol) == n,
    )


def estimate_initial_state(model: SystemModel, Y: np.ndarray, k: int = 0) -> StateEstimate:
    """Least-squares estimate of x(k) from the outputs y(k), ..., y(T-1).

    Y holds the window's outputs as columns (m x W, so T = k + W); passing a
    Trajectory uses its outputs from step k on.  The stacked normal equations
    are solved through an SVD rather than an explicit inverse; a window whose
    M_o is numerically rank deficient raises RankDeficientError, which
    signals the attacker lacks enough data.
    """
    if k < 0:
        raise ValueError("window start k must be nonnegative")
    if isinstance(Y, Trajectory):
        Y = Y.Y[:, k:]
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(model.m, -1)
    if Y.shape[0] != model.m:
        raise ValueError(f"Y must have {model.m} rows, got {Y.shape[0]}")
    W = Y.shape[1]
    if W < 1:
        raise ValueError("empty observation window")
    M_o = observability_matrix(model.A, model.C, W)
    y_stack = Y.T.reshape(-1)  # [y(k); y(k+1); ...]
    U, s, Vt = np.linalg.svd(M_o, full_matrices=False)
    if s.size < M_o.shape[1] or s[0] == 0 or s[-1] < RANK_RTOL * s[0]:
        raise RankDeficientError(
            f"observability matrix rank deficient over window of length {W}")
    x_hat = Vt.T @ ((U.T @ y_stack) / s)
    residual = float(np.linalg.norm(y_stack - M_o @ x_hat))
    return StateEstimate(x_hat=x_hat, window=(k, k + W), residual_norm=residual)


def _all_column_subsets_full_rank(M: np.ndarray, size: int, tol: float) -> bool:
    n = M.shape[1]
    if size == 0:
        return True
    if size > min(M.shape[0], n):
        return False
    for cols in combinations(range(n), size):
        sub = M[:, cols]
        if _rank(sub, tol) < size:
            return False
    return True


def sparse_initial_state(M_o: np.ndarray, y_stack: np.ndarray, q_max: int,
                         residual_tol: float = 1e-9) -> tuple[np.ndarray, bool]:
    """Minimum-cardinality x with M_o x = y_stack, by exhaustive support search.

    Searches supports of size 0..q_max and returns the least-residual solution
    of minimal cardinality.  ``unique`` certifies the recovery: exactly one
    support of that size reaches the residual tolerance, and the spark
    condition holds for q = ||x||_0 (mT > 2q with every 2q-column subset of
    M_o full rank).  Intended for small n; the search is combinatorial.
    """
    M_o = np.asarray(M_o, dtype=float)
    y = np.asarray(y_stack, dtype=float).reshape(-1)
    if M_o.shape[0] != y.shape[0]:
        raise ValueError("rows of M_o must match the stacked observation length")
    if q_max < 1:
        raise ValueError("q_max must be positive")
    mT, n = M_o.shape
    tol = residual_tol * max(1.0, float(np.linalg.norm(y)))

    if np.linalg.norm(y) <= tol:
        return np.zeros(n), True

    for q in range(1, min(q_max, n) + 1):
        hits = []
        for cols in combinations(range(n), q):
            sub = M_o[:, cols]
            coef, *_ = np.linalg.lstsq(sub, y, rcond=None)
            if np.linalg.norm(y - sub @ coef) <= tol:
                hits.append((cols, coef))
        if hits:
            cols, coef = hits[0]
            x_hat = np.zeros(n)
            x_hat[list(cols)] = coef
            spark_ok = (mT > 2 * q) and _all_column_subsets_full_rank(M_o, 2 * q, RANK_RTOL)
            return x_hat, (len(hits) == 1) and spark_ok
    raise NoSolutionError(f"no support of size <= {q_max} matches the observations")


def check_local_estimability(adjacency: np.ndarray, i: int, j: int) -> bool:
    """Necessary neighbourhood condition for node j to estimate x_i(0) locally.

    Convention: adjacency[a, b] > 0 means node a uses information from node b
    (b is an in-neighbour of a).  Returns whether {i} U N_i is contained in
    {j} U N_j.  The condition is necessary only; it does not by itself
    guarantee an exact local estimator exists.
    """
    adj = np.asarray(adjacency)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    N = adj.shape[0]
    for node in (i, j):
        if not (0 <= node < N):
            raise ValueError(f"unknown node id {node}")
    if i == j:
        raise ValueError("i and j must be distinct nodes")
    if not adj[j, i] > 0:
        raise ValueError("i must be an in-neighbour of j")
    n_i = {k for k in range(N) if adj[i, k] > 0}
    n_j = {k for k in range(N) if adj[j, k] > 0}
    return (n_i | {i}) <= (n_j | {j})
