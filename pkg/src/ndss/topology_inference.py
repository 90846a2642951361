"""Attacks on structure secrecy: topology estimators from output time series.

The plain least-squares estimator A_o = Y+ Y-^T (Y- Y-^T)^-1 treats the
observation noise as part of the regression error and therefore keeps an
O(sigma_v^2) bias; the causality-corrected estimator subtracts sigma_v^2 I
from the sample covariance before inverting and is consistent.  A Granger
baseline uses one-lag autocorrelations averaged across independent rounds,
and two local estimators handle partially observed node sets.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "SingularGramError",
    "SingularShiftedGramError",
    "SingularEnsembleError",
    "EmptyHError",
    "ObservationStacks",
    "CovariancePair",
    "TopologyEstimate",
    "infer_ols",
    "infer_causality",
    "infer_granger",
    "infer_local",
    "compute_V_H",
]

SINGULAR_RTOL = 1e-10  # relative threshold below which a Gram matrix counts as singular


class SingularGramError(np.linalg.LinAlgError):
    """Y- (Y-)^T is numerically singular (too few samples or degenerate data)."""


class SingularShiftedGramError(np.linalg.LinAlgError):
    """Sigma_0 - sigma_v^2 I is near singular; the correction is unreliable."""


class SingularEnsembleError(np.linalg.LinAlgError):
    """The ensemble autocorrelation matrix is numerically singular."""


class EmptyHError(ValueError):
    """The supplied V_H is empty."""


@dataclass(frozen=True)
class ObservationStacks:
    """Aligned lag-0 / lag-1 stacks: Y_minus = [y(0)..y(T-1)], Y_plus = [y(1)..y(T)]."""

    Y_minus: np.ndarray
    Y_plus: np.ndarray

    def __post_init__(self):
        Ym = np.atleast_2d(np.asarray(self.Y_minus, dtype=float))
        Yp = np.atleast_2d(np.asarray(self.Y_plus, dtype=float))
        if Ym.shape != Yp.shape:
            raise ValueError("Y_minus and Y_plus must have identical shapes")
        object.__setattr__(self, "Y_minus", Ym)
        object.__setattr__(self, "Y_plus", Yp)

    @classmethod
    def from_series(cls, Y: np.ndarray) -> "ObservationStacks":
        """Build the stacks from one output sequence with columns y(0)..y(T)."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] < 2:
            raise ValueError("need at least two observations")
        return cls(Y_minus=Y[:, :-1], Y_plus=Y[:, 1:])

    @classmethod
    def from_trajectory(cls, trajectory) -> "ObservationStacks":
        return cls.from_series(trajectory.Y)

    @property
    def T(self) -> int:
        return self.Y_minus.shape[1]

    @property
    def n(self) -> int:
        return self.Y_minus.shape[0]


@dataclass(frozen=True)
class CovariancePair:
    """Sample covariance Sigma0 = Y- Y-^T / T and its one-lag version."""

    Sigma0: np.ndarray
    Sigma1: np.ndarray
    T: int

    @classmethod
    def from_stacks(cls, obs: ObservationStacks) -> "CovariancePair":
        T = obs.T
        return cls(Sigma0=obs.Y_minus @ obs.Y_minus.T / T,
                   Sigma1=obs.Y_plus @ obs.Y_minus.T / T, T=T)


@dataclass(frozen=True)
class TopologyEstimate:
    A_hat: np.ndarray
    method: str
    T: int
    frobenius_error: Optional[float] = None
    spectral_error: Optional[float] = None

    def with_truth(self, A_true: np.ndarray) -> "TopologyEstimate":
        diff = self.A_hat - np.asarray(A_true, dtype=float)
        return replace(self, frobenius_error=float(np.linalg.norm(diff)),
                       spectral_error=float(np.linalg.norm(diff, 2)))

    def to_dict(self) -> dict:
        out = {"method": self.method, "A_hat": self.A_hat.tolist(), "T": self.T}
        if self.frobenius_error is not None:
            out["frobenius_error"] = self.frobenius_error
        if self.spectral_error is not None:
            out["spectral_error"] = self.spectral_error
        return out


def _solve_right(numer: np.ndarray, gram: np.ndarray, err: type) -> np.ndarray:
    """X = numer @ gram^-1 with a relative singularity guard."""
    s = np.linalg.svd(gram, compute_uv=False)
    if s[0] == 0 or s[-1] < SINGULAR_RTOL * s[0]:
        raise err("gram matrix is numerically singular")
    return np.linalg.solve(gram.T, numer.T).T


def infer_ols(obs: ObservationStacks) -> TopologyEstimate:
    """Ordinary least squares topology estimate from one observation round."""
    gram = obs.Y_minus @ obs.Y_minus.T
    A_hat = _solve_right(obs.Y_plus @ obs.Y_minus.T, gram, SingularGramError)
    return TopologyEstimate(A_hat=A_hat, method="ols", T=obs.T)


def infer_causality(obs: ObservationStacks, sigma_v_sq: float) -> TopologyEstimate:
    """Causality-corrected estimate Sigma1 (Sigma0 - sigma_v^2 I)^-1.

    Computed in unscaled form Y+ Y-^T (Y- Y-^T - T sigma_v^2 I)^-1, which is
    algebraically the ridge solution with regularisation weight -T sigma_v^2
    and coincides bit for bit with infer_ols at sigma_v_sq = 0.
    """
    if sigma_v_sq < 0:
        raise ValueError("sigma_v_sq must be nonnegative")
    T, n = obs.T, obs.n
    gram = obs.Y_minus @ obs.Y_minus.T - T * sigma_v_sq * np.eye(n)
    A_hat = _solve_right(obs.Y_plus @ obs.Y_minus.T, gram, SingularShiftedGramError)
    return TopologyEstimate(A_hat=A_hat, method="causality", T=obs.T)


def infer_granger(rounds: Sequence[ObservationStacks]) -> TopologyEstimate:
    """Granger estimate from ensemble one-lag autocorrelations across rounds.

    At the largest t common to all rounds, R1 averages x_t x_{t-1}^T and R0
    averages x_{t-1} x_{t-1}^T over the ensemble (the lag-consistent pairing
    of R1(t) = A R0(t-1)); the estimate is R1 R0^-1.  Observation noise is
    ignored by construction, which biases the estimate when it is present.
    """
    rounds = list(rounds)
    if len(rounds) < 2:
        raise ValueError("granger estimation needs at least two observation rounds")
    n = rounds[0].n
    if any(r.n != n for r in rounds):
        raise ValueError("all rounds must share the node dimension")
    t_idx = min(r.T for r in rounds) - 1  # column index of the largest common t
    R0 = np.zeros((n, n))
    R1 = np.zeros((n, n))
    for r in rounds:
        x_prev = r.Y_minus[:, t_idx]
        x_next = r.Y_plus[:, t_idx]
        R0 += np.outer(x_prev, x_prev)
        R1 += np.outer(x_next, x_prev)
    R0 /= len(rounds)
    R1 /= len(rounds)
    A_hat = _solve_right(R1, R0, SingularEnsembleError)
    return TopologyEstimate(A_hat=A_hat, method="granger", T=t_idx + 1)


def infer_local(obs_F: ObservationStacks, V_H: Optional[Sequence[int]] = None
                ) -> tuple[TopologyEstimate, Optional[TopologyEstimate]]:
    """Local estimates from observations of a node subset V_F.

    ``obs_F`` holds the observed rows only.  The truncated estimate applies
    plain OLS to those rows and keeps a bias from unobserved neighbours.  When
    ``V_H`` (row positions within obs_F whose in-neighbourhoods lie inside
    V_F) is given, the returned hf estimate of those rows is free of the
    hidden part's influence.
    """
    gram = obs_F.Y_minus @ obs_F.Y_minus.T
    A_tr = _solve_right(obs_F.Y_plus @ obs_F.Y_minus.T, gram, SingularGramError)
    truncated = TopologyEstimate(A_hat=A_tr, method="local_truncated", T=obs_F.T)
    if V_H is None:
        return truncated, None
    idx = list(V_H)
    if not idx:
        raise EmptyHError("V_H must contain at least one observed node")
    if any(not (0 <= i < obs_F.n) for i in idx):
        raise ValueError("V_H entries must index rows of obs_F")
    A_hf = _solve_right(obs_F.Y_plus[idx, :] @ obs_F.Y_minus.T, gram, SingularGramError)
    hf = TopologyEstimate(A_hat=A_hf, method="local_hf", T=obs_F.T)
    return truncated, hf


def compute_V_H(adjacency: np.ndarray, V_F: Sequence[int]) -> set[int]:
    """Evaluation-side helper: {i in V_F : N_i subset of V_F}.

    Requires the ground-truth adjacency, so it belongs to the harness;
    attacker-side callers must supply V_H from their own prior knowledge.
    """
    adj = np.asarray(adjacency)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    vf = set(V_F)
    if any(not (0 <= i < adj.shape[0]) for i in vf):
        raise ValueError("V_F entries must be valid node ids")
    out = set()
    for i in vf:
        neigh = {k for k in range(adj.shape[0]) if adj[i, k] > 0 and k != i}
        if neigh <= vf:
            out.add(i)
    return out
