"""Attacks via known excitation: Markov-parameter regression and realization.

With the system driven by known inputs from a zero initial state, the
impulse-response blocks [CB, CAB, ..., CA^(T-1)B] are recovered by least
squares against the upper-triangular block Toeplitz input matrix, and a
state-space model is realized from them by Hankel factorization (Ho-Kalman).
The realization is only a similarity transform of the truth, so similarity
invariants (eigenvalues, Markov parameters, transfer behaviour) are the
meaningful outputs.  For closed-loop data, a static feedback gain is
recovered by regressing -u on x.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .dynamics import SystemModel

__all__ = [
    "NotPersistentlyExcitingError",
    "HankelRankDeficientError",
    "RankDeficientStatesError",
    "MarkovEstimate",
    "RealizedModel",
    "markov_parameters",
    "input_toeplitz",
    "estimate_markov",
    "ho_kalman",
    "infer_feedback_gain",
]

RANK_RTOL = 1e-9


class NotPersistentlyExcitingError(ValueError):
    """The input Toeplitz matrix is not full row rank."""


class HankelRankDeficientError(np.linalg.LinAlgError):
    """The assumed model order exceeds the numerical rank of the Hankel matrix."""


class RankDeficientStatesError(ValueError):
    """The state matrix does not have full row rank."""


@dataclass(frozen=True)
class MarkovEstimate:
    """Estimated Markov parameter matrix, blocks [CB, CAB, ..., CA^(T-1)B]."""

    G_hat: np.ndarray
    T: int
    residual_norm: float = 0.0

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G_hat, dtype=float))
        if self.T < 1 or G.shape[1] % self.T:
            raise ValueError("G_hat columns must split into T equal blocks")
        object.__setattr__(self, "G_hat", G)

    @property
    def m(self) -> int:
        return self.G_hat.shape[0]

    @property
    def q(self) -> int:
        return self.G_hat.shape[1] // self.T

    def block(self, k: int) -> np.ndarray:
        """Block k, i.e. C A^k B."""
        return self.G_hat[:, k * self.q:(k + 1) * self.q]


@dataclass(frozen=True)
class RealizedModel:
    """A realization (A_t, B_t, C_t); equals the truth only up to similarity."""

    A_t: np.ndarray
    B_t: np.ndarray
    C_t: np.ndarray
    n_assumed: int

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.sort_complex(np.linalg.eigvals(self.A_t))

    def markov(self, T: int) -> MarkovEstimate:
        return markov_parameters(self.A_t, self.B_t, self.C_t, T)

    def to_model(self) -> SystemModel:
        return SystemModel(A=self.A_t, B=self.B_t, C=self.C_t)


def markov_parameters(A, B, C, T: int) -> MarkovEstimate:
    """Ground-truth Markov matrix [CB, CAB, ..., CA^(T-1)B] of a known triple."""
    A = np.asarray(A, dtype=float)
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if B.shape[0] != A.shape[0]:
        B = B.reshape(A.shape[0], -1)
    blocks = []
    CAk = C
    for _ in range(T):
        blocks.append(CAk @ B)
        CAk = CAk @ A
    return MarkovEstimate(G_hat=np.hstack(blocks), T=T)


def input_toeplitz(inputs: np.ndarray) -> np.ndarray:
    """Upper-triangular block Toeplitz matrix of the input sequence.

    Column j stacks [u(j); u(j-1); ...; u(0); 0; ...], so G @ U_T produces the
    strictly causal output sequence y(1), ..., y(T) for x(0) = 0.
    """
    U = np.atleast_2d(np.asarray(inputs, dtype=float))
    q, T = U.shape
    M = np.zeros((T * q, T))
    for j in range(T):
        for i in range(j + 1):
            M[i * q:(i + 1) * q, j] = U[:, j - i]
    return M


def estimate_markov(inputs: np.ndarray, outputs: np.ndarray) -> MarkovEstimate:
    """Least-squares Markov parameters from an input/output record.

    ``inputs`` is q x T (u(0)..u(T-1)); ``outputs`` is m x T aligned strictly
    causally, i.e. column k is the response y(k+1) so that an impulse input
    returns the Markov blocks verbatim.  Assumes x(0) = 0; a nonzero initial
    state biases the estimate rather than raising.
    """
    U = np.atleast_2d(np.asarray(inputs, dtype=float))
    Y = np.atleast_2d(np.asarray(outputs, dtype=float))
    if U.shape[1] != Y.shape[1]:
        raise ValueError("inputs and outputs must cover the same number of steps")
    M = input_toeplitz(U)
    s = np.linalg.svd(M, compute_uv=False)
    # numerical full row rank at the standard machine-precision threshold;
    # triangular Toeplitz matrices of long random inputs may be nonsingular
    # on paper yet unusably ill conditioned, which also counts as failure
    cutoff = max(M.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    if s.size < M.shape[0] or s[0] == 0 or s[M.shape[0] - 1] <= cutoff:
        raise NotPersistentlyExcitingError(
            "input Toeplitz matrix is not full row rank; excitation insufficient")
    G_hat = np.linalg.lstsq(M.T, Y.T, rcond=None)[0].T
    residual = float(np.linalg.norm(Y - G_hat @ M))
    return MarkovEstimate(G_hat=G_hat, T=U.shape[1], residual_norm=residual)


def ho_kalman(markov: Union[MarkovEstimate, np.ndarray], n_assumed: int,
              rank_rtol: float = 1e-10) -> RealizedModel:
    """Realize (A, B, C) up to similarity from Markov parameters.

    Builds the block Hankel matrix with ceil((T-1)/2) block rows, truncates its
    SVD at ``n_assumed`` and extracts the realization from the balanced
    observability/controllability factors.  Needs T >= 2 n_assumed + 1 so the
    Hankel blocks exist; raises if the Hankel numerical rank is below the
    assumed order.
    """
    if not isinstance(markov, MarkovEstimate):
        raise TypeError("ho_kalman expects a MarkovEstimate")
    if n_assumed < 1:
        raise ValueError("n_assumed must be positive")
    T, m, q = markov.T, markov.m, markov.q
    if T < 2 * n_assumed + 1:
        raise ValueError(f"need T >= {2 * n_assumed + 1} Markov blocks, got {T}")
    r = int(np.ceil((T - 1) / 2))
    c = T - r
    H0 = np.vstack([np.hstack([markov.block(i + j) for j in range(c)])
                    for i in range(r)])
    H1 = np.vstack([np.hstack([markov.block(i + j + 1) for j in range(c)])
                    for i in range(r)])
    U, s, Vt = np.linalg.svd(H0, full_matrices=False)
    if s[0] == 0 or n_assumed > len(s) or s[n_assumed - 1] < rank_rtol * s[0]:
        raise HankelRankDeficientError(
            f"assumed order {n_assumed} exceeds the Hankel numerical rank")
    sq = np.sqrt(s[:n_assumed])
    obs = U[:, :n_assumed] * sq            # (r m) x n
    con = (Vt[:n_assumed, :].T * sq).T     # n x (c q)
    A_t = (U[:, :n_assumed].T @ H1 @ Vt[:n_assumed, :].T) / np.outer(sq, sq)
    B_t = con[:, :q]
    C_t = obs[:m, :]
    return RealizedModel(A_t=A_t, B_t=B_t, C_t=C_t, n_assumed=n_assumed)


def infer_feedback_gain(states: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Recover a static feedback gain from state/input pairs u(k) = -K x(k).

    Least squares over sum_k ||u(k) + K x(k)||^2; the residual is zero exactly
    when the inputs are a static state feedback.
    """
    X = np.atleast_2d(np.asarray(states, dtype=float))
    U = np.atleast_2d(np.asarray(inputs, dtype=float))
    if X.shape[1] != U.shape[1]:
        raise ValueError("states and inputs must cover the same number of steps")
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0 or len(s) < X.shape[0] or s[X.shape[0] - 1] < RANK_RTOL * s[0]:
        raise RankDeficientStatesError("state matrix does not have full row rank")
    K_hat = np.linalg.lstsq(X.T, -U.T, rcond=None)[0].T
    return K_hat
