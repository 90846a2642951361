"""Secrecy metrics: disclosure probability, prediction accuracy, and cost.

The disclosure probability of a noise-adding scheme is the chance that the
attacker's best distributed estimate lands within epsilon of the true initial
state.  For independent zero-mean symmetric unimodal perturbations the best
estimate is the observation itself (the mode-centred window maximises the
epsilon-mass), so delta reduces to the central interval mass of the noise
density -- available in closed form for the gaussian, uniform and laplace
families and by Monte Carlo for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .dynamics import NoiseSpec, channel_rng

__all__ = [
    "UnsupportedFamilyError",
    "ClosedForm",
    "MonteCarlo",
    "SecrecyReport",
    "PredictabilityReport",
    "disclosure_probability",
    "expected_square_error",
    "k_step_predictability",
    "topology_error",
    "cooperation_cost",
]


class UnsupportedFamilyError(ValueError):
    """Disclosure probability needs a zero-mean symmetric unimodal family."""


@dataclass(frozen=True)
class ClosedForm:
    def to_dict(self) -> dict:
        return {"kind": "closed_form"}


@dataclass(frozen=True)
class MonteCarlo:
    runs: int
    seed: int

    def to_dict(self) -> dict:
        return {"kind": "monte_carlo", "runs": self.runs, "seed": self.seed}


Method = Union[ClosedForm, MonteCarlo]


@dataclass(frozen=True)
class SecrecyReport:
    epsilon: float
    delta: float
    method: Method
    ci_halfwidth: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.delta <= 1.0):
            raise ValueError("delta must lie in [0, 1]")

    def to_dict(self) -> dict:
        out = {"epsilon": self.epsilon, "delta": self.delta,
               "method": self.method.to_dict()}
        if self.ci_halfwidth is not None:
            out["ci_halfwidth"] = self.ci_halfwidth
        return out


@dataclass(frozen=True)
class PredictabilityReport:
    """Per-step prediction-accuracy frequencies and their product.

    joint_freq is the frequency of all K steps succeeding within one run; the
    product form treats the per-step events as independent, which the metric's
    definition does not guarantee, so both are reported.
    """

    K: int
    epsilon: float
    p_eps: float
    per_step: tuple[float, ...]
    joint_freq: float

    def to_dict(self) -> dict:
        return {"K": self.K, "epsilon": self.epsilon, "p_eps": self.p_eps,
                "per_step": list(self.per_step), "joint_freq": self.joint_freq}


def _check_plain_symmetric(noise: NoiseSpec) -> None:
    if noise.family not in ("gaussian", "uniform", "laplace"):
        raise UnsupportedFamilyError(
            f"family {noise.family!r} is not a supported symmetric unimodal law")
    if np.any(np.asarray(noise.mean) != 0.0):
        raise UnsupportedFamilyError("noise must be zero mean")
    if noise.bound is not None or noise.decay is not None:
        raise UnsupportedFamilyError("bounded or decayed specs are not supported")
    if noise.variance <= 0:
        raise UnsupportedFamilyError("noise variance must be positive")


def central_interval_mass(noise: NoiseSpec, epsilon: float) -> float:
    """P(|theta| <= epsilon) for a zero-mean gaussian/uniform/laplace spec."""
    _check_plain_symmetric(noise)
    s = noise.sigma
    if noise.family == "uniform":
        return min(1.0, epsilon / (math.sqrt(3.0) * s))
    if noise.family == "gaussian":
        return math.erf(epsilon / (s * math.sqrt(2.0)))
    return 1.0 - math.exp(-epsilon * math.sqrt(2.0) / s)


def disclosure_probability(noise: NoiseSpec, epsilon: float,
                           method: Method = ClosedForm()) -> SecrecyReport:
    """Disclosure probability delta = P(|x_hat* - x(0)| <= epsilon).

    The optimal distributed estimate under independent symmetric unimodal
    perturbation is the perturbed observation itself, so delta is the central
    interval mass of the noise density.  Monte Carlo draws the perturbation
    ``runs`` times (inverse CDF from a shared uniform stream, so estimates for
    different families under the same seed are coupled) and returns the exact
    success fraction plus a binomial 95% half-width.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _check_plain_symmetric(noise)
    if isinstance(method, ClosedForm):
        return SecrecyReport(epsilon=epsilon,
                             delta=central_interval_mass(noise, epsilon),
                             method=method)
    rng = channel_rng(method.seed, 0)
    draws = noise.sample_block(rng, 1, method.runs)[:, 0]
    successes = int(np.sum(np.abs(draws) <= epsilon))
    delta = successes / method.runs
    ci = 1.96 * math.sqrt(max(delta * (1.0 - delta), 0.0) / method.runs)
    return SecrecyReport(epsilon=epsilon, delta=delta, method=method,
                         ci_halfwidth=ci)


def expected_square_error(estimates: Sequence[np.ndarray], truth) -> float:
    """Sample mean of squared Euclidean errors of the estimates."""
    if len(estimates) == 0:
        raise ValueError("estimates must be nonempty")
    truth = np.asarray(truth, dtype=float).reshape(-1)
    total = 0.0
    for est in estimates:
        e = np.asarray(est, dtype=float).reshape(-1)
        if e.shape != truth.shape:
            raise ValueError("estimate dimension does not match the truth")
        d = e - truth
        total += float(d @ d)
    return total / len(estimates)


def k_step_predictability(defended_run_factory: Callable[[int], np.ndarray],
                          predictor: Callable[[np.ndarray], np.ndarray],
                          K: int, epsilon: float, runs: int,
                          seed: int = 0) -> PredictabilityReport:
    """Monte-Carlo K-step predictability of a defended process.

    ``defended_run_factory(seed)`` must return a state matrix with at least
    K+1 columns; ``predictor`` maps the history x(0..k-1) (as columns) to a
    prediction of x(k).  per_step[k-1] is the frequency of
    ||x_hat(k|k-1) - x(k)||_inf <= epsilon and p_eps is the product over k.
    """
    if K < 1 or runs < 1:
        raise ValueError("K and runs must be positive")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    hits = np.zeros(K, dtype=int)
    joint = 0
    seed_rng = channel_rng(seed, 0)
    run_seeds = seed_rng.integers(0, 2**63 - 1, size=runs)
    for r in range(runs):
        X = np.atleast_2d(np.asarray(defended_run_factory(int(run_seeds[r]))))
        if X.shape[1] < K + 1:
            raise ValueError("run factory produced fewer than K+1 states")
        ok_all = True
        for k in range(1, K + 1):
            x_hat = np.asarray(predictor(X[:, :k]), dtype=float).reshape(-1)
            ok = bool(np.abs(x_hat - X[:, k]).max() <= epsilon)
            hits[k - 1] += ok
            ok_all = ok_all and ok
        joint += ok_all
    per_step = tuple(float(h) / runs for h in hits)
    p_eps = float(np.prod(per_step))
    return PredictabilityReport(K=K, epsilon=epsilon, p_eps=p_eps,
                                per_step=per_step, joint_freq=joint / runs)


def topology_error(A_hat: np.ndarray, A: np.ndarray) -> tuple[float, float, float]:
    """(frobenius, spectral, relative-frobenius) error of a topology estimate."""
    A_hat = np.asarray(A_hat, dtype=float)
    A = np.asarray(A, dtype=float)
    if A_hat.shape != A.shape:
        raise ValueError("matrices must have identical shapes")
    diff = A_hat - A
    fro = float(np.linalg.norm(diff))
    spec = float(np.linalg.norm(diff, 2)) if diff.size else 0.0
    denom = float(np.linalg.norm(A))
    return fro, spec, fro / denom if denom > 0 else fro


def _check_psd(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.abs(M - M.T).max() > 1e-9 * max(1.0, np.abs(M).max()):
        raise ValueError(f"{name} must be symmetric")
    w = np.linalg.eigvalsh(M)
    if w.min() < -1e-9 * max(1.0, abs(w.max())):
        raise ValueError(f"{name} must be positive semidefinite")
    return M


def cooperation_cost(trajectory, inputs_tilde: np.ndarray, x_T_star,
                     H: np.ndarray, Q: np.ndarray, R: np.ndarray) -> float:
    """Single-run quadratic cooperation cost of a (noisy) input sequence.

    (x_T - x*)^T H (x_T - x*) + sum_k [x(k)^T Q x(k) + u~(k)^T R u~(k)] with
    u~ the inputs after noise injection.  Expectations over noise are left to
    the caller (average over seeds), keeping this deterministic.
    """
    X = trajectory.X if hasattr(trajectory, "X") else np.asarray(trajectory, dtype=float)
    X = np.atleast_2d(X)
    U = np.atleast_2d(np.asarray(inputs_tilde, dtype=float))
    T = U.shape[1]
    if X.shape[1] < T + 1:
        raise ValueError("trajectory must cover T+1 states for T inputs")
    x_star = np.asarray(x_T_star, dtype=float).reshape(-1)
    H = _check_psd(H, "H")
    Q = _check_psd(Q, "Q")
    R = _check_psd(R, "R")
    d = X[:, T] - x_star
    cost = float(d @ H @ d)
    for k in range(T):
        cost += float(X[:, k] @ Q @ X[:, k]) + float(U[:, k] @ R @ U[:, k])
    return cost
