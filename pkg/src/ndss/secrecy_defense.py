"""Noise-adding countermeasures that keep consensus intact.

The defended iteration perturbs the broadcast state with theta and injects an
extra input eta:

    x+(k)   = x(k) + theta(k)
    x(k+1)  = A x+(k) + eta(k)

Exact convergence survives when eta telescopes: with an auxiliary draw
xi_i(k) from [-alpha rho^k / 2, alpha rho^k / 2] and
eta_i(k) = xi_i(k) - xi_i(k-1) (eta_i(0) = xi_i(0)), every partial sum of
eta_i equals xi_i at the last index, so it decays like rho^k and the
consensus value is preserved for doubly stochastic A.  The boundary design
keeps the same cancellation structure but picks each xi_i(k) at an endpoint
of its admissible interval, choosing signs that maximise the damage to an
OLS topology attack (the induced eta lands on the boundary of its interval,
which is where the per-step optimum provably lies).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .dynamics import (CHANNEL_THETA, CHANNEL_XI, NoiseSpec, SystemModel,
                       Trajectory, channel_rng)
from .topology_inference import SINGULAR_RTOL, SingularGramError

__all__ = [
    "NoEtaNoise",
    "AdjacentCancellation",
    "BoundaryNoise",
    "DefenseConfig",
    "DefendedRun",
    "run_defended",
    "boundary_noise_step",
    "verify_convergence_condition",
    "optimal_unpredictability_spec",
    "is_doubly_stochastic",
]


@dataclass(frozen=True)
class NoEtaNoise:
    pass


@dataclass(frozen=True)
class AdjacentCancellation:
    """Algorithm parameters for the telescoping eta design.

    xi_i(k) is drawn i.i.d. from ``family`` scaled into
    [-alpha rho^k / 2, alpha rho^k / 2]; gaussian and laplace draws are
    clipped at their 3-sigma point, which is mapped onto the interval end.
    """

    alpha: float
    rho: float
    family: str = "uniform"

    def __post_init__(self):
        _check_alpha_rho(self.alpha, self.rho)
        if self.family not in ("gaussian", "uniform", "laplace"):
            raise ValueError(f"unsupported inner family {self.family!r}")


@dataclass(frozen=True)
class BoundaryNoise:
    """Adjacent cancellation with xi picked at interval endpoints.

    Signs are chosen per step to maximise the OLS topology-inference error of
    the trajectory so far; convergence is exact for doubly stochastic A, and
    |eta_i(k)| <= alpha rho^(k-1) (1 + rho) / 2.
    """

    alpha: float
    rho: float

    def __post_init__(self):
        _check_alpha_rho(self.alpha, self.rho)


def _check_alpha_rho(alpha: float, rho: float) -> None:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if not (0.0 <= rho < 1.0):
        raise ValueError("rho must lie in [0, 1)")


EtaDesigner = Union[NoEtaNoise, AdjacentCancellation, BoundaryNoise]


@dataclass(frozen=True)
class DefenseConfig:
    theta_spec: NoiseSpec
    eta_designer: EtaDesigner
    k_max: int

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be a positive integer")


@dataclass(frozen=True)
class DefendedRun:
    """A defended trajectory plus its convergence bookkeeping.

    The recorded eta has k_max + 1 columns: eta(k) drives the update to
    x(k+1) for k < k_max, and the final column is the draw prepared at the
    last iteration, kept so partial sums telescope to xi(K) for every
    K <= k_max.  deviation is measured in the max norm against the consensus
    value for doubly stochastic A, otherwise against the noise-free run.
    """

    trajectory: Trajectory
    converged_value: Optional[np.ndarray]
    deviation: float


def is_doubly_stochastic(A: np.ndarray, tol: float = 1e-9) -> bool:
    A = np.asarray(A, dtype=float)
    ones = np.ones(A.shape[0])
    return bool(np.all(A >= -tol)
                and np.abs(A @ ones - ones).max() < tol
                and np.abs(A.T @ ones - ones).max() < tol)


def _draw_in_interval(rng: np.random.Generator, family: str, half: float,
                      size: int) -> np.ndarray:
    """i.i.d. draws from ``family`` scaled into [-half, half]."""
    if family == "uniform":
        return rng.uniform(-half, half, size)
    if family == "gaussian":
        return np.clip(rng.standard_normal(size), -3.0, 3.0) * (half / 3.0)
    # laplace with unit variance has scale 1/sqrt(2); clip at 3 sigma = 3
    d = rng.laplace(0.0, 1.0 / np.sqrt(2.0), size)
    return np.clip(d, -3.0, 3.0) * (half / 3.0)


def boundary_noise_step(phi_prev: np.ndarray, y_hist: np.ndarray,
                        lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Optimal per-node boundary noise for the current iteration.

    Maximises || [phi_prev, eta] Y^T (Y Y^T)^-1 ||_F^2 over
    eta_i in [lower_i, upper_i], where ``y_hist`` holds the observations
    y(0)..y(k) (one more column than ``phi_prev`` = [eta(0)..eta(k-1)]).

    Writing M = Y^T (Y Y^T)^-1 and m for its last row, the objective is
    const + 2 eta . (phi_prev M_top m^T) + ||m||^2 ||eta||^2 -- separable and
    convex per coordinate, so the exact maximiser sits at an interval endpoint
    for every node and can be selected coordinate by coordinate.
    """
    phi_prev = np.atleast_2d(np.asarray(phi_prev, dtype=float))
    Y = np.atleast_2d(np.asarray(y_hist, dtype=float))
    lower = np.asarray(lower, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)
    n = Y.shape[0]
    if phi_prev.shape[0] != n or lower.shape[0] != n or upper.shape[0] != n:
        raise ValueError("phi_prev, y_hist, lower and upper must share the node dimension")
    if Y.shape[1] != phi_prev.shape[1] + 1:
        raise ValueError("y_hist must have exactly one more column than phi_prev")
    if np.any(lower > upper):
        raise ValueError("lower bounds must not exceed upper bounds")
    gram = Y @ Y.T
    s = np.linalg.svd(gram, compute_uv=False)
    if s[0] == 0 or s[-1] < SINGULAR_RTOL * s[0]:
        raise SingularGramError("observation gram matrix is numerically singular")
    M = np.linalg.solve(gram, Y).T          # (k+1) x n
    g = phi_prev @ M[:-1, :] @ M[-1, :]     # linear coefficient per node
    mm = float(M[-1, :] @ M[-1, :])
    val_lo = mm * lower**2 + 2.0 * g * lower
    val_hi = mm * upper**2 + 2.0 * g * upper
    return np.where(val_hi >= val_lo, upper, lower)


def run_defended(model: SystemModel, x0, cfg: DefenseConfig, seed: int = 0) -> DefendedRun:
    """Run the noise-adding iteration for cfg.k_max steps.

    With a zero theta spec and no eta designer this reduces to the plain
    noise-free simulation.  All draws derive from (seed, channel) substreams,
    so runs replay exactly.
    """
    if model.B is not None:
        raise ValueError("defended runs take no external input channel")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    n = model.n
    if x0.shape[0] != n:
        raise ValueError(f"x0 must have dimension {n}, got {x0.shape[0]}")
    k_max = cfg.k_max
    A = model.A
    designer = cfg.eta_designer

    theta_rng = channel_rng(seed, CHANNEL_THETA)
    xi_rng = channel_rng(seed, CHANNEL_XI)
    theta = cfg.theta_spec.sample_block(theta_rng, n, k_max + 1).T

    X = np.empty((n, k_max + 1))
    X[:, 0] = x0
    eta = np.zeros((n, k_max + 1))
    xi_prev = None
    x = x0
    for k in range(k_max + 1):
        if isinstance(designer, AdjacentCancellation):
            half = designer.alpha * designer.rho**k / 2.0
            xi = _draw_in_interval(xi_rng, designer.family, half, n)
            eta[:, k] = xi if k == 0 else xi - xi_prev
            xi_prev = xi
        elif isinstance(designer, BoundaryNoise):
            half = designer.alpha * designer.rho**k / 2.0
            xi = _boundary_xi(X[:, :k + 1], eta[:, :k], xi_prev, half, k, n, xi_rng)
            eta[:, k] = xi if k == 0 else xi - xi_prev
            xi_prev = xi
        if k < k_max:
            x = A @ (x + theta[:, k]) + eta[:, k]
            X[:, k + 1] = x

    traj = Trajectory(X=X, Y=X + theta, seed=seed, theta=theta, eta=eta)
    if is_doubly_stochastic(A):
        converged = np.full(n, float(np.mean(x0)))
    else:
        converged = None
    if converged is not None:
        deviation = float(np.abs(X[:, k_max] - converged).max())
    else:
        x_free = x0
        for _ in range(k_max):
            x_free = A @ x_free
        deviation = float(np.abs(X[:, k_max] - x_free).max())
    return DefendedRun(trajectory=traj, converged_value=converged, deviation=deviation)


def _boundary_xi(y_hist, phi_prev, xi_prev, half, k, n, rng) -> np.ndarray:
    """Endpoint xi for the boundary design, via the per-step optimum on eta."""
    if k == 0 or k <= n + 1:
        # not enough observations for the gram matrix yet: random endpoints
        return np.where(rng.random(n) < 0.5, -half, half)
    lower = -half - xi_prev
    upper = half - xi_prev
    try:
        eta_star = boundary_noise_step(phi_prev, y_hist, lower, upper)
    except SingularGramError:
        return np.where(rng.random(n) < 0.5, -half, half)
    return eta_star + xi_prev


def verify_convergence_condition(A: np.ndarray, eta_sequence: np.ndarray,
                                 tol: float, alpha: Optional[float] = None,
                                 rho: Optional[float] = None) -> tuple[bool, bool]:
    """Check the exact and doubly stochastic convergence conditions.

    exact_ok evaluates the partial sum sum_l A^(K-1-l) eta(l) directly and
    requires its max norm below ``tol``.  doubly_stochastic_ok checks the
    zero-sum condition |sum_k sum_i eta_i(k)| < tol and, when (alpha, rho)
    are supplied, the per-step decay bound ||eta(k)||_inf <= alpha rho^k
    (skipped otherwise, since the bound is meaningless without them).
    """
    A = np.asarray(A, dtype=float)
    eta = np.atleast_2d(np.asarray(eta_sequence, dtype=float))
    if eta.shape[0] != A.shape[0]:
        raise ValueError("eta_sequence rows must match the state dimension")
    if eta.shape[1] < 1:
        raise ValueError("need at least one noise step")
    s = np.zeros(A.shape[0])
    for l in range(eta.shape[1]):
        s = A @ s + eta[:, l]
    exact_ok = bool(np.abs(s).max() < tol)
    ds_ok = bool(abs(eta.sum()) < tol)
    if alpha is not None and rho is not None:
        bounds = alpha * np.power(rho, np.arange(eta.shape[1]))
        ds_ok = ds_ok and bool(np.all(np.abs(eta).max(axis=0) <= bounds + 1e-12))
    return exact_ok, ds_ok


def optimal_unpredictability_spec(sigma_eta: float, objective: str) -> NoiseSpec:
    """Noise distribution making one-step prediction maximally unreliable.

    For the expected-square-error objective any zero-mean law with variance
    exactly sigma_eta^2 is optimal (returned as uniform by convention); for
    the accuracy-probability objective the uniform law on
    [-sqrt(3) sigma_eta, sqrt(3) sigma_eta] is optimal for small enough
    tolerance when the dynamics part of the prediction is accurate.
    """
    if sigma_eta <= 0:
        raise ValueError("sigma_eta must be positive")
    if objective not in ("expected_square_error", "accuracy_probability"):
        raise ValueError(f"unknown objective {objective!r}")
    return NoiseSpec("uniform", variance=sigma_eta**2)
