"""Linear networked system models, noise channels, and trajectory simulation.

The systems here follow the discrete-time form

    x(k+1) = A x(k) + B u(k) + w(k)
    y(k)   = C x(k) + v(k)

with an optional input map B and an observation map C (identity when the
states are directly measurable).  Everything is deterministic given a 64-bit
seed: each noise channel draws from its own counter-based (Philox) substream,
so re-running with the same seed reproduces a trajectory bit for bit and the
channels stay independent of each other.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import ndtri

__all__ = [
    "StabilityClass",
    "SystemModel",
    "NoiseSpec",
    "DecaySchedule",
    "Trajectory",
    "classify_stability",
    "simulate",
    "build_consensus_benchmark",
    "build_double_integrator_network",
    "channel_rng",
]

# Noise-channel ids used to derive independent RNG substreams from one seed.
CHANNEL_PROCESS = 1
CHANNEL_OBSERVATION = 2
CHANNEL_THETA = 3
CHANNEL_XI = 4
CHANNEL_INPUT = 5

_MASK64 = (1 << 64) - 1


def channel_rng(seed: int, channel: int) -> np.random.Generator:
    """Independent Philox substream for (seed, channel)."""
    ss = np.random.SeedSequence(entropy=seed & _MASK64, spawn_key=(channel,))
    return np.random.Generator(np.random.Philox(ss))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.flags.writeable = False
    return a


class StabilityClass(enum.Enum):
    ASYMPTOTIC = "asymptotic"  # spectral radius < 1
    MARGINAL = "marginal"      # spectral radius = 1, simple unit eigenvalue
    OTHER = "other"


def classify_stability(A: np.ndarray, tol: float = 1e-9) -> StabilityClass:
    """Classify a square matrix as asymptotically / marginally stable or other.

    Marginal means the spectral radius equals one within ``tol`` and the unit
    eigenvalue has geometric multiplicity one, computed as
    n - rank(A - I) with singular values thresholded at ``tol * s_max``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("stability classification requires a square matrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = A.shape[0]
    radius = float(np.abs(np.linalg.eigvals(A)).max())
    if radius < 1.0 - tol:
        return StabilityClass.ASYMPTOTIC
    if abs(radius - 1.0) <= tol:
        s = np.linalg.svd(A - np.eye(n), compute_uv=False)
        rank = int(np.sum(s > tol * max(s[0], 1.0)))
        if n - rank == 1:
            return StabilityClass.MARGINAL
    return StabilityClass.OTHER


@dataclass(frozen=True)
class SystemModel:
    """State-space triple (A, B, C); B may be absent, C defaults to identity."""

    A: np.ndarray
    B: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None

    def __post_init__(self):
        A = _readonly(self.A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        object.__setattr__(self, "A", A)
        n = A.shape[0]
        if self.B is not None:
            B = np.asarray(self.B, dtype=float)
            if B.ndim == 1:
                B = B.reshape(-1, 1)
            if B.shape[0] != n:
                raise ValueError(f"B must have {n} rows, got {B.shape[0]}")
            object.__setattr__(self, "B", _readonly(B))
        C = np.eye(n) if self.C is None else np.asarray(self.C, dtype=float)
        if C.ndim == 1:
            C = C.reshape(1, -1)
        if C.shape[1] != n:
            raise ValueError(f"C must have {n} columns, got {C.shape[1]}")
        object.__setattr__(self, "C", _readonly(C))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def q(self) -> int:
        return 0 if self.B is None else self.B.shape[1]

    def stability(self, tol: float = 1e-9) -> StabilityClass:
        return classify_stability(self.A, tol)


@dataclass(frozen=True)
class DecaySchedule:
    """Exponential decay alpha * rho**k applied to the k-th draw."""

    alpha: float
    rho: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("decay alpha must be positive")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError("decay rho must lie in [0, 1)")

    def scale(self, k) -> np.ndarray:
        return self.alpha * np.power(self.rho, k)


_FAMILIES = ("gaussian", "uniform", "laplace", "zero")


@dataclass(frozen=True)
class NoiseSpec:
    """Distribution family + parameters for one noise channel.

    variance is the per-component variance of the *unscaled* draw.  A uniform
    spec with variance s^2 has support half-width sqrt(3)*s; a Laplace spec
    has scale s/sqrt(2).  ``bound`` truncates/rescales the centred draw so
    its half-width is exactly ``bound`` (uniform support is stretched to the
    bound; gaussian and laplace draws are clipped at 3 standard deviations
    and that point is mapped onto the bound).  ``decay`` multiplies the k-th
    centred draw by alpha*rho^k, so a bounded decayed spec with alpha <= 1
    never exceeds bound*rho^k in magnitude at step k.

    All families sample by inverse CDF from one uniform variate, so draws
    from specs differing only in family or variance are coupled (common
    random numbers) under the same generator state.
    """

    family: str
    mean: Union[float, Sequence[float]] = 0.0
    variance: float = 1.0
    bound: Optional[float] = None
    decay: Optional[DecaySchedule] = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")
        if self.bound is not None and self.bound < 0:
            raise ValueError("bound must be nonnegative")
        if self.decay is not None and not isinstance(self.decay, DecaySchedule):
            object.__setattr__(self, "decay", DecaySchedule(*self.decay))

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.variance))

    def _centred(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.family == "zero" or self.variance == 0.0:
            return np.zeros(shape)
        u = rng.random(shape)
        tiny = np.finfo(float).tiny
        s = self.sigma
        if self.family == "gaussian":
            d = ndtri(np.clip(u, tiny, 1.0 - 1e-16)) * s
        elif self.family == "uniform":
            d = (2.0 * u - 1.0) * (np.sqrt(3.0) * s)
        else:  # laplace, scale b = sigma / sqrt(2)
            b = s / np.sqrt(2.0)
            core = np.clip(1.0 - 2.0 * np.abs(u - 0.5), tiny, 1.0)
            d = -b * np.sign(u - 0.5) * np.log(core)
        if self.bound is not None:
            if self.family == "uniform":
                d *= self.bound / (np.sqrt(3.0) * s)
            else:
                d = np.clip(d, -3.0 * s, 3.0 * s) * (self.bound / (3.0 * s))
        return d

    def sample(self, rng: np.random.Generator, size: int, k: int = 0) -> np.ndarray:
        """One step-k draw of dimension ``size``."""
        d = self._centred(rng, size)
        if self.decay is not None:
            d *= self.decay.scale(k)
        return np.asarray(self.mean, dtype=float) + d

    def sample_block(self, rng: np.random.Generator, size: int, steps: int,
                     k0: int = 0) -> np.ndarray:
        """Draws for steps k0..k0+steps-1, returned as (steps, size)."""
        d = self._centred(rng, (steps, size))
        if self.decay is not None:
            d *= self.decay.scale(np.arange(k0, k0 + steps))[:, None]
        return np.asarray(self.mean, dtype=float) + d


ZERO_NOISE = NoiseSpec("zero", variance=0.0)


@dataclass(frozen=True)
class Trajectory:
    """One simulated run: states, outputs, inputs, and the raw noise draws.

    X is n x (T+1), Y is m x (T+1); omega is n x T and v is m x (T+1) so the
    recurrences X[:,k+1] = A X[:,k] + B U[:,k] + omega[:,k] and
    Y[:,k] = C X[:,k] + v[:,k] replay exactly.  theta/eta are only present on
    defended runs.
    """

    X: np.ndarray
    Y: np.ndarray
    seed: int
    U: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    eta: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("X", "Y", "U", "omega", "v", "theta", "eta"):
            a = getattr(self, name)
            if a is not None:
                object.__setattr__(self, name, _readonly(a))

    @property
    def T(self) -> int:
        return self.X.shape[1] - 1

    def to_csv(self, path) -> None:
        """Write k, x_1..x_n, y_1..y_m [, u_1..u_q] rows."""
        n = self.X.shape[0]
        m = self.Y.shape[0]
        cols = ["k"] + [f"x_{i+1}" for i in range(n)] + [f"y_{i+1}" for i in range(m)]
        q = 0 if self.U is None else self.U.shape[0]
        cols += [f"u_{i+1}" for i in range(q)]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for k in range(self.T + 1):
                row = [str(k)]
                row += [repr(float(x)) for x in self.X[:, k]]
                row += [repr(float(y)) for y in self.Y[:, k]]
                if q:
                    u = self.U[:, k] if k < self.U.shape[1] else np.zeros(q)
                    row += [repr(float(x)) for x in u]
                fh.write(",".join(row) + "\n")


InputSource = Union[None, np.ndarray, Callable[[int], np.ndarray]]


def simulate(model: SystemModel, x0, T: int, process_noise: NoiseSpec = ZERO_NOISE,
             obs_noise: NoiseSpec = ZERO_NOISE, input_source: InputSource = None,
             seed: int = 0) -> Trajectory:
    """Simulate T steps of the model from x0.

    ``input_source`` may be a q x T array or a callable k -> u(k); it is
    required exactly when the model has an input map B.  Identical arguments
    (including seed) give a bit-identical trajectory.
    """
    if T <= 0:
        raise ValueError("T must be a positive integer")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    n, m = model.n, model.m
    if x0.shape[0] != n:
        raise ValueError(f"x0 must have dimension {n}, got {x0.shape[0]}")
    if (model.B is None) != (input_source is None):
        raise ValueError("input_source must be supplied iff the model has B")

    U = None
    if model.B is not None:
        q = model.q
        if callable(input_source):
            U = np.column_stack([np.asarray(input_source(k), dtype=float).reshape(q)
                                 for k in range(T)])
        else:
            U = np.asarray(input_source, dtype=float).reshape(q, T)

    omega = process_noise.sample_block(channel_rng(seed, CHANNEL_PROCESS), n, T).T
    v = obs_noise.sample_block(channel_rng(seed, CHANNEL_OBSERVATION), m, T + 1).T

    X = np.empty((n, T + 1))
    X[:, 0] = x0
    x = x0
    A, B = model.A, model.B
    for k in range(T):
        x = A @ x + omega[:, k]
        if B is not None:
            x = x + B @ U[:, k]
        X[:, k + 1] = x
    Y = model.C @ X + v
    return Trajectory(X=X, Y=Y, seed=seed, U=U, omega=omega, v=v)


# Benchmark weights as integer multiples of 1/45, which is exactly doubly
# stochastic.  The familiar 4-decimal rounding of these entries is not (three
# row sums come to 0.9999), and under it the consensus value drifts by ~0.086
# within 500 steps; the rational form keeps consensus exact.
_BENCHMARK_NUMERATORS = np.array(
    [
        [41, 2, 0, 0, 2],
        [2, 36, 3, 1, 3],
        [0, 3, 41, 1, 0],
        [0, 1, 1, 41, 2],
        [2, 3, 0, 2, 38],
    ],
    dtype=float,
)

BENCHMARK_CONSENSUS_VALUE = 2.9


def build_consensus_benchmark() -> tuple[SystemModel, np.ndarray]:
    """The 5-node doubly stochastic consensus benchmark and its initial state.

    Weights are integer multiples of 1/45 (0.9111..., 0.0444..., and so on to
    four decimals); the initial state is [-26, -3, 13, 28, 17]/2, whose
    average -- the consensus value -- is 2.9.
    """
    A = _BENCHMARK_NUMERATORS / 45.0
    x0 = np.array([-26.0, -3.0, 13.0, 28.0, 17.0]) / 2.0
    return SystemModel(A=A), x0


def build_double_integrator_network(T0: float, alpha: float,
                                    weights: np.ndarray) -> SystemModel:
    """Position/velocity double-integrator network under consensus feedback.

    Each node carries state [position, velocity]; the feedback
    u_i = sum_j a_ij [(p_j - p_i) + alpha (v_j - v_i)] with control period T0
    yields the 2N x 2N block matrix assembled here (diagonal blocks couple a
    node's own position and velocity, off-diagonal blocks scale with a_ij).
    """
    if T0 <= 0 or alpha <= 0:
        raise ValueError("T0 and alpha must be positive")
    W = np.asarray(weights, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError("weights must be a square matrix")
    if np.any(W < 0):
        raise ValueError("weights must be nonnegative")
    if np.any(np.diag(W) != 0):
        raise ValueError("weights must have zero diagonal")
    N = W.shape[0]
    A = np.zeros((2 * N, 2 * N))
    deg = W.sum(axis=1)
    for i in range(N):
        s = deg[i]
        A[2 * i:2 * i + 2, 2 * i:2 * i + 2] = [
            [1.0 - T0 ** 2 / 2.0 * s, T0 - alpha * T0 ** 2 / 2.0 * s],
            [-T0 * s, 1.0 - alpha * T0 * s],
        ]
        for j in range(N):
            if i == j or W[i, j] == 0:
                continue
            a = W[i, j]
            A[2 * i:2 * i + 2, 2 * j:2 * j + 2] = [
                [T0 ** 2 * a / 2.0, alpha * a * T0 ** 2 / 2.0],
                [T0 * a, alpha * T0 * a],
            ]
    return SystemModel(A=A)
