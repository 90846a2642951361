"""Scenario files: the JSON surface shared by the CLI and external callers.

A scenario bundles a model, an initial state, a horizon, the two ambient
noise channels and (optionally) a defense block:

    {"model": {"A": [[...]], "B": [[...]], "C": [[...]]},
     "x0": [...], "T": 500, "seed": 7,
     "process_noise": {"family": "gaussian", "variance": 1.0},
     "obs_noise": {"family": "zero", "variance": 0.0},
     "defense": {"theta": {...}, "k_max": 500,
                 "eta": {"kind": "adjacent", "alpha": 0.3, "rho": 0.95,
                         "family": "uniform"}}}

Matrices are row-major nested lists; omitting "B" means no input channel and
omitting "C" means identity observation.  ``validate_scenario`` returns the
full list of schema violations instead of stopping at the first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import DecaySchedule, NoiseSpec, SystemModel, ZERO_NOISE
from .secrecy_defense import (AdjacentCancellation, BoundaryNoise,
                              DefenseConfig, NoEtaNoise)

__all__ = ["ScenarioError", "Scenario", "load_scenario", "validate_scenario",
           "validate_scenario_dict"]

_FAMILIES = ("gaussian", "uniform", "laplace", "zero")


class ScenarioError(ValueError):
    """Scenario file violates the schema; .violations lists every problem."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class Scenario:
    model: SystemModel
    x0: np.ndarray
    T: int
    process_noise: NoiseSpec
    obs_noise: NoiseSpec
    seed: int
    defense: Optional[DefenseConfig] = None


def _check_matrix(value, key, violations):
    try:
        M = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        violations.append(f"{key} must be a numeric matrix")
        return None
    if M.ndim != 2:
        violations.append(f"{key} must be a two-dimensional matrix")
        return None
    return M

def _check_noise(obj, key, violations) -> Optional[NoiseSpec]:
    if obj is None:
        return ZERO_NOISE
    if not isinstance(obj, dict):
        violations.append(f"{key} must be an object")
        return None
    family = obj.get("family")
    if family not in _FAMILIES:
        violations.append(f"{key}.family must be one of {list(_FAMILIES)}")
        return None
    variance = obj.get("variance", 1.0)
    if not isinstance(variance, (int, float)) or variance < 0:
        violations.append(f"{key}.variance must be a nonnegative number")
        return None
    bound = obj.get("bound")
    if bound is not None and (not isinstance(bound, (int, float)) or bound < 0):
        violations.append(f"{key}.bound must be a nonnegative number")
        return None
    decay = obj.get("decay")
    schedule = None
    if decay is not None:
        alpha = decay.get("alpha") if isinstance(decay, dict) else None
        rho = decay.get("rho") if isinstance(decay, dict) else None
        if not isinstance(alpha, (int, float)) or alpha <= 0:
            violations.append(f"{key}.decay.alpha must be positive")
            return None
        if not isinstance(rho, (int, float)) or not (0 <= rho < 1):
            violations.append(f"{key}.decay.rho: rho must lie in [0,1)")
            return None
        schedule = DecaySchedule(alpha=float(alpha), rho=float(rho))
    return NoiseSpec(family=family, mean=obj.get("mean", 0.0),
                     variance=float(variance),
                     bound=None if bound is None else float(bound),
                     decay=schedule)


def _check_defense(obj, n, violations) -> Optional[DefenseConfig]:
    if not isinstance(obj, dict):
        violations.append("defense must be an object")
        return None
    theta = _check_noise(obj.get("theta"), "defense.theta", violations)
    k_max = obj.get("k_max")
    if not isinstance(k_max, int) or k_max < 1:
        violations.append("defense.k_max must be a positive integer")
        k_max = None
    eta = obj.get("eta") or {"kind": "none"}
    kind = eta.get("kind") if isinstance(eta, dict) else None
    designer = None
    if kind == "none":
        designer = NoEtaNoise()
    elif kind in ("adjacent", "boundary"):
        alpha = eta.get("alpha")
        rho = eta.get("rho")
        if not isinstance(alpha, (int, float)) or alpha <= 0:
            violations.append("defense.eta.alpha must be positive")
        elif not isinstance(rho, (int, float)) or not (0 <= rho < 1):
            violations.append("defense.eta.rho: rho must lie in [0,1)")
        elif kind == "adjacent":
            family = eta.get("family", "uniform")
            if family not in ("gaussian", "uniform", "laplace"):
                violations.append("defense.eta.family must be gaussian, uniform or laplace")
            else:
                designer = AdjacentCancellation(alpha=float(alpha), rho=float(rho),
                                                family=family)
        else:
            designer = BoundaryNoise(alpha=float(alpha), rho=float(rho))
    else:
        violations.append("defense.eta.kind must be 'adjacent', 'boundary' or 'none'")
    if theta is None or designer is None or k_max is None:
        return None
    return DefenseConfig(theta_spec=theta, eta_designer=designer, k_max=k_max)


def validate_scenario_dict(obj) -> tuple[Optional[Scenario], list[str]]:
    """Full schema check of a parsed scenario; returns (scenario|None, violations)."""
    violations: list[str] = []
    if not isinstance(obj, dict):
        return None, ["scenario must be a JSON object"]
    model_obj = obj.get("model")
    if not isinstance(model_obj, dict) or "A" not in model_obj:
        violations.append("model.A is required")
        return None, violations
    A = _check_matrix(model_obj["A"], "A", violations)
    if A is None:
        return None, violations
    if A.shape[0] != A.shape[1]:
        violations.append("A must be square")
        return None, violations
    n = A.shape[0]
    B = None
    if model_obj.get("B") is not None:
        B = _check_matrix(model_obj["B"], "B", violations)
        if B is not None and B.shape[0] != n:
            violations.append(f"B must have {n} rows")
            B = None
    C = None
    if model_obj.get("C") is not None:
        C = _check_matrix(model_obj["C"], "C", violations)
        if C is not None and C.shape[1] != n:
            violations.append(f"C must have {n} columns")
            C = None

    x0 = obj.get("x0")
    if not isinstance(x0, list) or len(x0) != n or \
            not all(isinstance(v, (int, float)) for v in x0):
        violations.append(f"x0 must be a numeric vector of length {n}")
        x0 = None

    T = obj.get("T")
    if not isinstance(T, int) or T < 1:
        violations.append("T must be a positive integer")
        T = None

    seed = obj.get("seed", 0)
    if not isinstance(seed, int):
        violations.append("seed must be an integer")
        seed = None

    process = _check_noise(obj.get("process_noise"), "process_noise", violations)
    observe = _check_noise(obj.get("obs_noise"), "obs_noise", violations)

    defense = None
    if obj.get("defense") is not None:
        defense = _check_defense(obj["defense"], n, violations)

    if violations:
        return None, violations
    model = SystemModel(A=A, B=B, C=C)
    return Scenario(model=model, x0=np.asarray(x0, dtype=float), T=T,
                    process_noise=process, obs_noise=observe, seed=seed,
                    defense=defense), []


def validate_scenario(path) -> list[str]:
    """Schema violations of a scenario file ([] means ok); IO errors raise."""
    with open(path, "r") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        return [f"invalid JSON: {exc}"]
    _, violations = validate_scenario_dict(obj)
    return violations


def load_scenario(path) -> Scenario:
    """Load and validate a scenario file; raises ScenarioError on violations."""
    with open(path, "r") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"invalid JSON: {exc}"])
    scenario, violations = validate_scenario_dict(obj)
    if violations:
        raise ScenarioError(violations)
    return scenario
