import numpy as np
import pytest

from ndss.dynamics import NoiseSpec, build_consensus_benchmark, simulate
from ndss.topology_inference import (ObservationStacks, infer_causality,
                                     infer_ols)


@pytest.fixture(scope="session")
def benchmark():
    return build_consensus_benchmark()


@pytest.fixture(scope="session")
def benchmark_topology_sweep(benchmark):
    """Per-seed Frobenius errors of both estimators on the benchmark.

    50 seeds, unit process and observation noise, errors taken at T = 1e3 and
    T = 1e5 on prefixes of one long run per seed.  Shared between the
    error-decay property test and the acceptance suite (which uses the first
    20 seeds).
    """
    model, x0 = benchmark
    unit = NoiseSpec("gaussian", variance=1.0)
    horizons = (1000, 100000)
    errors = {(m, T): [] for m in ("ols", "causality") for T in horizons}
    for seed in range(50):
        traj = simulate(model, x0, max(horizons), process_noise=unit,
                        obs_noise=unit, seed=seed)
        for T in horizons:
            obs = ObservationStacks.from_series(traj.Y[:, :T + 1])
            errors[("ols", T)].append(
                infer_ols(obs).with_truth(model.A).frobenius_error)
            errors[("causality", T)].append(
                infer_causality(obs, 1.0).with_truth(model.A).frobenius_error)
    return {k: np.asarray(v) for k, v in errors.items()}
