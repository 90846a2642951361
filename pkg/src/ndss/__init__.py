"""Inference attacks on networked dynamical systems and their countermeasures.

The package splits into the attacked object (``dynamics``), three attack
surfaces (``state_inference``, ``topology_inference``, ``sysid``), the
noise-adding defenses (``secrecy_defense``), the secrecy metrics that score
both sides (``secrecy_metrics``), and a batch CLI (``cli``).
"""

__version__ = "0.1.0"

from .dynamics import (NoiseSpec, DecaySchedule, StabilityClass, SystemModel,
                       Trajectory, build_consensus_benchmark,
                       build_double_integrator_network, classify_stability,
                       simulate)
from .state_inference import (ObservabilityBundle, StateEstimate,
                              estimate_initial_state, observability_bundle,
                              sparse_initial_state, check_local_estimability)
from .topology_inference import (CovariancePair, ObservationStacks,
                                 TopologyEstimate, compute_V_H,
                                 infer_causality, infer_granger, infer_local,
                                 infer_ols)
from .sysid import (MarkovEstimate, RealizedModel, estimate_markov, ho_kalman,
                    infer_feedback_gain, markov_parameters)
from .secrecy_defense import (AdjacentCancellation, BoundaryNoise,
                              DefenseConfig, DefendedRun, NoEtaNoise,
                              boundary_noise_step, optimal_unpredictability_spec,
                              run_defended, verify_convergence_condition)
from .secrecy_metrics import (ClosedForm, MonteCarlo, PredictabilityReport,
                              SecrecyReport, cooperation_cost,
                              disclosure_probability, expected_square_error,
                              k_step_predictability, topology_error)
from .scenario import Scenario, load_scenario, validate_scenario
