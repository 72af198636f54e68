"""Batch-ensemble bandit policies, baselines, simulation and verification.

A loss-minimising multi-armed bandit agent that indexes each arm by the
minimum of shrunk per-batch means over a round-robin split of the arm's
samples, together with UCB, UCB-V, KL-UCB and MARS baselines.
"""

__version__ = "0.1.0"

from .environments import (  # noqa: E402
    Bandit,
    Bernoulli,
    Bernoullified,
    Exponential,
    Gaussian,
    ScaledBernoulli,
    Uniform,
    bernoullify,
    parse_arm,
)
from .estimator import (  # noqa: E402
    ArmEstimator,
    BatchSchedule,
    EstimatorMode,
    anytime_batch_count,
    fixed_batch_count,
)
from .policies import PolicyConfig, make_policy, parse_policy  # noqa: E402
from .simulator import (  # noqa: E402
    PRESETS,
    ExperimentResult,
    Trajectory,
    run_episode,
    run_experiment,
    simulate,
    fixed_horizon_bounds,
    anytime_bounds,
)

__all__ = [
    "ArmEstimator", "Bandit", "BatchSchedule", "Bernoulli", "Bernoullified", "EstimatorMode",
    "ExperimentResult", "Exponential", "Gaussian", "PRESETS", "PolicyConfig", "ScaledBernoulli",
    "Trajectory", "Uniform", "anytime_batch_count", "bernoullify", "fixed_batch_count",
    "make_policy", "parse_arm", "parse_policy", "run_episode", "run_experiment", "simulate",
    "fixed_horizon_bounds", "anytime_bounds",
]
