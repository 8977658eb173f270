"""Entropy-regularized linear-quadratic mean field games.

Closed-form equilibria for the Shannon and enhanced-exploration game
variants, Euler simulation of the controlled dynamics under Gaussian
feedback policies, and a model-free mean-field policy-gradient learner with
exploration, plus the harness reproducing the reference convergence
experiments.
"""

from .analytic import (
    EquilibriumSolution,
    GaussianFeedbackPolicy,
    PayoffBreakdown,
    equilibrium_policy,
    equilibrium_state_rates,
    equilibrium_state_variance,
    feedback_policy_payoff,
    game_value,
    riccati_coefficient,
    solve_equilibrium,
    value_offset,
)
from .config import ConfigError, ExperimentConfig, default_config, load_config, save_config
from .harness import (
    ExperimentReport,
    PayoffEvaluator,
    reference_policy,
    relative_error,
    reproduce,
    write_report,
)
from .learner import (
    InitSpec,
    LearnerConfig,
    RunResult,
    estimate_gradient,
    gradient_step,
    sample_sphere,
    sphere_gradient_estimate,
)
from .learner import run as learner_run
from .params import DomainError, GameParams, ParameterError, TimeGrid
from .simulate import (
    SIGMA_FLOOR,
    MeanField,
    PolicyParams,
    Trajectory,
    discretize_policy,
    expected_reward_exact,
    mc_expected_reward,
    propagate_mean_field,
    propagate_mean_field_mc,
    realized_reward,
    sample_rewards,
    simulate_states,
    simulate_trajectory,
    step_moments,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "EquilibriumSolution",
    "ExperimentConfig",
    "ExperimentReport",
    "GameParams",
    "GaussianFeedbackPolicy",
    "InitSpec",
    "LearnerConfig",
    "MeanField",
    "ParameterError",
    "PayoffBreakdown",
    "PayoffEvaluator",
    "PolicyParams",
    "RunResult",
    "SIGMA_FLOOR",
    "TimeGrid",
    "Trajectory",
    "default_config",
    "discretize_policy",
    "equilibrium_policy",
    "equilibrium_state_rates",
    "equilibrium_state_variance",
    "estimate_gradient",
    "expected_reward_exact",
    "feedback_policy_payoff",
    "game_value",
    "gradient_step",
    "learner_run",
    "load_config",
    "mc_expected_reward",
    "propagate_mean_field",
    "propagate_mean_field_mc",
    "realized_reward",
    "reference_policy",
    "relative_error",
    "reproduce",
    "riccati_coefficient",
    "sample_rewards",
    "simulate_states",
    "save_config",
    "sample_sphere",
    "simulate_trajectory",
    "sphere_gradient_estimate",
    "solve_equilibrium",
    "step_moments",
    "value_offset",
    "write_report",
]
