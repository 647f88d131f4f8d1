"""Restless two-state bandits for recommendation: Whittle indices, policy simulation and Thompson learning."""
from .core import (
    INFINITE,
    ArmKind,
    ArmModel,
    Criterion,
    ModelVariant,
    SubsidyRange,
    belief_step_active,
    belief_step_passive,
    expected_reward,
    gamma_infinity,
    subsidy_bounds,
    waiting_time,
)
from .index import index_average, index_discounted, index_oracle, indexability_audit, whittle_index
from .learning import derived_belief, likelihood, posterior_update, run_learning, run_learning_batch
from .sim import Policy, SimConfig, run_batch, run_episode, select_myopic, select_whittle
from .values import average_reward_solve, optimal_threshold, value_iteration

__version__ = "0.1.0"

__all__ = [
    "INFINITE",
    "ArmKind",
    "ArmModel",
    "Criterion",
    "ModelVariant",
    "SubsidyRange",
    "belief_step_active",
    "belief_step_passive",
    "expected_reward",
    "gamma_infinity",
    "subsidy_bounds",
    "waiting_time",
    "index_average",
    "index_discounted",
    "index_oracle",
    "indexability_audit",
    "whittle_index",
    "derived_belief",
    "likelihood",
    "posterior_update",
    "run_learning",
    "run_learning_batch",
    "Policy",
    "SimConfig",
    "run_batch",
    "run_episode",
    "select_myopic",
    "select_whittle",
    "average_reward_solve",
    "optimal_threshold",
    "value_iteration",
]
