"""Multi-sided many-to-one matching for space-air-ground network association."""

from .baselines import distance_association, greedy_association
from .channel import RateMatrix, build_rate_matrix, link_rate, los_probability, rate_matrices
from .msa import MsaConfig, run_msa, run_pair
from .scenario import (
    ChannelParams,
    Node,
    Scenario,
    ScenarioConfig,
    ScenarioError,
    generate_scenario,
    load_config,
    load_scenario,
    default_config,
    save_config,
    save_scenario,
)
from .valuation import ConsistencyError, Matching, per_user_end_to_end, total_value

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "ConsistencyError",
    "Matching",
    "MsaConfig",
    "Node",
    "RateMatrix",
    "Scenario",
    "ScenarioConfig",
    "ScenarioError",
    "build_rate_matrix",
    "distance_association",
    "generate_scenario",
    "greedy_association",
    "link_rate",
    "load_config",
    "load_scenario",
    "los_probability",
    "default_config",
    "per_user_end_to_end",
    "rate_matrices",
    "run_msa",
    "run_pair",
    "save_config",
    "save_scenario",
    "total_value",
]
