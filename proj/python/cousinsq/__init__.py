"""Ensemble Q-learning over synthetic co-link environments."""

from ._core import (
    ArgumentError,
    ConfigError,
    CoverageError,
    Error,
    IndexError,
    InvariantError,
    Mdp,
    SizeError,
    ape,
    bellman_error_norm,
    build_colink,
    closed_form_weights,
    config_hash,
    first_passage_bound,
    distance_correlation,
    make_cousins,
    optimal_q,
    policy_evaluation,
    random_mdp,
    run_baseline,
    run_config,
    run_esql,
    value_iteration,
    variance_bounds,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "ConfigError",
    "CoverageError",
    "Error",
    "IndexError",
    "InvariantError",
    "Mdp",
    "SizeError",
    "ape",
    "bellman_error_norm",
    "build_colink",
    "closed_form_weights",
    "config_hash",
    "first_passage_bound",
    "distance_correlation",
    "make_cousins",
    "optimal_q",
    "policy_evaluation",
    "random_mdp",
    "run_baseline",
    "run_config",
    "run_esql",
    "value_iteration",
    "variance_bounds",
]
