"""Synchronous model-based Q-learning with switched-system diagnostics."""

from syncmbq.errors import (
    DiscountOutOfRange,
    EpsOutOfValidity,
    IndexOutOfRange,
    InvalidDimensions,
    InvalidRange,
    MdpValidationError,
    ModeMismatch,
    NegativeProbability,
    NonConvergence,
    RowNotStochastic,
    SandwichViolation,
    SizeMismatch,
)
from syncmbq.mdp import (
    TabularMdp,
    bellman_optimality,
    greedy_actions,
    greedy_select,
    inf_norm_distance,
    load_mdp,
    save_mdp,
    validate_mdp,
    value_iteration,
)

__version__ = "0.1.0"

__all__ = [
    "DiscountOutOfRange",
    "EpsOutOfValidity",
    "IndexOutOfRange",
    "InvalidDimensions",
    "InvalidRange",
    "MdpValidationError",
    "ModeMismatch",
    "NegativeProbability",
    "NonConvergence",
    "RowNotStochastic",
    "SandwichViolation",
    "SizeMismatch",
    "TabularMdp",
    "bellman_optimality",
    "greedy_actions",
    "greedy_select",
    "inf_norm_distance",
    "load_mdp",
    "save_mdp",
    "validate_mdp",
    "value_iteration",
]
