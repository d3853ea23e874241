"""Marginal and alternating grid search for tuning an MLP symbol detector."""

__version__ = "0.1.0"

from .grid import HyperparamGrid, HyperparamPoint, ParamAxis, campaign_grid, default_grid, initial_point
from .tuner import (
    BudgetExceeded,
    SearchConfig,
    SearchError,
    TrialResult,
    TuneReport,
    alternating_search,
    joint_search,
    marginal_search,
    random_search,
)
from .objective import DetectorObjective, SystemConfig, evaluate, fiber_system, fso_system, awgn_system

__all__ = [
    "__version__",
    "HyperparamGrid",
    "HyperparamPoint",
    "ParamAxis",
    "campaign_grid",
    "default_grid",
    "initial_point",
    "BudgetExceeded",
    "SearchConfig",
    "SearchError",
    "TrialResult",
    "TuneReport",
    "alternating_search",
    "joint_search",
    "marginal_search",
    "random_search",
    "DetectorObjective",
    "SystemConfig",
    "evaluate",
    "fiber_system",
    "fso_system",
    "awgn_system",
]
