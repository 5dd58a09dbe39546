"""Safe predefined-time stabilization as a zero-sum game, with barrier-factored value networks."""
from .errors import (ConfigurationError, DomainError, NumericError, SafetyViolation,
                     UnsupportedOperation)
from .game import PredefinedTimeParams, StrategyParams, gamma_constant
from .problems import bounded_problem, make_problem, unbounded_problem

__all__ = ["ConfigurationError", "DomainError", "NumericError", "SafetyViolation",
           "UnsupportedOperation", "PredefinedTimeParams", "StrategyParams", "gamma_constant",
           "bounded_problem", "make_problem", "unbounded_problem"]
