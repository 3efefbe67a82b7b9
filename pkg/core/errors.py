import logging
from typing import Dict, List, Optional, Type

logger = logging.getLogger(__name__)

__all__ = (
    "RegrowthError",
    "ConfigError",
    "AssumptionViolation",
    "NumericError",
    "NonStochasticRow",
    "ReducibleChain",
    "DomainError",
    "NonFiniteIntegrand",
    "NumericUnderflow",
    "InfiniteMoment",
    "GridMismatch",
    "InvalidValueTag",
    "InfeasiblePolicy",
    "DegenerateMass",
    "BoundaryPolicy",
    "EmptySample",
    "MissingArtifact",
)


class RegrowthError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 3
    default_msg = "Generic Error"

    def __init__(self, message: Optional[str] = None, details: Optional[Dict[str, List[str]]] = None):
        self.details = details or {"__all__": [message or self.default_msg]}
        super().__init__(message or self.default_msg)

    def itemize(self) -> List[str]:
        lines = []
        for field, problems in self.details.items():
            for problem in problems:
                lines.append(problem if field == "__all__" else f"{field}: {problem}")
        return lines


class ConfigError(RegrowthError):
    exit_code = 1
    default_msg = "Invalid configuration"


class AssumptionViolation(RegrowthError):
    exit_code = 2
    default_msg = "Model assumptions violated"


class NumericError(RegrowthError):
    exit_code = 3
    default_msg = "Numeric failure"


class NonStochasticRow(ConfigError):
    default_msg = "Transition matrix row is not a probability vector"


class ReducibleChain(NumericError):
    default_msg = "Regime chain is reducible; stationary distribution is not unique"


class DomainError(NumericError):
    default_msg = "Argument outside the function domain"


class NonFiniteIntegrand(NumericError):
    default_msg = "Integrand is not finite at a quadrature node"


class NumericUnderflow(NumericError):
    default_msg = "Certainty equivalent underflowed"


class InfiniteMoment(NumericError):
    default_msg = "Shock moment is infinite"


class GridMismatch(NumericError):
    default_msg = "Fields are defined on different grids"


class InvalidValueTag(NumericError):
    default_msg = "Field is not a valid value function"


class InfeasiblePolicy(NumericError):
    default_msg = "Policy leaves the feasible set [0, x]"


class DegenerateMass(NumericError):
    default_msg = "Distorted measure has no mass"


class BoundaryPolicy(NumericError):
    default_msg = "Policy is at a boundary of [0, x]"


class EmptySample(NumericError):
    default_msg = "No samples after burn-in"


class MissingArtifact(ConfigError):
    default_msg = "Required artifact is missing"


def _raise_error(
    error_class: Type[RegrowthError],
    error_details: Optional[Dict[str, List[str]]] = None,
    custom_error: Optional[str] = None,
):
    message = custom_error
    if message is None and error_details:
        message = "; ".join(f"{k}: {', '.join(map(str, v))}" for k, v in error_details.items())
    raise error_class(message, details=error_details)

