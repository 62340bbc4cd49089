"""
Error hierarchy for the POI recommender.

Every failure raised by library code derives from PoiRecommenderError so the
CLI can report it uniformly.
"""

from typing import Optional


class PoiRecommenderError(Exception):
    """Base class for all recommender errors."""


class InvalidParameterError(PoiRecommenderError, ValueError):
    """A parameter is outside its documented range."""


class ContractViolationError(PoiRecommenderError, ValueError):
    """A caller broke a precondition the callee refuses to repair."""


class ParseError(PoiRecommenderError):
    """Malformed input file."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DomainError(PoiRecommenderError, ValueError):
    """A POI id falls outside the POI domain."""


class ProtocolError(PoiRecommenderError):
    """Client reports do not agree on shape or content."""


class SchedulingError(PoiRecommenderError):
    """A training step was scheduled with nothing to process."""


class NumericalError(PoiRecommenderError, ArithmeticError):
    """A linear system could not be solved."""


class DivergenceError(NumericalError):
    """Latent factors left the finite range."""


class BudgetExceededError(PoiRecommenderError):
    """A client tried to spend more privacy budget than it owns."""


class EvaluationError(PoiRecommenderError):
    """Recommendations and held-out items do not line up."""


class ConfigError(PoiRecommenderError):
    """Invalid experiment configuration."""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        if key:
            message = f"{key}: {message}"
        super().__init__(message)
