"""
Exception hierarchy for the fusion engine.
"""

from typing import Optional, Sequence


class FusionEngineException(Exception):
    """Base exception for every engine failure."""

    pass


class InputDomainError(FusionEngineException, ValueError):
    """Raised when an argument lies outside its declared space or violates an invariant."""

    pass


class UnsupportedConfigurationError(FusionEngineException):
    """Raised when a requested configuration has no implementation path."""

    pass


class ScenarioFileError(FusionEngineException):
    """Raised when a scenario or manifest document is malformed."""

    pass


class NumericalDegeneracyError(FusionEngineException):
    """Raised when the posterior-mean denominator underflows for a feature vector."""

    def __init__(self, message: str, features: Optional[Sequence[float]] = None) -> None:
        super().__init__(message)
        self.features = None if features is None else [float(x) for x in features]
