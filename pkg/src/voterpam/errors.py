"""Exception and warning types raised across the package."""
from __future__ import annotations


class VoterPamError(Exception):
    """Base class for package errors."""


class InvalidDimension(VoterPamError, ValueError):
    pass


class NonConvergedQuadrature(VoterPamError, ArithmeticError):
    pass


class RecurrentKernel(VoterPamError, ValueError):
    """Green integral diverges (recurrent walk)."""


class NotStronglyTransient(VoterPamError, ValueError):
    """Second Green moment diverges."""


class EmptyBox(VoterPamError, ValueError):
    pass


class ZeroHits(VoterPamError):
    """No replica realised the event; carries a one-sided upper bound."""

    def __init__(self, message, replicas=0, upper=None):
        super().__init__(message)
        self.replicas = replicas
        self.upper = upper


class WindowViolation(VoterPamError):
    """Raised when every replica left the safe torus window."""


class NonConvergent(VoterPamError, ArithmeticError):
    pass


class DomainError(VoterPamError, ValueError):
    pass


class NonPositiveResult(VoterPamError, ArithmeticError):
    pass


class DimensionTooLow(VoterPamError, ValueError):
    pass


class ConfigError(VoterPamError, ValueError):
    pass


class ReproducibilityError(VoterPamError):
    pass


class PredicateFailure(VoterPamError, AssertionError):
    """A finite-t exact statement (sandwich or monotonicity) failed."""


class HeavyTail(UserWarning):
    """A single replica carries a large share of the weight sum."""


class AsymptoticCheck(UserWarning):
    """A one-sided check of an asymptotic statement failed at finite t."""
