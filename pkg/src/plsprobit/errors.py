"""Exception types raised by the estimation pipeline.

The split matters for callers: data problems and configuration mistakes are
user-fixable, while numerical failures signal that a particular parameter
value (usually a trial point of the outer optimizer) cannot be evaluated.
"""


class PLSProbitError(Exception):
    """Base class for all package errors."""


class DataError(PLSProbitError):
    """Input data violates the expected schema or rank conditions."""


class ConfigurationError(PLSProbitError):
    """Invalid configuration value (bounds, counts, flags)."""


class NumericalError(PLSProbitError):
    """A numerical operation failed (singular system, NaN criterion)."""


class OutOfSupportError(PLSProbitError):
    """A kernel-weighted quantity was requested where all weights vanish."""


class DegenerateInformationError(NumericalError):
    """The scoring denominator underflowed to zero."""


class DivergenceError(PLSProbitError):
    """The profiled score has no finite root (separated responses)."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class FitError(PLSProbitError):
    """No optimizer start produced a finite criterion value."""


class CovarianceSingularError(NumericalError):
    """The moment-derivative matrix is numerically singular."""


class HarnessError(PLSProbitError):
    """Too many replication failures for summaries to be meaningful."""
