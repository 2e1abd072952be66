"""
Exception hierarchy for the jamming RTP toolkit.

Errors that describe bad input also derive from ValueError so callers that
only know about ValueError keep working.
"""


class JammingError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(JammingError, ValueError):
    """Invalid rates, sizes, horizons or missing run parameters."""


class DomainError(JammingError, ValueError):
    """Argument outside the domain of an operation."""


class SingularSolveError(JammingError):
    """Stationary solve did not reach the residual tolerance."""


class ConvergenceBudgetError(SingularSolveError):
    """Power iteration ran out of sweeps before reaching its tolerance."""


class NormalizationError(JammingError, ValueError):
    """A probability measure was required but the input is unnormalized."""


class MassMismatchError(JammingError, ValueError):
    """Transport between measures of different total mass."""


class DiscretizationMismatchError(JammingError, ValueError):
    """Discretized measures do not share the same grid."""


class PoleError(JammingError, ValueError):
    """Moment generating function evaluated at or beyond its first pole."""


class AdmissibilityError(JammingError, ValueError):
    """Test function violates the boundary matching of the generator domain."""


class EventBudgetError(JammingError):
    """An open-ended simulation ran past the configured time budget."""
