"""Exception hierarchy.

Every error raised by this package derives from :class:`QGaussError`.
Errors are split into two broad groups so the command line tool can map
them onto exit codes: configuration problems (bad parameters, impossible
grids) and numeric failures (estimation or factorization breakdowns).
"""


class QGaussError(Exception):
    """Base class for all package errors."""


# -- configuration / validation -------------------------------------------

class ConfigError(QGaussError):
    """Malformed or inconsistent user configuration."""


class GridTooLarge(ConfigError):
    """Requested grid exceeds the point-count cap."""


class KernelParameterOutOfRange(ConfigError):
    """Covariance kernel parameter outside its admissible range."""


class DimensionMismatch(ConfigError):
    """Array shape incompatible with the grid or kernel dimension."""


class InfeasibleConstraints(ConfigError):
    """Constraint set of an oracle problem is empty."""


# -- numeric failures ------------------------------------------------------

class NumericError(QGaussError):
    """Base class for runtime numeric failures."""


class FactorizationFailure(NumericError):
    """Covariance matrix could not be factored as PSD."""


class QuadratureResolutionTooCoarse(NumericError):
    """Quadrature refinement failed to reach the requested tolerance."""


class DegenerateEnsemble(NumericError):
    """Sampled ensemble carries no usable information."""


class NoUsableEntries(NumericError):
    """Small-ball table has no entries with probability in ]0, 1[."""


class OutOfTableRange(NumericError):
    """Requested rate falls outside the invertible range of a table."""


class InsufficientData(NumericError):
    """Too few usable points for the requested fit."""


class IllConditionedFit(NumericError):
    """Least-squares design matrix is numerically singular."""


class DomainError(NumericError):
    """Function argument outside its mathematical domain."""


class ResolutionExceeded(NumericError):
    """Iterative construction exceeded its resource budget."""


class MassUnreachable(NumericError):
    """No sub-collection of atoms reaches the requested mass."""
