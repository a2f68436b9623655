"""Exception hierarchy.

Every error raised on purpose by the toolkit derives from :class:`KreinError`.
The command line runner maps configuration, input and precondition errors
onto exit code 2 and the remaining ones (failed quadratures, fits, ...) onto 1.
"""


class KreinError(Exception):
    """Base class of all toolkit errors."""


class StructuralError(KreinError):
    """A Gram form is singular, non-Hermitian or too badly conditioned."""


class PreconditionError(KreinError):
    """Arguments are valid but a documented precondition does not hold."""


class ContourError(PreconditionError):
    """An integration contour passes too close to the spectrum."""


class ConsistencyError(KreinError):
    """A computed structure contradicts a certified property of the input."""


class ResolventSetError(PreconditionError):
    """The spectral parameter is not in the resolvent set.

    ``smallest_singular_value`` holds the smallest singular value of the
    matrix that failed to be invertible.
    """

    def __init__(self, msg, smallest_singular_value=None):
        super().__init__(msg)
        self.smallest_singular_value = smallest_singular_value


class SplittingError(PreconditionError):
    """``h0 - k1**2`` is not positive semi-definite."""


class ConditioningError(KreinError):
    """An eigenvector basis is too ill-conditioned for the requested path."""


class AccuracyError(KreinError):
    """A quadrature did not converge to the requested accuracy."""


class SamplingError(KreinError):
    """Too few admissible samples for a fit."""


class HorizonError(KreinError):
    """A time integral has not converged at the requested horizon."""


class ConfigError(KreinError):
    """Configuration file does not match the documented schema.

    ``line`` is the 1-based line number of the offending key when known.
    """

    def __init__(self, msg, line=None, field=None):
        super().__init__(msg)
        self.line = line
        self.field = field


class InputError(KreinError, ValueError):
    """An argument is outside its documented range."""
