"""Exception hierarchy shared by every module of the package."""


class LogContrastError(Exception):
    """Base class for all errors raised by :mod:`logcontrast`."""


class ShapeError(LogContrastError, ValueError):
    """Array dimensions disagree."""


class DomainError(LogContrastError, ValueError):
    """A compositional entry is not strictly positive."""


class SimplexError(DomainError):
    """A compositional row does not sum to one."""


class ParameterError(LogContrastError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class UsageError(LogContrastError, ValueError):
    """An operation was called without an input it needs."""


class TopologyError(LogContrastError, ValueError):
    """The machine count is incompatible with the chain topology."""


class NumericalError(LogContrastError, ArithmeticError):
    """A linear solve or factorization failed."""


class TuningError(LogContrastError, RuntimeError):
    """Every fit along a regularization path failed."""
