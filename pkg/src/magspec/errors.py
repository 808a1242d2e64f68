"""Exception hierarchy shared by all modules."""


class MagspecError(Exception):
    """Base class for every error raised by :mod:`magspec`."""


class RankError(MagspecError):
    """A lattice basis (or matrix) is singular to working precision."""


class DomainError(MagspecError, ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeError(MagspecError, ValueError):
    """Dimensions of the arguments do not agree."""


class UnsupportedError(MagspecError):
    """The request is valid but outside what this implementation handles."""


class DataError(MagspecError, ValueError):
    """Input data (e.g. a ground state table) is malformed or implausible."""


class InconsistentSpectrumError(DataError):
    """Spectral data does not come from any flat metric."""


class InvalidGramError(MagspecError, ValueError):
    """A Gram matrix violates the Riemann relations."""


class DegenerateError(MagspecError):
    """A block that must be invertible is singular or badly conditioned."""


class ConvergenceError(MagspecError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
