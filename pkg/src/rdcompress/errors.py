class RDCompressError(Exception):
    """Base class for library errors."""


class ShapeError(RDCompressError, ValueError):
    pass


class DomainError(RDCompressError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NumericError(RDCompressError, ArithmeticError):
    """A non-finite value appeared during evaluation."""
