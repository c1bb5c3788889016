"""Exception hierarchy shared by every module of the package."""


class ProductChainError(Exception):
    """Base class for all errors raised by ``product_chain``."""


class DimensionMismatch(ProductChainError, ValueError):
    pass


class NonPositiveMeasure(ProductChainError, ValueError):
    pass


class NotStationary(ProductChainError, ValueError):
    """A supplied measure fails the stationarity check for its generator."""


class Reducible(ProductChainError):
    pass


class NumericalFailure(ProductChainError):
    pass


class NonPositiveScale(ProductChainError, ValueError):
    pass


class IndexMismatch(ProductChainError, ValueError):
    """The two generator families are not indexed by each other's spaces."""


class ZeroDiagonal(ProductChainError, ValueError):
    pass


class NegativeRate(ProductChainError):
    """A closing rate through a transitional state would have to be negative."""


class WrongMode(ProductChainError, ValueError):
    pass


class RecursionImbalance(ProductChainError):
    """A flux balance that must hold by construction is violated beyond tolerance."""


class AbsorbingState(ProductChainError):
    pass


class NonFiniteRate(ProductChainError, ValueError):
    pass


class ConfigError(ProductChainError, ValueError):
    pass


class FormatError(ProductChainError, ValueError):
    """Malformed family or chain text file."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
