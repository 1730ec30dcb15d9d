"""Exception hierarchy shared by every module."""


class SecondOrderError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(SecondOrderError, ValueError):
    pass


class InvalidInputError(SecondOrderError, ValueError):
    pass


class DomainError(SecondOrderError, ValueError):
    """Argument lies outside the analytic domain of a transform."""


class NearDiagonalError(DomainError):
    """Closed-form G2 evaluated too close to the removable diagonal z = w."""


class NearPoleError(DomainError):
    pass


class CapacityError(SecondOrderError, ValueError):
    """Combinatorial enumeration exceeds the configured cap."""


class ConfigurationError(SecondOrderError, ValueError):
    pass


class NumericFailure(SecondOrderError, ArithmeticError):
    """A numerical kernel did not converge."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations
