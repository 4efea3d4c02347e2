"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """An argument lies outside the documented domain of an operation."""


class PreconditionError(ValueError):
    """A mathematical hypothesis of a bound is not met by the input."""


class DomainError(ValueError):
    """A thermodynamic quantity was evaluated outside its domain (e.g. mu >= E1)."""


class TruncationError(RuntimeError):
    """The computed part of a spectrum cannot hold the requested density."""


class NumericalFailure(RuntimeError):
    """An iterative routine did not converge.

    ``detail`` carries whatever the routine had when it gave up (a bracket,
    two disagreeing quadrature values, ...).
    """

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail
