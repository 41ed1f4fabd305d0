"""Exception hierarchy shared by all modules."""


class DynbcError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(DynbcError, ValueError):
    pass


class InvalidMeshError(DynbcError, ValueError):
    pass


class CoefficientViolationError(DynbcError, ValueError):
    pass


class ConfigurationError(DynbcError, ValueError):
    pass


class PreconditionError(DynbcError, ValueError):
    pass


class UnsupportedSizeError(DynbcError, ValueError):
    pass


class DegenerateStepsizeError(DynbcError, ValueError):
    pass


class SolverFailureError(DynbcError, RuntimeError):
    """Iterative solve did not reach the requested tolerance."""

    def __init__(self, message, residual=None, step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


class KrylovStagnationError(SolverFailureError):
    pass


class NewtonConvergenceError(SolverFailureError):
    pass
