"""Exception types shared across the package."""


class LavlabError(Exception):
    """Base class for all errors raised by lavlab."""


class ParameterError(LavlabError, ValueError):
    """A parameter lies outside its admissible range."""


class DomainError(LavlabError, ValueError):
    """A point lies outside the reference configuration."""


class SingularInputError(LavlabError, ValueError):
    """The input matrix or singular values are degenerate (det <= 0, zero value)."""


class ConstraintError(ParameterError):
    """Exponent constraints of a deformation family are violated or infeasible."""


class NumericalError(LavlabError, RuntimeError):
    """An inner numerical routine failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
