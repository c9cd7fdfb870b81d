"""Exception hierarchy shared by all modules."""


class ChoiMargError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ChoiMargError):
    """Input data failed a structural or numerical validity check."""


class LabelCollision(ValidationError):
    pass


class LabelNotFound(ValidationError):
    pass


class LabelMismatch(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class InvalidChannel(ValidationError):
    pass


class InvalidScenario(ValidationError):
    pass


class InvalidWitness(ValidationError):
    pass


class CapacityExceeded(ValidationError):
    pass


class ParseError(ValidationError):
    """Malformed input file; ``lineno`` is 1-based (0 when unknown)."""

    def __init__(self, message, lineno=0):
        self.lineno = lineno
        if lineno:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class NotWellDefined(ChoiMargError):
    """A global channel signals into the requested output, so no marginal exists.

    ``residual`` is the Frobenius norm of the failed factorization.
    """

    def __init__(self, message, residual):
        self.residual = float(residual)
        super().__init__(f"{message} (residual {self.residual:.3e})")


class LocallyIncompatible(ChoiMargError):
    pass


class SolverError(ChoiMargError):
    """The conic solver did not reach an optimal solution."""


class InfeasibleLinearSystem(SolverError):
    pass


class DecompositionFailure(ChoiMargError):
    pass


class NoAdvantagePossible(ChoiMargError):
    pass
