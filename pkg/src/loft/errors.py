"""Exception types shared across the solver."""


class SolverError(Exception):
    """Base class for all loft errors."""


class ModelError(SolverError):
    """The model is malformed or unsupported (bad bounds, empty rows, ...)."""


class MpsError(ModelError):
    """An MPS file could not be parsed."""


class FactorizationBreakdown(SolverError):
    """Numeric factorisation failed beyond what perturbation can fix."""

    def __init__(self, message: str, supernode: int = -1):
        super().__init__(message)
        self.supernode = supernode
