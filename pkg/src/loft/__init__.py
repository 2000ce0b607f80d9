"""loft: a factorisation-based primal-dual interior point LP solver.

The pipeline: read or build a :class:`UserLp`, Curtis-Reid scale it and
convert to the internal bounded form with :func:`to_internal`, then
:func:`run` the interior point method.  The linear algebra underneath is a
regularised multifrontal LDL^T of either the augmented system or the
normal equations, chosen automatically.
"""

from .errors import FactorizationBreakdown, ModelError, MpsError, SolverError
from .ipm import IterationPoint, SolverOptions, SolveReport, run
from .model import (
    InternalLp,
    Sense,
    Status,
    UserLp,
    UserSolution,
    objective_values,
    recover_user_solution,
    to_internal,
)
from .mps import read_mps
from .scaling import ScalingFactors, curtis_reid

__version__ = "0.1.0"

__all__ = [
    "FactorizationBreakdown", "ModelError", "MpsError", "SolverError",
    "IterationPoint", "SolverOptions", "SolveReport", "run",
    "InternalLp", "Sense", "Status", "UserLp", "UserSolution",
    "objective_values", "recover_user_solution", "to_internal",
    "read_mps", "ScalingFactors", "curtis_reid", "solve_mps",
]


def solve_mps(path, options=None):
    """Convenience: read an MPS file and solve it."""
    user = read_mps(path)
    lp = to_internal(user)
    return run(lp, options)
