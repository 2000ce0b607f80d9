"""LP model containers and conversion between user and internal forms.

The user form is

    min c'x   s.t.  A x {<=, =, >=} b,   l <= x <= u

(optionally with two-sided "ranged" rows).  The internal form used by the
interior point iterations is the bounded-variable equality form

    min c'x   s.t.  A x = b,   x - xl = l,  x + xu = u,  xl, xu >= 0

obtained by scaling the user problem and adding one slack column per
inequality row.  All slacks live in [0, up - lo): rows with a finite upper
row bound keep their sign, pure >= rows are negated first.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ModelError
from .scaling import (
    ScalingFactors,
    curtis_reid,
    scale_bounds,
    scale_matrix,
    scale_obj,
)

INF = np.inf


class Status(enum.Enum):
    OPTIMAL = "optimal"
    IMPRECISE = "imprecise"
    ITERATION_LIMIT = "iteration_limit"
    TIME_LIMIT = "time_limit"
    NUMERICAL_FAILURE = "numerical_failure"
    OUT_OF_MEMORY = "out_of_memory"


class Sense(enum.Enum):
    LE = "L"
    EQ = "E"
    GE = "G"


@dataclass
class UserLp:
    """An LP as stated by the user."""

    A: sp.csc_matrix
    senses: list
    rhs: np.ndarray
    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    ranges: np.ndarray | None = None  # RANGES value per row, nan if absent
    obj_offset: float = 0.0
    name: str = ""
    row_names: list = field(default_factory=list)
    col_names: list = field(default_factory=list)

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @property
    def num_cols(self) -> int:
        return self.A.shape[1]

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Canonical [lo, up] activity interval per row."""
        m = self.num_rows
        lo = np.full(m, -INF)
        up = np.full(m, INF)
        for i, s in enumerate(self.senses):
            b = self.rhs[i]
            if s == Sense.LE:
                up[i] = b
            elif s == Sense.GE:
                lo[i] = b
            else:
                lo[i] = up[i] = b
            if self.ranges is not None and np.isfinite(self.ranges[i]):
                r = self.ranges[i]
                if s == Sense.LE:
                    lo[i] = b - abs(r)
                elif s == Sense.GE:
                    up[i] = b + abs(r)
                else:  # E row: sign of r picks the side
                    if r >= 0:
                        up[i] = b + r
                    else:
                        lo[i] = b + r
        return lo, up

    def validate(self) -> None:
        m, n = self.A.shape
        if len(self.senses) != m or self.rhs.shape != (m,):
            raise ModelError("row data inconsistent with matrix dimensions")
        if self.c.shape != (n,) or self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ModelError("column data inconsistent with matrix dimensions")
        if np.isnan(self.A.data).any():
            raise ModelError("constraint matrix contains NaN")
        if not np.isfinite(self.A.data).all():
            raise ModelError("constraint matrix contains infinite entries")
        for v, what in ((self.rhs, "rhs"), (self.c, "objective")):
            if np.isnan(v).any() or np.isinf(v).any():
                raise ModelError(f"{what} contains NaN or infinite entries")
        if np.isnan(self.lower).any() or np.isnan(self.upper).any():
            raise ModelError("bounds contain NaN")
        bad = np.where(self.lower > self.upper)[0]
        if bad.size:
            raise ModelError(f"inconsistent bounds on column {bad[0]} "
                             f"(lower {self.lower[bad[0]]} > upper {self.upper[bad[0]]})")
        A = self.A.tocsc()
        col_nnz = np.diff(A.indptr)
        if (col_nnz == 0).any():
            j = int(np.where(col_nnz == 0)[0][0])
            name = self.col_names[j] if self.col_names else str(j)
            raise ModelError(f"column {name} has no constraint entries "
                             "(trivial cleanup is not performed; remove it first)")
        row_nnz = np.bincount(A.indices, minlength=m)
        if (row_nnz == 0).any():
            i = int(np.where(row_nnz == 0)[0][0])
            name = self.row_names[i] if self.row_names else str(i)
            raise ModelError(f"row {name} has no entries "
                             "(trivial cleanup is not performed; remove it first)")
        lo, up = self.row_bounds()
        if (lo > up).any():
            i = int(np.where(lo > up)[0][0])
            raise ModelError(f"row {i} has empty activity interval [{lo[i]}, {up[i]}]")


@dataclass
class SlackInfo:
    """How one inequality row was turned into an equality."""

    row: int
    sense: Sense
    negated: bool
    col: int  # index of the slack column in the internal matrix


@dataclass
class InternalLp:
    """Scaled bounded-variable form consumed by the IPM."""

    A: sp.csc_matrix
    b: np.ndarray
    c: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    has_lower: np.ndarray
    has_upper: np.ndarray
    slack_map: list
    factors: ScalingFactors
    col_scale: np.ndarray  # user quantity = col_scale * internal, length n
    row_scale: np.ndarray  # user dual = row_scale * internal, length m
    user: UserLp

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @property
    def num_cols(self) -> int:
        return self.A.shape[1]

    @property
    def free_cols(self) -> np.ndarray:
        return ~(self.has_lower | self.has_upper)

    @property
    def num_bounded(self) -> int:
        return int(self.has_lower.sum() + self.has_upper.sum())


@dataclass
class UserSolution:
    status: Status
    objective: float
    x: np.ndarray
    reduced_costs: np.ndarray
    row_activity: np.ndarray
    row_dual: np.ndarray
    iterations: int = 0


def to_internal(user: UserLp, factors: ScalingFactors | None = None) -> InternalLp:
    """Scale the user LP and add slack columns for inequality rows.

    Rows with a finite upper activity bound get ``a x + s = up`` with
    ``s in [0, up - lo]``; pure >= rows are negated so their slack also
    lives in [0, inf).  Equality rows are left untouched.
    """
    user.validate()
    m, n = user.A.shape
    if factors is None:
        factors = curtis_reid(user.A)

    c = scale_obj(user.c, factors)
    lower = scale_bounds(user.lower, factors)
    upper = scale_bounds(user.upper, factors)

    row_lo, row_up = user.row_bounds()
    b = np.empty(m)
    row_sign = np.ones(m)
    slack_map: list[SlackInfo] = []
    slack_rows: list[int] = []
    slack_upper: list[float] = []

    next_col = n
    for i, s in enumerate(user.senses):
        lo, up = row_lo[i], row_up[i]
        if lo == up:  # equality (including a ranged row of width zero)
            b[i] = factors.row[i] * lo
            continue
        negated = not np.isfinite(up)
        if negated:
            row_sign[i] = -1.0
            b[i] = -factors.row[i] * lo
            width = INF
        else:
            b[i] = factors.row[i] * up
            width = (up - lo) * factors.row[i] if np.isfinite(lo) else INF
        slack_map.append(SlackInfo(row=i, sense=s, negated=negated, col=next_col))
        slack_rows.append(i)
        slack_upper.append(width)
        next_col += 1

    A = sp.diags(row_sign) @ scale_matrix(user.A, factors)
    k = len(slack_rows)
    if k:
        S = sp.coo_matrix((np.ones(k), (np.array(slack_rows), np.arange(k))), shape=(m, k))
        A_full = sp.hstack([sp.csc_matrix(A), S], format="csc")
    else:
        A_full = sp.csc_matrix(A)
    A_full.sort_indices()

    lower = np.concatenate([lower, np.zeros(k)])
    upper = np.concatenate([upper, np.array(slack_upper)])
    c = np.concatenate([c, np.zeros(k)])

    col_scale = np.ones(n + k)
    col_scale[:n] = factors.col
    for info in slack_map:
        col_scale[info.col] = 1.0 / factors.row[info.row]

    return InternalLp(
        A=A_full,
        b=b,
        c=c,
        lower=lower,
        upper=upper,
        has_lower=np.isfinite(lower),
        has_upper=np.isfinite(upper),
        slack_map=slack_map,
        factors=factors,
        col_scale=col_scale,
        row_scale=factors.row.copy(),
        user=user,
    )


def recover_user_solution(point, lp: InternalLp, status: Status,
                          iterations: int = 0) -> UserSolution:
    """Unscale an iterate and report signs the user expects.

    Inequality-row slacks are read from the bound-gap variables (xl), and
    row duals from (zl, zu); the plain x and y entries can violate the
    sign the row sense implies by a rounding-level amount, the bound-gap
    variables cannot.
    """
    user = lp.user
    n_user = user.num_cols
    x_user = lp.col_scale[:n_user] * point.x[:n_user]
    reduced = (point.zl[:n_user] - point.zu[:n_user]) / lp.factors.col

    row_lo, row_up = user.row_bounds()
    activity = np.asarray(user.A @ x_user, float).ravel()
    dual = lp.row_scale * point.y
    for info in lp.slack_map:
        i, j = info.row, info.col
        slack_user = point.xl[j] / lp.row_scale[i]  # xl >= 0 always
        if info.negated:
            activity[i] = row_lo[i] + slack_user
            dual[i] = lp.row_scale[i] * point.zl[j]
        else:
            activity[i] = row_up[i] - slack_user
            dual[i] = lp.row_scale[i] * (-point.zl[j] + point.zu[j])

    objective = float(user.c @ x_user) + user.obj_offset
    return UserSolution(
        status=status,
        objective=objective,
        x=x_user,
        reduced_costs=reduced,
        row_activity=activity,
        row_dual=dual,
        iterations=iterations,
    )


def objective_values(point, lp: InternalLp) -> tuple[float, float]:
    """Primal and dual objective of the internal (scaled) problem.

    Terms belonging to infinite bounds are skipped; their multipliers are
    identically zero by construction.
    """
    f_p = float(lp.c @ point.x)
    f_d = float(lp.b @ point.y)
    if lp.has_lower.any():
        f_d += float(lp.lower[lp.has_lower] @ point.zl[lp.has_lower])
    if lp.has_upper.any():
        f_d -= float(lp.upper[lp.has_upper] @ point.zu[lp.has_upper])
    return f_p, f_d
