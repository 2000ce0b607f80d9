"""Reduction of the Newton system to the augmented system or the normal
equations, regularisation, system choice, and direction recovery.

Both reduced systems carry static diagonal shifts: the augmented matrix is

    [ -(Theta^{-1} + rho_s I)   A^T        ]
    [ A                         delta_s I  ]

and the normal equations matrix is A (Theta^{-1} + rho_s I)^{-1} A^T +
delta_s I.  The regularised Theta is used consistently when reducing the
right-hand side and when recovering dx, so the system actually solved is
exactly the regularised one.  Dynamic (per-pivot) perturbations are
applied inside the factorisation and recorded there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .symbolic import SymbolicFactorization, lower_csc, symbolic
from .ordering import fill_reducing_ordering

AUGMENTED = "augmented"
NORMAL_EQUATIONS = "normal_equations"


@dataclass
class RegularizationParams:
    """Static shifts; the dynamic ledger lives on the factorisation."""

    static_primal: float = 1e-10  # rho_s, (1,1) block, applied negatively
    static_dual: float = 1e-10    # delta_s, (2,2) block / NE diagonal

    def scaled(self, factor: float) -> "RegularizationParams":
        return RegularizationParams(self.static_primal * factor,
                                    self.static_dual * factor)


def compute_theta(point, lp) -> np.ndarray:
    """Diagonal Theta^{-1}: zl/xl + zu/xu with absent-bound terms omitted.

    Free columns get exactly zero; no clipping is applied (regularisation
    handles the extremes).
    """
    inv_theta = np.zeros(lp.num_cols)
    hl, hu = lp.has_lower, lp.has_upper
    with np.errstate(over="ignore"):
        inv_theta[hl] += point.zl[hl] / point.xl[hl]
        inv_theta[hu] += point.zu[hu] / point.xu[hu]
    # overflow guard only (a variable numerically pinned at its bound);
    # no algorithmic clipping of extreme values is performed
    return np.minimum(inv_theta, 1e300)


def regularized_theta(inv_theta: np.ndarray, reg: RegularizationParams) -> np.ndarray:
    """Theta~ = (Theta^{-1} + rho_s)^{-1}, the diagonal the NE path uses."""
    return 1.0 / (inv_theta + reg.static_primal)


class KktSystem:
    """A reduced system bound (lazily) to its symbolic factorisation."""

    def __init__(self, kind: str, lower: sp.csc_matrix, sign_tags: np.ndarray,
                 symb: SymbolicFactorization | None = None):
        self.kind = kind
        self.lower = lower
        self.sign_tags = np.asarray(sign_tags, dtype=np.int8)
        self.symbolic = symb
        self._full = None

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def full_matrix(self) -> sp.csc_matrix:
        if self._full is None:
            d = sp.diags(self.lower.diagonal())
            self._full = (self.lower + self.lower.T - d).tocsc()
        return self._full


class AugmentedBuilder:
    """Forms the augmented system; structure fixed, diagonal refreshed."""

    def __init__(self, A: sp.csc_matrix):
        A = sp.csc_matrix(A)
        A.sort_indices()
        m, n = A.shape
        self.m, self.n = m, n
        indptr = [0]
        indices = []
        data = []
        self.diag_pos = np.empty(n + m, dtype=np.int64)
        for j in range(n):
            self.diag_pos[j] = len(indices)
            indices.append(j)
            data.append(0.0)
            rows = A.indices[A.indptr[j]:A.indptr[j + 1]]
            vals = A.data[A.indptr[j]:A.indptr[j + 1]]
            indices.extend(n + rows)
            data.extend(vals)
            indptr.append(len(indices))
        for i in range(m):
            self.diag_pos[n + i] = len(indices)
            indices.append(n + i)
            data.append(0.0)
            indptr.append(len(indices))
        self.lower = sp.csc_matrix(
            (np.array(data), np.array(indices, dtype=np.int32),
             np.array(indptr, dtype=np.int32)),
            shape=(n + m, n + m))
        self.sign_tags = np.concatenate([
            -np.ones(n, dtype=np.int8), np.ones(m, dtype=np.int8)])

    def build(self, inv_theta: np.ndarray, reg: RegularizationParams) -> KktSystem:
        data = self.lower.data.copy()
        data[self.diag_pos[:self.n]] = -(inv_theta + reg.static_primal)
        data[self.diag_pos[self.n:]] = reg.static_dual
        lower = sp.csc_matrix(
            (data, self.lower.indices, self.lower.indptr), shape=self.lower.shape)
        return KktSystem(AUGMENTED, lower, self.sign_tags)


class NormalEquationsBuilder:
    """Forms A Theta~ A^T + delta_s I without ever re-deriving structure.

    Construction walks the normal-equations pattern column by column and
    aborts as soon as the accumulated nonzero count exceeds the threshold
    (use :func:`try_build` / :func:`form_normal_equations`); per-iteration
    value refreshes then reduce to one bincount over precomputed cliques.
    """

    def __init__(self, A: sp.csc_matrix):
        self.A = sp.csc_matrix(A)
        self.A.sort_indices()
        self.m, self.n = self.A.shape
        self.pattern_ready = False

    def build_pattern(self, abort_threshold: float) -> bool:
        """Return False (aborted) once the nnz count passes the threshold."""
        A = self.A
        m = self.m
        csr = A.tocsr()
        cols_of_row = [csr.indices[csr.indptr[i]:csr.indptr[i + 1]] for i in range(m)]
        rows_of_col = [A.indices[A.indptr[j]:A.indptr[j + 1]] for j in range(A.shape[1])]
        indptr = np.zeros(m + 1, dtype=np.int64)
        col_indices = []
        total = 0
        for i in range(m):
            pieces = [rows_of_col[j] for j in cols_of_row[i]]
            rows = np.unique(np.concatenate(pieces)) if pieces else np.empty(0, np.int64)
            rows = rows[rows >= i]
            if rows.size == 0 or rows[0] != i:
                rows = np.concatenate([[i], rows])  # explicit diagonal
            total += rows.size
            if total > abort_threshold:
                return False
            col_indices.append(rows.astype(np.int64))
            indptr[i + 1] = total
        self.indptr = indptr
        self.indices = np.concatenate(col_indices) if col_indices else np.empty(0, np.int64)
        self.nnz = int(total)
        self.diag_pos = indptr[:-1].copy()

        # clique recipe: contribution A_aj * A_bj * theta_j at entry (a, b)
        tgt, coef, tcol = [], [], []
        for j in range(A.shape[1]):
            rows = rows_of_col[j]
            vals = A.data[A.indptr[j]:A.indptr[j + 1]]
            for k in range(len(rows)):
                b = rows[k]
                seg = self.indices[self.indptr[b]:self.indptr[b + 1]]
                pos = self.indptr[b] + np.searchsorted(seg, rows[k:])
                tgt.append(pos)
                coef.append(vals[k] * vals[k:])
                tcol.append(np.full(len(rows) - k, j, dtype=np.int64))
        self.target = np.concatenate(tgt) if tgt else np.empty(0, np.int64)
        self.coeff = np.concatenate(coef) if coef else np.empty(0)
        self.theta_col = np.concatenate(tcol) if tcol else np.empty(0, np.int64)
        self.pattern_ready = True
        return True

    def build(self, theta_reg: np.ndarray, reg: RegularizationParams) -> KktSystem:
        assert self.pattern_ready
        data = np.bincount(self.target, weights=self.coeff * theta_reg[self.theta_col],
                           minlength=self.nnz)
        data[self.diag_pos] += reg.static_dual
        lower = sp.csc_matrix((data, self.indices.astype(np.int32),
                               self.indptr.astype(np.int32)), shape=(self.m, self.m))
        return KktSystem(NORMAL_EQUATIONS, lower,
                         np.ones(self.m, dtype=np.int8))


def form_augmented(A: sp.spmatrix, inv_theta: np.ndarray,
                   reg: RegularizationParams) -> KktSystem:
    """One-shot augmented system (quasi-definite by construction)."""
    return AugmentedBuilder(sp.csc_matrix(A)).build(inv_theta, reg)


def form_normal_equations(A: sp.spmatrix, inv_theta: np.ndarray,
                          reg: RegularizationParams,
                          abort_threshold: float = np.inf) -> KktSystem | None:
    """One-shot normal equations; None means forming was aborted because
    the nonzero count passed the threshold."""
    builder = NormalEquationsBuilder(sp.csc_matrix(A))
    if not builder.build_pattern(abort_threshold):
        return None
    return builder.build(regularized_theta(inv_theta, reg), reg)


@dataclass
class SystemPlan:
    """Which reduction to use, with its reusable builder and symbolics."""

    kind: str
    aug_builder: AugmentedBuilder
    aug_symbolic: SymbolicFactorization
    ne_builder: NormalEquationsBuilder | None = None
    ne_symbolic: SymbolicFactorization | None = None

    @property
    def symbolic(self) -> SymbolicFactorization:
        return self.aug_symbolic if self.kind == AUGMENTED else self.ne_symbolic

    def build(self, inv_theta: np.ndarray, reg: RegularizationParams) -> KktSystem:
        if self.kind == AUGMENTED:
            kkt = self.aug_builder.build(inv_theta, reg)
        else:
            kkt = self.ne_builder.build(regularized_theta(inv_theta, reg), reg)
        kkt.symbolic = self.symbolic
        return kkt


def choose_system(lp, forced: str = "auto") -> SystemPlan:
    """Decide augmented vs normal equations for this LP.

    The augmented symbolic factorisation always runs first; its factor
    nonzero count is the abort threshold for forming the normal equations.
    Free variables force the augmented system (their Theta^{-1} vanishes
    and only the primal regularisation keeps the (1,1) block definite).
    Ties go to the normal equations (all-positive pivots, cheaper solves).
    """
    A = lp.A
    aug_builder = AugmentedBuilder(A)
    aug_perm = fill_reducing_ordering(aug_builder.lower)
    aug_symb = symbolic(aug_builder.lower, aug_perm)
    plan = SystemPlan(AUGMENTED, aug_builder, aug_symb)

    if forced == AUGMENTED:
        return plan
    ne_builder = NormalEquationsBuilder(A)
    if forced == NORMAL_EQUATIONS:
        ne_builder.build_pattern(np.inf)
        plan.ne_builder = ne_builder
        plan.ne_symbolic = _ne_symbolic(ne_builder)
        plan.kind = NORMAL_EQUATIONS
        return plan

    if lp.free_cols.any():
        return plan
    if not ne_builder.build_pattern(abort_threshold=aug_symb.nnz_l):
        return plan  # forming aborted: augmented wins outright
    ne_symb = _ne_symbolic(ne_builder)
    plan.ne_builder = ne_builder
    plan.ne_symbolic = ne_symb
    if ne_symb.flops <= aug_symb.flops:
        plan.kind = NORMAL_EQUATIONS
    return plan


def _ne_symbolic(builder: NormalEquationsBuilder) -> SymbolicFactorization:
    pattern = sp.csc_matrix(
        (np.ones_like(builder.indices, dtype=float),
         builder.indices.astype(np.int32), builder.indptr.astype(np.int32)),
        shape=(builder.m, builder.m))
    perm = fill_reducing_ordering(pattern)
    return symbolic(pattern, perm)


@dataclass
class Direction:
    dx: np.ndarray
    dy: np.ndarray
    dxl: np.ndarray
    dxu: np.ndarray
    dzl: np.ndarray
    dzu: np.ndarray

    def __add__(self, other: "Direction") -> "Direction":
        return Direction(self.dx + other.dx, self.dy + other.dy,
                         self.dxl + other.dxl, self.dxu + other.dxu,
                         self.dzl + other.dzl, self.dzu + other.dzu)


def reduce_rhs(res, point, lp, kind: str,
               theta_reg: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand side of the reduced system, plus r7 for the recovery.

    Augmented: [r7; r1] with
    r7 = r4 - Xl^{-1}(r5 + Zl r2) + Xu^{-1}(r6 - Zu r3); absent-bound terms
    are skipped.  Normal equations: r8 = r1 + A Theta~ r7 with the
    regularised Theta~ for consistency with the regularised matrix.
    """
    hl, hu = lp.has_lower, lp.has_upper
    r7 = res.r4.copy()
    r7[hl] -= (res.r5[hl] + point.zl[hl] * res.r2[hl]) / point.xl[hl]
    r7[hu] += (res.r6[hu] - point.zu[hu] * res.r3[hu]) / point.xu[hu]
    if kind == AUGMENTED:
        return np.concatenate([r7, res.r1]), r7
    return res.r1 + lp.A @ (theta_reg * r7), r7


def recover_direction(kind: str, partial: np.ndarray, res, point, lp,
                      theta_reg: np.ndarray | None = None,
                      r7: np.ndarray | None = None) -> Direction:
    """Expand the reduced solution into the full Newton direction."""
    n, m = lp.num_cols, lp.num_rows
    if kind == AUGMENTED:
        dx = partial[:n]
        dy = partial[n:]
    else:
        dy = partial
        dx = theta_reg * (lp.A.T @ dy - r7)

    hl, hu = lp.has_lower, lp.has_upper
    dxl = np.zeros(n)
    dxu = np.zeros(n)
    dzl = np.zeros(n)
    dzu = np.zeros(n)
    dxl[hl] = dx[hl] - res.r2[hl]
    dxu[hu] = res.r3[hu] - dx[hu]
    dzl[hl] = (res.r5[hl] - point.zl[hl] * dxl[hl]) / point.xl[hl]
    dzu[hu] = (res.r6[hu] - point.zu[hu] * dxu[hu]) / point.xu[hu]
    return Direction(dx, dy, dxl, dxu, dzl, dzu)
