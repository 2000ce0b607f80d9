"""Curtis-Reid row/column scaling.

Finds positive diagonal scalings R (rows) and C (columns) such that the
entries of ``diag(R) @ A @ diag(C)`` have log-magnitudes as close to zero
as possible, in the least-squares sense: minimise

    sum over nonzeros (log2|a_ij| + rho_i + gamma_j)^2

over the row/column log-factors (rho, gamma).  The minimiser is found by
conjugate gradients on the normal equations of this least-squares problem;
the normal-equations matrix is rank deficient (a constant can be shifted
between rho and gamma), and CG from a zero start converges to the
minimum-norm solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

CG_MAX_ITER = 100
CG_RTOL = 1e-6


@dataclass
class ScalingFactors:
    """Row and column multipliers, all finite and strictly positive."""

    row: np.ndarray
    col: np.ndarray
    converged: bool = True

    @staticmethod
    def identity(num_rows: int, num_cols: int) -> "ScalingFactors":
        return ScalingFactors(np.ones(num_rows), np.ones(num_cols))

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.row == 1.0) and np.all(self.col == 1.0))


def curtis_reid(matrix: sp.spmatrix) -> ScalingFactors:
    """Compute Curtis-Reid scaling factors for a sparse matrix.

    The matrix must have no empty rows or columns (validated upstream) and
    only finite entries.  If CG fails to reach the relative-residual
    tolerance within the iteration cap, identity factors are returned with
    ``converged=False``.
    """
    A = sp.coo_matrix(matrix)
    m, n = A.shape
    if A.nnz == 0:
        return ScalingFactors.identity(m, n)

    logs = np.log2(np.abs(A.data))
    rows = A.row
    cols = A.col

    # Normal equations of the incidence least-squares system:
    #   [diag(row_cnt)   N      ] [rho  ]   [-row_sum]
    #   [N^T             diag(col_cnt)] [gamma] = [-col_sum]
    # where N[i, j] counts nonzeros in position (i, j) (0 or 1 here).
    row_cnt = np.bincount(rows, minlength=m).astype(float)
    col_cnt = np.bincount(cols, minlength=n).astype(float)
    row_sum = np.bincount(rows, weights=logs, minlength=m)
    col_sum = np.bincount(cols, weights=logs, minlength=n)
    ones = np.ones_like(logs)
    N = sp.coo_matrix((ones, (rows, cols)), shape=(m, n)).tocsr()

    def matvec(v: np.ndarray) -> np.ndarray:
        rho, gamma = v[:m], v[m:]
        top = row_cnt * rho + N @ gamma
        bot = N.T @ rho + col_cnt * gamma
        return np.concatenate([top, bot])

    rhs = -np.concatenate([row_sum, col_sum])
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return ScalingFactors.identity(m, n)

    x = np.zeros(m + n)
    r = rhs.copy()
    p = r.copy()
    rs = float(r @ r)
    converged = False
    for _ in range(CG_MAX_ITER):
        if np.sqrt(rs) <= CG_RTOL * rhs_norm:
            converged = True
            break
        Ap = matvec(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            break
        alpha = rs / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    else:
        converged = np.sqrt(rs) <= CG_RTOL * rhs_norm

    if not converged:
        out = ScalingFactors.identity(m, n)
        out.converged = False
        return out

    return ScalingFactors(np.exp2(x[:m]), np.exp2(x[m:]))


def scale_matrix(matrix: sp.spmatrix, factors: ScalingFactors) -> sp.csc_matrix:
    """Return diag(R) @ A @ diag(C) as CSC."""
    A = sp.csc_matrix(matrix, copy=True)
    A = sp.diags(factors.row) @ A @ sp.diags(factors.col)
    return sp.csc_matrix(A)


def unscale_matrix(matrix: sp.spmatrix, factors: ScalingFactors) -> sp.csc_matrix:
    A = sp.csc_matrix(matrix, copy=True)
    A = sp.diags(1.0 / factors.row) @ A @ sp.diags(1.0 / factors.col)
    return sp.csc_matrix(A)


# Vector counterparts.  The scaled problem is
#   min (C c)^T x'  s.t.  (R A C) x' <=> (R b),  C^{-1} l <= x' <= C^{-1} u
# with x' = C^{-1} x, so a scaled-space solution x' maps back as x = C x'.

def scale_rhs(b: np.ndarray, factors: ScalingFactors) -> np.ndarray:
    return factors.row * b


def unscale_rhs(b: np.ndarray, factors: ScalingFactors) -> np.ndarray:
    return b / factors.row


def scale_obj(c: np.ndarray, factors: ScalingFactors) -> np.ndarray:
    return factors.col * c


def unscale_obj(c: np.ndarray, factors: ScalingFactors) -> np.ndarray:
    return c / factors.col


def scale_bounds(bound: np.ndarray, factors: ScalingFactors) -> np.ndarray:
    # inf / finite stays inf, so infinite bounds survive unchanged
    return bound / factors.col


def unscale_bounds(bound: np.ndarray, factors: ScalingFactors) -> np.ndarray:
    return bound * factors.col


def unscale_primal(x: np.ndarray, factors: ScalingFactors) -> np.ndarray:
    return factors.col * x


def unscale_dual_rows(y: np.ndarray, factors: ScalingFactors) -> np.ndarray:
    return factors.row * y


def unscale_dual_cols(z: np.ndarray, factors: ScalingFactors) -> np.ndarray:
    return z / factors.col
