"""Numeric multifrontal LDL^T factorisation, triangular solves and
iterative refinement.

The numeric phase walks the postordered supernode tree: each supernode
assembles its original matrix entries plus the Schur complements of its
children (children summed in ascending order, always), runs the blocked
dense partial factorisation, and stacks its own Schur complement for the
parent.  Pivoting is confined to supernode blocks, so the symbolic
structure is never invalidated; unacceptable pivots are perturbed instead
and every perturbation is recorded so the factored matrix is known
exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_triangular

from .errors import FactorizationBreakdown
from .frontal import FrontalMatrix, PivotParams, assemble_extend_add, partial_factor
from .symbolic import SymbolicFactorization

OMEGA_STOP = 1e-14  # refinement target for the componentwise backward error
DENOM_GUARD = 1e-300


@dataclass
class NumericFactorization:
    symbolic: SymbolicFactorization
    perm: np.ndarray            # effective new -> old, pivot swaps folded in
    label2final: np.ndarray     # symbolic label -> final position
    panels: list                # per snode: (q x w) unit-lower panel
    rows_below_final: list      # per snode: below rows in final positions
    d1_pos: np.ndarray          # final positions of 1x1 pivots
    d1_val: np.ndarray
    d2: list                    # (final position, a, b, c) per 2x2 pivot
    perturbation: np.ndarray    # diagonal E in original labels
    perturbation_entries: list  # (original label, amount)
    nnz_written: int
    num_2x2: int
    factor_time: float = 0.0

    @property
    def max_perturbation(self) -> float:
        return float(np.abs(self.perturbation).max()) if len(self.perturbation) else 0.0


def factorize(kkt, symb: SymbolicFactorization, params: PivotParams | None = None
              ) -> NumericFactorization:
    """Factor the matrix bound to `kkt` using the symbolic plan.

    `kkt` provides `.lower` (the canonical lower CSC whose data array the
    symbolic assembly maps index) and `.sign_tags`.  Raises
    :class:`FactorizationBreakdown` if a pivot cannot be saved by
    perturbation.
    """
    t0 = time.perf_counter()
    if params is None:
        params = PivotParams()
    n = symb.n
    data = kkt.lower.data
    tags_perm = np.asarray(kkt.sign_tags, dtype=np.int8)[symb.perm]
    norm1 = _matrix_norm1(kkt.lower)

    panels: list = []
    rows_below: list = []
    d1_pos: list = []
    d1_val: list = []
    d2: list = []
    perturb_entries: list = []
    perturbation = np.zeros(n)
    label2final = np.arange(n, dtype=np.int64)
    nnz_written = 0
    num_2x2 = 0

    stack: list = []
    num_s = symb.num_supernodes
    for s in range(num_s):
        first = int(symb.snode_first[s])
        w = symb.snode_width(s)
        below = symb.snode_rows_below[s]
        q = w + len(below)
        full_rows = symb.snode_full_rows(s)
        front = FrontalMatrix(q, w, tags_perm[full_rows])

        front.data[symb.asm_dst[s]] += data[symb.asm_src[s]]
        kids = symb.snode_children[s]
        if kids:
            popped = [stack.pop() for _ in kids]
            popped.reverse()  # ascending child order, fixed by contract
            for child_schur, rel in zip(popped, symb.child_rel[s]):
                assemble_extend_add(front, child_schur, rel)

        try:
            res = partial_factor(front, params, norm1)
        except FactorizationBreakdown as exc:
            raise FactorizationBreakdown(str(exc), supernode=s) from None

        # unit-lower panel in final pivot order
        panel = np.zeros((q, w))
        for t in range(w):
            col = front.col(t)
            panel[t + 1:, t] = col[1:]
        np.fill_diagonal(panel, 1.0)
        for pos, size, vals in res.dblocks:
            g = first + pos
            if size == 1:
                d1_pos.append(g)
                d1_val.append(vals[0])
            else:
                panel[pos + 1, pos] = 0.0  # slot held the 2x2 coupling
                d2.append((g, vals[0], vals[1], vals[2]))
        num_2x2 += res.num_2x2
        panels.append(panel)
        rows_below.append(below)
        nnz_written += w * (w + 1) // 2 + w * len(below)

        label2final[first + res.perm] = first + np.arange(w)
        for pos, amount in res.perturbations:
            orig = int(symb.perm[first + res.perm[pos]])
            perturbation[orig] += amount
            perturb_entries.append((orig, amount))

        if symb.snode_parent[s] >= 0:
            stack.append(res.schur)

    # final slot k holds the symbolic label l with label2final[l] == k
    inv = np.empty(n, dtype=np.int64)
    inv[label2final] = np.arange(n, dtype=np.int64)
    eff_perm = symb.perm[inv]

    rows_below_final = [label2final[rb] for rb in rows_below]

    return NumericFactorization(
        symbolic=symb, perm=eff_perm, label2final=label2final,
        panels=panels, rows_below_final=rows_below_final,
        d1_pos=np.asarray(d1_pos, dtype=np.int64), d1_val=np.asarray(d1_val),
        d2=d2, perturbation=perturbation, perturbation_entries=perturb_entries,
        nnz_written=nnz_written, num_2x2=num_2x2,
        factor_time=time.perf_counter() - t0)


def _matrix_norm1(lower: sp.csc_matrix) -> float:
    """1-norm of the symmetric matrix given by its lower triangle."""
    n = lower.shape[0]
    sums = np.zeros(n)
    absdata = np.abs(lower.data)
    cols = np.repeat(np.arange(n), np.diff(lower.indptr))
    np.add.at(sums, cols, absdata)
    off = lower.indices != cols
    np.add.at(sums, lower.indices[off], absdata[off])
    return float(sums.max()) if n else 0.0


def solve(fact: NumericFactorization, rhs: np.ndarray) -> np.ndarray:
    """Solve M d = rhs with the factorisation: forward, block-diagonal and
    backward passes around the permutation."""
    symb = fact.symbolic
    z = rhs[fact.perm].astype(float, copy=True)

    num_s = symb.num_supernodes
    for s in range(num_s):
        first = int(symb.snode_first[s])
        w = symb.snode_width(s)
        panel = fact.panels[s]
        zc = solve_triangular(panel[:w], z[first:first + w],
                              lower=True, unit_diagonal=True)
        z[first:first + w] = zc
        rbf = fact.rows_below_final[s]
        if len(rbf):
            z[rbf] -= panel[w:] @ zc

    if len(fact.d1_pos):
        z[fact.d1_pos] /= fact.d1_val
    for pos, a, b, c in fact.d2:
        det = a * c - b * b
        z0, z1 = z[pos], z[pos + 1]
        z[pos] = (c * z0 - b * z1) / det
        z[pos + 1] = (a * z1 - b * z0) / det

    for s in range(num_s - 1, -1, -1):
        first = int(symb.snode_first[s])
        w = symb.snode_width(s)
        panel = fact.panels[s]
        rbf = fact.rows_below_final[s]
        zc = z[first:first + w]
        if len(rbf):
            zc = zc - panel[w:].T @ z[rbf]
        z[first:first + w] = solve_triangular(
            panel[:w], zc, trans="T", lower=True, unit_diagonal=True)

    out = np.empty_like(z)
    out[fact.perm] = z
    return out


def full_symmetric(lower: sp.csc_matrix) -> sp.csc_matrix:
    """Expand a lower-triangular CSC into the full symmetric matrix."""
    d = sp.diags(lower.diagonal())
    return (lower + lower.T - d).tocsc()


def backward_error(M: sp.spmatrix, d: np.ndarray, f: np.ndarray,
                   guard: float = DENOM_GUARD) -> float:
    """Componentwise backward error of d as a solution of M d = f.

    Rows whose natural denominator |M||d| + |f| is tiny use the substitute
    |M||d| + ||d||_inf |M| e instead; rows where both vanish contribute 0.
    """
    M = sp.csc_matrix(M)
    absM = abs(M)
    resid = np.abs(M @ d - f)
    Md = absM @ np.abs(d)
    denom = Md + np.abs(f)
    sub = Md + np.linalg.norm(d, np.inf) * (absM @ np.ones(M.shape[1]))
    out = np.zeros_like(resid)
    use_main = denom > guard
    out[use_main] = resid[use_main] / denom[use_main]
    use_sub = ~use_main & (sub > guard)
    out[use_sub] = resid[use_sub] / sub[use_sub]
    return float(out.max()) if len(out) else 0.0


def refine(kkt, fact: NumericFactorization, rhs: np.ndarray, cap: int
           ) -> tuple[np.ndarray, list]:
    """Iterative refinement against the assembled (pre-perturbation) matrix.

    Returns the refined solution and the backward error after each pass
    (index 0 is the raw solve).  Stops once the error reaches the target,
    fails to halve, or a pass makes it worse (that pass is rolled back).
    """
    M = kkt.full_matrix()
    d = solve(fact, rhs)
    omegas = [backward_error(M, d, rhs)]
    for _ in range(cap):
        if omegas[-1] <= OMEGA_STOP:
            break
        r = rhs - M @ d
        d_new = d + solve(fact, r)
        omega_new = backward_error(M, d_new, rhs)
        if omega_new >= omegas[-1]:
            break  # no progress; keep the previous iterate
        d = d_new
        omegas.append(omega_new)
        if omega_new > omegas[-2] / 2:
            break
    return d, omegas
