"""Dense frontal-matrix kernels for the multifrontal factorisation.

A frontal matrix is stored packed by columns, lower triangle only
("column-packed" layout): column j of a front of order q occupies a
contiguous slice holding rows j..q-1.  Assembly and extend-add work on
this layout directly.  For the factorisation of a diagonal block the data
is converted to a hybrid layout in which each block of columns is stored
row-major with its upper-triangular part explicitly padded; the conversion
is a pure, bit-exact permutation of storage.

The pivoting kernel is a threshold Bunch-Kaufman cascade restricted to the
current diagonal block, with three safeguards layered on top:

* tiny pivots are lifted to delta * ||M||_1 with the sign of their row tag,
* every accepted 1x1 pivot is floored so that eliminating it cannot flip
  the sign of any remaining diagonal entry of the block,
* a static shift is added to every pivot after it has been chosen, so that
  cancellation during the elimination cannot erase it.

2x2 pivots are only formed across rows of opposite tag; a same-tag
candidate falls through to the lift rule.  All swaps stay inside the
block, so the symbolic structure is never invalidated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import FactorizationBreakdown

ALPHA_BK = (np.sqrt(17.0) + 1.0) / 8.0
DELTA_DEFAULT = 64.0 * np.finfo(float).eps
CATASTROPHE_FRACTION = 1e-2
BLOCK_WIDTHS = (32, 64, 128)


@dataclass
class PivotParams:
    alpha: float = ALPHA_BK
    delta: float = DELTA_DEFAULT
    static_neg: float = 1e-10  # magnitude added to tag -1 pivots
    static_pos: float = 1e-10  # magnitude added to tag +1 pivots

    def static_for(self, tag: int) -> float:
        return self.static_neg if tag < 0 else self.static_pos


def packed_size(order: int) -> int:
    return order * (order + 1) // 2


def packed_offset(order: int, col: int) -> int:
    return col * order - col * (col - 1) // 2


class FrontalMatrix:
    """Symmetric dense working matrix, column-packed lower triangle."""

    def __init__(self, order: int, npiv: int, tags: np.ndarray, block: int = 64):
        if not 1 <= npiv <= order:
            raise ValueError("npiv out of range")
        self.order = order
        self.npiv = npiv
        self.block = block
        self.tags = np.asarray(tags, dtype=np.int8).copy()
        self.data = np.zeros(packed_size(order))
        self.layout = "cols"

    def col(self, j: int) -> np.ndarray:
        """View of packed column j (rows j..order-1)."""
        off = packed_offset(self.order, j)
        return self.data[off:off + self.order - j]

    def full(self) -> np.ndarray:
        """Dense symmetric copy, for tests and small dense work."""
        q = self.order
        M = np.zeros((q, q))
        for j in range(q):
            cj = self.col(j)
            M[j:, j] = cj
            M[j, j:] = cj
        return M

    def norm1(self) -> float:
        """1-norm of the full symmetric front, accumulated from the packed
        lower triangle."""
        sums = np.zeros(self.order)
        for j in range(self.order):
            a = np.abs(self.col(j))
            sums[j] += a.sum()
            sums[j + 1:] += a[1:]
        return float(sums.max()) if self.order else 0.0


def _hybrid_map(order: int, block: int) -> np.ndarray:
    """For each packed-layout entry, its position in the hybrid layout.

    Hybrid layout: column blocks in order; within a block of columns
    [b0, b1) all rows b0..order-1 are stored row-major (width = b1 - b0),
    the upper-triangular corner is padding.
    """
    q, nb = order, block
    pos = np.empty(packed_size(q), dtype=np.int64)
    blk_off = 0
    col_block_off = {}
    for b0 in range(0, q, nb):
        b1 = min(b0 + nb, q)
        col_block_off[b0] = blk_off
        blk_off += (q - b0) * (b1 - b0)
    for j in range(q):
        b0 = (j // nb) * nb
        b1 = min(b0 + nb, q)
        wb = b1 - b0
        base = col_block_off[b0]
        rows = np.arange(j, q)
        pos[packed_offset(q, j):packed_offset(q, j) + q - j] = \
            base + (rows - b0) * wb + (j - b0)
    return pos


def hybrid_size(order: int, block: int) -> int:
    total = 0
    for b0 in range(0, order, block):
        b1 = min(b0 + block, order)
        total += (order - b0) * (b1 - b0)
    return total


def convert_layout(front: FrontalMatrix, to: str) -> None:
    """Switch the front storage between column-packed and hybrid layouts.

    The conversion permutes storage bit-exactly; hybrid padding slots are
    zero-filled.  Round-tripping restores the original array bitwise.
    """
    if to == front.layout:
        return
    pos = _hybrid_map(front.order, front.block)
    if to == "hybrid":
        out = np.zeros(hybrid_size(front.order, front.block))
        out[pos] = front.data
    elif to == "cols":
        out = front.data[pos]
    else:
        raise ValueError(f"unknown layout {to!r}")
    front.data = out
    front.layout = to


def assemble_extend_add(parent: FrontalMatrix, child_schur: np.ndarray,
                        rel: np.ndarray) -> None:
    """Add a child's packed Schur complement into the parent front.

    `rel` maps child row/column positions to parent front positions and is
    strictly increasing.  A mapping outside the parent is an internal
    invariant violation and fails fast.
    """
    r = len(rel)
    if r == 0:
        return
    assert parent.layout == "cols"
    assert rel[-1] < parent.order, "extend-add index out of range"
    q = parent.order
    k = 0
    for cc in range(r):
        pc = int(rel[cc])
        dst = packed_offset(q, pc) + rel[cc:] - pc
        parent.data[dst] += child_schur[k:k + r - cc]
        k += r - cc


@dataclass
class PartialFactorResult:
    pivot_sizes: np.ndarray        # 1 or 2 per pivot position (2,0 for a 2x2)
    perm: np.ndarray               # final pivot order -> original front position
    perturbations: list            # (final front position, amount) pairs
    dblocks: list                  # (front position, size, values tuple)
    schur: np.ndarray              # packed lower of the trailing block
    num_2x2: int = 0


def _gather(front: FrontalMatrix, row_start: int, cols: range) -> np.ndarray:
    """Rows row_start.. of the given (already eliminated) columns."""
    q = front.order
    out = np.empty((q - row_start, len(cols)))
    for k, c in enumerate(cols):
        out[:, k] = front.col(c)[row_start - c:]
    return out


def _dmat(dblocks: list, k0: int, k1: int) -> np.ndarray:
    """Dense block-diagonal D for pivots in front positions [k0, k1)."""
    w = k1 - k0
    D = np.zeros((w, w))
    for pos, size, vals in dblocks:
        if pos < k0 or pos >= k1:
            continue
        t = pos - k0
        if size == 1:
            D[t, t] = vals[0]
        else:
            a, b, c = vals
            D[t, t] = a
            D[t + 1, t] = D[t, t + 1] = b
            D[t + 1, t + 1] = c
    return D


def pivot_kernel(block: np.ndarray, tags: np.ndarray, params: PivotParams,
                 norm1: float):
    """Factorise a dense symmetric diagonal block with the pivot cascade.

    `block` is a full symmetric C-contiguous array (the hybrid view of the
    block) and is destroyed.  Returns (L, dblocks, perm, perturbations)
    where L is unit lower triangular in the final pivot order, dblocks is a
    list of (local position, size, values), perm maps final positions to
    the caller's positions and perturbations is a list of
    (local final position, amount) covering lifts, floors and statics.
    """
    M = np.array(block, dtype=float)
    wb = M.shape[0]
    tags = np.asarray(tags, dtype=np.int8).copy()
    L = np.eye(wb)
    perm = np.arange(wb)
    dblocks: list = []
    perturb: list = []
    tiny = params.delta * norm1
    catastrophe = CATASTROPHE_FRACTION * norm1

    def sym_swap(i: int, j: int) -> None:
        if i == j:
            return
        M[[i, j], :] = M[[j, i], :]
        M[:, [i, j]] = M[:, [j, i]]
        tags[[i, j]] = tags[[j, i]]
        perm[[i, j]] = perm[[j, i]]
        L[[i, j], :] = L[[j, i], :]

    def eliminate_1x1(p: int, value: float) -> None:
        mpp = M[p, p]
        tag = int(tags[p])
        # sign-preserving floor: eliminating p must not flip any remaining
        # same-tag diagonal of the block (opposite-tag diagonals receive a
        # contribution of their own sign whenever the pivot sign is right)
        floor = 0.0
        if p + 1 < wb:
            qcol = M[p + 1:, p]
            dens = np.abs(np.diag(M)[p + 1:])
            nz = (qcol != 0.0) & (tags[p + 1:] == tag)
            if nz.any():
                with np.errstate(divide="ignore", invalid="ignore"):
                    cand = np.where(nz, qcol * qcol / np.where(dens > 0, dens, 0.0), 0.0)
                floor = float(cand.max())
        if floor > abs(value) and floor > catastrophe:
            # the regularisation the floor demands is so large the
            # factorisation has gone wrong: restart with bigger statics
            raise FactorizationBreakdown(
                f"sign-preserving floor {floor:.3e} exceeds "
                f"{CATASTROPHE_FRACTION:g} * |M|_1 = {catastrophe:.3e}")
        final = tag * max(abs(value), floor)
        final += tag * params.static_for(tag)
        if final == 0.0:
            raise FactorizationBreakdown("zero pivot with zero regularisation")
        if final != mpp:
            perturb.append((p, final - mpp))
        M[p, p] = final
        if p + 1 < wb:
            col = M[p + 1:, p].copy()
            lcol = col / final
            M[p + 1:, p + 1:] -= np.outer(lcol, col)
            L[p + 1:, p] = lcol
        dblocks.append((p, 1, (final,)))

    p = 0
    while p < wb:
        # (0) bring the largest-magnitude remaining diagonal to the front
        j_star = p + int(np.argmax(np.abs(np.diag(M)[p:])))
        sym_swap(p, j_star)
        mpp = M[p, p]
        if p + 1 < wb:
            r_rel = int(np.argmax(np.abs(M[p + 1:, p])))
            r = p + 1 + r_rel
            gamma_p = abs(M[r, p])
        else:
            r = -1
            gamma_p = 0.0

        if max(abs(mpp), gamma_p) <= tiny:
            # (1) lift: set magnitude delta*|M|_1, keep the tag's sign
            eliminate_1x1(p, tiny)
            p += 1
            continue
        if abs(mpp) >= params.alpha * gamma_p:
            # (2) plain acceptance
            eliminate_1x1(p, mpp)
            p += 1
            continue
        col_r = np.abs(M[p:, r])
        col_r[r - p] = 0.0
        gamma_r = float(col_r.max())
        if abs(mpp) >= params.alpha * gamma_p * gamma_p / gamma_r:
            # (3) growth bounded despite small pivot
            eliminate_1x1(p, mpp)
            p += 1
            continue
        if abs(M[r, r]) >= params.alpha * gamma_r:
            # (4) the partner makes a good 1x1: swap it in
            sym_swap(p, r)
            eliminate_1x1(p, M[p, p])
            p += 1
            continue
        if tags[p] != tags[r] and p + 1 < wb:
            # (5) opposite-tag 2x2 pivot (p, r)
            sym_swap(p + 1, r)
            tag_p, tag_q = int(tags[p]), int(tags[p + 1])
            sp_, sq_ = tag_p * params.static_for(tag_p), tag_q * params.static_for(tag_q)
            if sp_ != 0.0:
                perturb.append((p, sp_))
            if sq_ != 0.0:
                perturb.append((p + 1, sq_))
            a = M[p, p] + sp_
            b = M[p + 1, p]
            c = M[p + 1, p + 1] + sq_
            det = a * c - b * b
            if det == 0.0:
                raise FactorizationBreakdown("singular 2x2 pivot block")
            M[p, p], M[p + 1, p + 1] = a, c
            if p + 2 < wb:
                W = M[p + 2:, p:p + 2].copy()
                dinv = np.array([[c, -b], [-b, a]]) / det
                lsub = W @ dinv
                M[p + 2:, p + 2:] -= lsub @ W.T
                L[p + 2:, p:p + 2] = lsub
            dblocks.append((p, 2, (a, b, c)))
            p += 2
            continue
        # same-tag 2x2 candidate (or lone trailing column): fall through to
        # the lift rule, never below delta*|M|_1 in magnitude
        eliminate_1x1(p, tags[p] * max(abs(mpp), tiny))
        p += 1

    return L, dblocks, perm, perturb


def partial_factor(front: FrontalMatrix, params: PivotParams,
                   norm1: float | None = None):
    """Eliminate the front's pivot columns blockwise; return the factor
    bookkeeping and the trailing Schur complement.

    `norm1` is the 1-norm of the matrix being factorised, the reference
    scale for pivot lifts; it defaults to the front's own norm when the
    front is factorised standalone.  On return the front's packed storage
    holds the factor panel: strictly lower L entries below unit diagonals,
    D values on diagonal slots (the subdiagonal slot of a 2x2 pivot stores
    its coupling), and the updated trailing block.
    """
    q, w, nb = front.order, front.npiv, front.block
    if norm1 is None:
        norm1 = front.norm1()
    dblocks_all: list = []
    perm_front = np.arange(w)
    perturb_front: list = []
    pivot_sizes = np.zeros(w, dtype=np.int8)
    num_2x2 = 0

    k0 = 0
    while k0 < w:
        k1 = min(k0 + nb, w)
        wb = k1 - k0
        # gather the current panel: diagonal block plus rows below it
        panel = np.empty((q - k0, wb))
        for t, c in enumerate(range(k0, k1)):
            panel[c - k0:, t] = front.col(c)
            if c > k0:  # upper part of the block from symmetry
                panel[:c - k0, t] = panel[t, :c - k0]
        # left-looking update from all previous pivot blocks
        for j0 in range(0, k0, nb):
            j1 = min(j0 + nb, k0)
            Lpan = _gather(front, k0, range(j0, j1))
            DJ = _dmat(dblocks_all, j0, j1)
            V = Lpan[:wb]
            panel -= (Lpan @ DJ) @ V.T
        B_D = np.ascontiguousarray(panel[:wb])  # hybrid (row-major) view
        B_P = panel[wb:]

        Lb, dblocks, perm_b, perturb_b = pivot_kernel(
            B_D, front.tags[k0:k1], params, norm1)

        # propagate the block's swaps
        front.tags[k0:k1] = front.tags[k0:k1][perm_b]
        perm_front[k0:k1] = perm_front[k0:k1][perm_b]
        for c in range(0, k0):  # rows k0..k1 of already-factored columns
            seg = front.col(c)[k0 - c:k1 - c]
            seg[:] = seg[perm_b]
        B_P = B_P[:, perm_b]

        # B_P <- B_P L^{-T} D^{-1}
        if B_P.shape[0]:
            X = solve_triangular(Lb, B_P.T, lower=True, unit_diagonal=True).T
            for pos, size, vals in dblocks:
                t = pos - 0
                if size == 1:
                    X[:, t] /= vals[0]
                else:
                    a, b, c = vals
                    det = a * c - b * b
                    dinv = np.array([[c, -b], [-b, a]]) / det
                    X[:, t:t + 2] = X[:, t:t + 2] @ dinv
        else:
            X = B_P

        # write the factored block back into packed storage
        for t, c in enumerate(range(k0, k1)):
            col = front.col(c)
            col[1:wb - t] = Lb[t + 1:, t]
            col[0] = 0.0
            col[wb - t:] = X[:, t]
        for pos, size, vals in dblocks:
            c = k0 + pos
            if size == 1:
                front.col(c)[0] = vals[0]
            else:
                a, b, cc = vals
                front.col(c)[0] = a
                front.col(c)[1] = b
                front.col(c + 1)[0] = cc
                pivot_sizes[c] = 2
                pivot_sizes[c + 1] = 0
                num_2x2 += 1
            if size == 1:
                pivot_sizes[c] = 1
            dblocks_all.append((c, size, vals))
        for pos, amount in perturb_b:
            perturb_front.append((k0 + pos, amount))
        k0 = k1

    # trailing Schur complement: M_RR - L_R D L_R^T, packed lower
    r = q - w
    schur = np.empty(packed_size(r))
    if r:
        L_R = _gather(front, w, range(0, w))
        Dfull = _dmat(dblocks_all, 0, w)
        U = (L_R @ Dfull) @ L_R.T
        k = 0
        for t in range(r):
            c = w + t
            seg = front.col(c)
            seg -= U[t:, t]
            schur[k:k + r - t] = seg
            k += r - t

    return PartialFactorResult(
        pivot_sizes=pivot_sizes, perm=perm_front, perturbations=perturb_front,
        dblocks=dblocks_all, schur=schur, num_2x2=num_2x2)
