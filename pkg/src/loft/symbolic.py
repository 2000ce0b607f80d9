"""Symbolic analysis for the multifrontal LDL^T factorisation.

Everything that depends only on the sparsity pattern is computed here once
and reused across the numeric factorisations of an interior point run:
elimination tree, postordering, column structures, supernode partition
(with amalgamation), per-supernode assembly maps and extend-add index
maps, plus the nnz/flop counts that drive the corrector budget and the
normal-equations/augmented-system choice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import SolverError

# merging a child supernode into its parent is allowed to introduce at most
# max(AMALG_ABS, AMALG_REL * child stored entries) explicit zeros
AMALG_ABS = 16
AMALG_REL = 0.10


@dataclass
class EliminationTree:
    parent: np.ndarray  # -1 marks a root
    children: list      # per node, ascending


def _permuted_lower(pattern: sp.spmatrix, perm: np.ndarray | None) -> sp.csc_matrix:
    """Lower triangle (with explicit diagonal) of P A P^T, sorted indices."""
    A = sp.csc_matrix(pattern, copy=True)
    A.data[:] = 1.0  # pattern only; keeps explicit zeros alive through the ops
    n = A.shape[0]
    if perm is not None:
        A = A[perm][:, perm]
    S = A + A.T  # symmetrise regardless of which triangle was given
    S = sp.tril(S, format="csc") + sp.eye(n, format="csc")
    S.data[:] = 1.0
    S.sort_indices()
    return S


def elimination_tree(pattern: sp.spmatrix, perm: np.ndarray | None = None) -> EliminationTree:
    """Column elimination tree of the (permuted) symmetric pattern.

    parent(j) = min{ i > j : L_ij != 0 } under the no-cancellation model.
    """
    low = _permuted_lower(pattern, perm)
    n = low.shape[0]
    rows = low.tocsr()
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for j in range(n):
        for i in rows.indices[rows.indptr[j]:rows.indptr[j + 1]]:
            if i >= j:
                continue
            k = int(i)
            while ancestor[k] != -1 and ancestor[k] != j:
                nxt = int(ancestor[k])
                ancestor[k] = j
                k = nxt
            if ancestor[k] == -1:
                ancestor[k] = j
                parent[k] = j
    children: list[list[int]] = [[] for _ in range(n)]
    for j in range(n):
        p = parent[j]
        if p >= 0:
            children[p].append(j)  # ascending since j grows
    return EliminationTree(parent=parent, children=children)


def postorder(tree: EliminationTree) -> np.ndarray:
    """Postorder permutation (position -> node), children visited ascending."""
    n = len(tree.parent)
    post = np.empty(n, dtype=np.int64)
    k = 0
    roots = [j for j in range(n) if tree.parent[j] == -1]
    for root in roots:
        stack = [(root, 0)]
        while stack:
            node, ci = stack.pop()
            if ci < len(tree.children[node]):
                stack.append((node, ci + 1))
                stack.append((tree.children[node][ci], 0))
            else:
                post[k] = node
                k += 1
    if k != n:
        raise SolverError("elimination tree is not a forest")
    return post


def _column_structs(low: sp.csc_matrix, parent: np.ndarray) -> list:
    """Row structure of every column of L (sorted, diagonal included).

    Requires monotone labels (parent > child), which holds after
    postordering.
    """
    n = low.shape[0]
    structs: list[np.ndarray] = [None] * n
    kids: list[list[int]] = [[] for _ in range(n)]
    for j in range(n):
        if parent[j] >= 0:
            kids[parent[j]].append(j)
    for j in range(n):
        pieces = [low.indices[low.indptr[j]:low.indptr[j + 1]]]
        for c in kids[j]:
            pieces.append(structs[c][1:])
        merged = np.unique(np.concatenate(pieces)) if len(pieces) > 1 else np.unique(pieces[0])
        structs[j] = merged
    return structs


def _dense_partial_flops(width: int, below: int) -> int:
    """Flop estimate of eliminating `width` pivots over a front with
    `below` trailing rows: sum over remaining row counts t of t^2 + t."""
    total = 0
    for k in range(width):
        t = below + width - 1 - k
        total += t * t + t
    return total


@dataclass
class SymbolicFactorization:
    """Pattern-level plan for the numeric factorisation."""

    n: int
    perm: np.ndarray            # new -> old, postordering folded in
    iperm: np.ndarray
    parent: np.ndarray          # column etree in final labels
    post: np.ndarray            # postorder applied on top of the input perm
    col_counts: np.ndarray
    nnz_l: int                  # exact no-cancellation count, diagonal included
    nnz_stored: int             # entries actually stored (amalgamation padding)
    flops: int
    snode_first: np.ndarray     # S+1, sentinel n at the end
    snode_rows_below: list      # per snode, sorted global (final-label) rows
    snode_parent: np.ndarray
    snode_children: list
    asm_src: list               # per snode: indices into the matrix lower data
    asm_dst: list               # per snode: packed offsets into the front
    child_rel: list             # per snode: list of row maps, child -> front
    max_stack_entries: int

    @property
    def num_supernodes(self) -> int:
        return len(self.snode_first) - 1

    def snode_width(self, s: int) -> int:
        return int(self.snode_first[s + 1] - self.snode_first[s])

    def snode_full_rows(self, s: int) -> np.ndarray:
        cols = np.arange(self.snode_first[s], self.snode_first[s + 1], dtype=np.int64)
        return np.concatenate([cols, self.snode_rows_below[s]])


def symbolic(pattern: sp.spmatrix, perm: np.ndarray | None = None,
             amalgamate: bool = True) -> SymbolicFactorization:
    """Run the full symbolic analysis for a symmetric pattern.

    `pattern` is the lower triangle (any scipy sparse); `perm` a
    fill-reducing permutation (identity if None).  The returned object is
    bound to the *pattern* of the input matrix: the assembly maps index
    into the data array of the canonical lower-CSC form produced by
    :func:`lower_csc`.
    """
    A_low = lower_csc(pattern)
    n = A_low.shape[0]
    if perm is None:
        perm = np.arange(n, dtype=np.int64)

    tree0 = elimination_tree(A_low, perm)
    post = postorder(tree0)
    final_perm = np.asarray(perm, dtype=np.int64)[post]
    iperm = np.empty(n, dtype=np.int64)
    iperm[final_perm] = np.arange(n, dtype=np.int64)

    low = _permuted_lower(A_low, final_perm)
    # relabelled etree (monotone: parent > child)
    relabel = np.empty(n, dtype=np.int64)
    relabel[post] = np.arange(n, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    for j in range(n):
        p = tree0.parent[j]
        if p >= 0:
            parent[relabel[j]] = relabel[p]

    structs = _column_structs(low, parent)
    col_counts = np.array([len(s) for s in structs], dtype=np.int64)
    nnz_l = int(col_counts.sum())

    # fundamental supernodes: parent(j) == j+1 and count(j) == count(j+1) + 1
    snode_first_list = [0]
    for j in range(1, n):
        if not (parent[j - 1] == j and col_counts[j - 1] == col_counts[j] + 1):
            snode_first_list.append(j)
    snode_first_list.append(n)

    snodes = []
    for k in range(len(snode_first_list) - 1):
        f, e = snode_first_list[k], snode_first_list[k + 1]
        below = structs[e - 1][1:]  # shared tail of the supernode
        snodes.append({"first": f, "last": e - 1, "below": below})

    def stored(node) -> int:
        w = node["last"] - node["first"] + 1
        return w * (w + 1) // 2 + w * len(node["below"])

    if amalgamate:
        merged_any = True
        while merged_any:
            merged_any = False
            k = 0
            while k + 1 < len(snodes):
                s, t = snodes[k], snodes[k + 1]
                if parent[s["last"]] != t["first"]:
                    k += 1
                    continue
                cols_t = np.arange(t["first"], t["last"] + 1)
                below_new = np.setdiff1d(
                    np.union1d(s["below"], t["below"]), cols_t, assume_unique=False)
                merged = {"first": s["first"], "last": t["last"], "below": below_new}
                extra = stored(merged) - stored(s) - stored(t)
                if extra <= max(AMALG_ABS, int(AMALG_REL * stored(s))):
                    snodes[k] = merged
                    del snodes[k + 1]
                    merged_any = True
                else:
                    k += 1

    num_s = len(snodes)
    snode_first = np.array([s["first"] for s in snodes] + [n], dtype=np.int64)
    snode_rows_below = [np.asarray(s["below"], dtype=np.int64) for s in snodes]

    snode_of_col = np.empty(n, dtype=np.int64)
    for si, s in enumerate(snodes):
        snode_of_col[s["first"]:s["last"] + 1] = si

    snode_parent = np.full(num_s, -1, dtype=np.int64)
    snode_children: list[list[int]] = [[] for _ in range(num_s)]
    for si, s in enumerate(snodes):
        p = parent[s["last"]]
        if p >= 0:
            sp_ = int(snode_of_col[p])
            snode_parent[si] = sp_
            snode_children[sp_].append(si)  # ascending by construction

    nnz_stored = sum(stored(s) for s in snodes)
    flops = sum(
        _dense_partial_flops(s["last"] - s["first"] + 1, len(snode_rows_below[si]))
        for si, s in enumerate(snodes))
    if max(nnz_stored, flops) > np.iinfo(np.int64).max:
        raise MemoryError("symbolic counts overflow the 64-bit index range")

    # assembly map: original lower entries -> (snode, packed front offset)
    asm_src: list[list[int]] = [[] for _ in range(num_s)]
    asm_dst: list[list[int]] = [[] for _ in range(num_s)]
    indptr, indices = A_low.indptr, A_low.indices
    for jo in range(n):
        for d in range(indptr[jo], indptr[jo + 1]):
            io = indices[d]
            i, j = int(iperm[io]), int(iperm[jo])
            if i < j:
                i, j = j, i
            s = int(snode_of_col[j])
            first = int(snode_first[s])
            w = int(snode_first[s + 1]) - first
            q = w + len(snode_rows_below[s])
            t = j - first
            if i < first + w:
                pos = i - first
            else:
                pos = w + int(np.searchsorted(snode_rows_below[s], i))
            off = t * q - t * (t - 1) // 2
            asm_src[s].append(d)
            asm_dst[s].append(off + pos - t)

    asm_src_arr = [np.asarray(v, dtype=np.int64) for v in asm_src]
    asm_dst_arr = [np.asarray(v, dtype=np.int64) for v in asm_dst]

    # extend-add maps: child below-rows -> positions in the parent front
    child_rel: list[list[np.ndarray]] = [[] for _ in range(num_s)]
    for si in range(num_s):
        full_rows = np.concatenate([
            np.arange(snode_first[si], snode_first[si + 1], dtype=np.int64),
            snode_rows_below[si]])
        for c in snode_children[si]:
            rel = np.searchsorted(full_rows, snode_rows_below[c])
            if (rel >= len(full_rows)) .any() or \
                    (full_rows[rel] != snode_rows_below[c]).any():
                raise SolverError("extend-add row missing from parent front")
            child_rel[si].append(rel.astype(np.int64))

    # multifrontal stack high-water mark, in stored Schur entries
    stack: list[int] = []
    max_stack = 0
    for si in range(num_s):
        for _ in snode_children[si]:
            stack.pop()
        r = len(snode_rows_below[si])
        if snode_parent[si] >= 0:
            stack.append(r * (r + 1) // 2)
        max_stack = max(max_stack, sum(stack))

    return SymbolicFactorization(
        n=n, perm=final_perm, iperm=iperm, parent=parent, post=post,
        col_counts=col_counts, nnz_l=nnz_l, nnz_stored=nnz_stored, flops=flops,
        snode_first=snode_first, snode_rows_below=snode_rows_below,
        snode_parent=snode_parent, snode_children=snode_children,
        asm_src=asm_src_arr, asm_dst=asm_dst_arr, child_rel=child_rel,
        max_stack_entries=max_stack)


def lower_csc(pattern: sp.spmatrix) -> sp.csc_matrix:
    """Canonical lower-triangular CSC with a full explicit diagonal.

    Explicit zeros are preserved: the output's data array is what numeric
    assembly maps index into.
    """
    A = sp.csc_matrix(pattern)
    n = A.shape[0]
    low = sp.tril(A, format="coo")
    have = np.zeros(n, dtype=bool)
    have[low.row[low.row == low.col]] = True
    missing = np.where(~have)[0]
    rows = np.concatenate([low.row, missing])
    cols = np.concatenate([low.col, missing])
    data = np.concatenate([low.data, np.zeros(missing.size)])
    out = sp.csc_matrix((data, (rows, cols)), shape=(n, n))
    out.sort_indices()
    return out
