"""Fill-reducing ordering for symmetric sparsity patterns.

A minimum-degree ordering computed on an explicit elimination graph:
at each step the active node of smallest degree is eliminated (ties broken
by smallest index, which makes the ordering deterministic) and its
neighbours are joined into a clique.  The dense boolean adjacency keeps the
updates exact and vectorised; the solver targets desk-scale systems where
the quadratic memory is irrelevant.  A user-supplied permutation can be
passed straight to the symbolic phase instead, so stronger orderings
(nested dissection) can be injected without touching this module.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def fill_reducing_ordering(pattern: sp.spmatrix) -> np.ndarray:
    """Return a permutation (new index -> old index) for a symmetric pattern.

    `pattern` may be any scipy sparse matrix; only the positions matter and
    only one triangle needs to be present.
    """
    n = pattern.shape[0]
    if pattern.shape[1] != n:
        raise ValueError("pattern must be square")
    if n == 0:
        return np.zeros(0, dtype=np.int64)

    P = sp.csc_matrix(pattern)
    adj = np.zeros((n, n), dtype=bool)
    adj[P.indices, np.repeat(np.arange(n), np.diff(P.indptr))] = True
    adj |= adj.T
    np.fill_diagonal(adj, False)

    active = np.ones(n, dtype=bool)
    perm = np.empty(n, dtype=np.int64)
    for k in range(n):
        deg = adj.sum(axis=1)
        deg[~active] = n + 1  # off the board
        v = int(np.argmin(deg))  # argmin takes the first = smallest index
        perm[k] = v
        nbrs = np.where(adj[v])[0]
        if nbrs.size:
            adj[np.ix_(nbrs, nbrs)] = True
            adj[nbrs, nbrs] = False
        adj[v, :] = False
        adj[:, v] = False
        active[v] = False
    return perm
