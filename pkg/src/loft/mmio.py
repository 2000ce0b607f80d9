"""Matrix-Market fixtures for the factorisation tests.

Coordinate, real, symmetric files only; the exchange format is scipy's,
the in-package representation is the canonical lower-triangular CSC used
by the symbolic and numeric factorisation.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp

from .symbolic import lower_csc


def read_symmetric(path) -> sp.csc_matrix:
    """Read a symmetric coordinate Matrix-Market file as lower CSC."""
    M = scipy.io.mmread(path)
    if M.shape[0] != M.shape[1]:
        raise ValueError("matrix-market fixture is not square")
    return lower_csc(sp.csc_matrix(M))


def write_symmetric(path, lower: sp.spmatrix) -> None:
    """Write a lower-triangular matrix as a symmetric coordinate file."""
    low = sp.coo_matrix(sp.tril(lower))
    scipy.io.mmwrite(path, low, symmetry="symmetric")
