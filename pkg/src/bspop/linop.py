"""Dense matrix helpers: Kronecker product and column-stacking vectorization.

Matrices are plain numpy arrays. Everything here is small and dense; the
largest blocks in this project are (p+1)^2-sized with p <= 3.
"""

from __future__ import annotations

import numpy as np


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two matrices (row vectors are fine too)."""
    return np.kron(np.atleast_2d(np.asarray(a, dtype=float)),
                   np.atleast_2d(np.asarray(b, dtype=float)))


def vec(a: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization: columns of ``a`` concatenated top to bottom.

    A 1-D input is already a column vector and is returned unchanged.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return a.copy()
    return a.ravel(order="F")


def vec_product(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """vec(A B C) computed as (C^T kron A) vec(B).

    Equivalent to ``vec(a @ b @ c)`` for conformable matrices; this form keeps
    the inner matrix as the free variable, which is how it is used to pull
    control points out of matrix products.
    """
    return kron(np.asarray(c, dtype=float).T, a) @ vec(b)
