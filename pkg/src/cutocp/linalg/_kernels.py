"""Compiled Gauss-Seidel sweeps over CSR matrices."""

import numpy as np
from numba import njit


@njit(cache=True)
def gs_sweep(indptr, indices, data, x, b, rows):
    """In-place Gauss-Seidel update of ``x`` visiting ``rows`` in the given order."""
    for i in rows:
        s = b[i]
        diag = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j == i:
                diag += data[k]
            else:
                s -= data[k] * x[j]
        x[i] = s / diag


def sweep(A, x, b, rows):
    gs_sweep(A.indptr, A.indices, A.data, x, b, np.ascontiguousarray(rows, dtype=np.int64))
    return x
