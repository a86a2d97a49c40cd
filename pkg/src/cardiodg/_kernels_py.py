"""Pure numpy versions of the hot kernels (fallback for the compiled module)."""
import numpy as np


def csr_matvec(indptr, indices, data, x):
    n_rows = len(indptr) - 1
    prod = data * x[indices]
    rows = np.repeat(np.arange(n_rows), np.diff(indptr))
    return np.bincount(rows, weights=prod, minlength=n_rows)


def reaction_blocks(values, wdet, coeffs, scale, a):
    """Element blocks of int scale*(V-1)(V-a) phi_j phi_k, V from modal ``coeffs``.

    values: (nq, nloc) reference basis at nodes; wdet: (nel, nq) weights times
    |det J|; coeffs: (nel, nloc).
    """
    v = coeffs @ values.T
    f = wdet * (scale * (v - 1.0) * (v - a))
    return np.einsum("eq,qj,qk->ejk", f, values, values, optimize=True)
