"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``CARDIODG_BACKEND=python`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("CARDIODG_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"


def csr_matvec(indptr, indices, data, x):
    return _impl.csr_matvec(indptr, indices, data, np.ascontiguousarray(x, dtype=np.float64))


def reaction_blocks(values, wdet, coeffs, scale, a):
    return _impl.reaction_blocks(
        np.ascontiguousarray(values),
        np.ascontiguousarray(wdet),
        np.ascontiguousarray(coeffs, dtype=np.float64),
        float(scale),
        float(a),
    )
