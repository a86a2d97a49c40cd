# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: CSR mat-vec and element reaction blocks."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def csr_matvec(const int64_t[::1] indptr, const int64_t[::1] indices,
               const double[::1] data, const double[::1] x):
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef double acc
    out = np.empty(n_rows, dtype=np.float64)
    cdef double[::1] y = out
    with nogil:
        for i in range(n_rows):
            acc = 0.0
            for p in range(indptr[i], indptr[i + 1]):
                acc = acc + data[p] * x[indices[p]]
            y[i] = acc
    return out


def reaction_blocks(const double[:, ::1] values, const double[:, ::1] wdet,
                    const double[:, ::1] coeffs, double scale, double a):
    cdef Py_ssize_t nq = values.shape[0]
    cdef Py_ssize_t nloc = values.shape[1]
    cdef Py_ssize_t nel = coeffs.shape[0]
    cdef Py_ssize_t npair = nloc * (nloc + 1) // 2
    cdef Py_ssize_t e, q, j, k, m
    cdef double v
    # phi_j phi_k (j <= k) at each node
    pairs_arr = np.empty((nq, npair), dtype=np.float64)
    cdef double[:, ::1] pairs = pairs_arr
    for q in range(nq):
        m = 0
        for j in range(nloc):
            for k in range(j, nloc):
                pairs[q, m] = values[q, j] * values[q, k]
                m += 1
    f_arr = np.empty((nel, nq), dtype=np.float64)
    cdef double[:, ::1] f = f_arr
    packed_arr = np.empty((nel, npair), dtype=np.float64)
    cdef double[:, ::1] packed = packed_arr
    out = np.empty((nel, nloc, nloc), dtype=np.float64)
    cdef double[:, :, ::1] blk = out
    cdef int gm = <int>npair, gn = <int>nel, gk = <int>nq
    cdef double one = 1.0, zero = 0.0
    if nel == 0:
        return out
    with nogil:
        for e in range(nel):
            for q in range(nq):
                v = 0.0
                for j in range(nloc):
                    v = v + coeffs[e, j] * values[q, j]
                f[e, q] = wdet[e, q] * scale * (v - 1.0) * (v - a)
        # packed = f @ pairs, written as its column-major transpose
        dgemm("N", "N", &gm, &gn, &gk, &one, &pairs[0, 0], &gm, &f[0, 0], &gk, &zero,
              &packed[0, 0], &gm)
        for e in range(nel):
            m = 0
            for j in range(nloc):
                for k in range(j, nloc):
                    blk[e, j, k] = packed[e, m]
                    blk[e, k, j] = packed[e, m]
                    m += 1
    return out
