"""Compressed-row sparse matrices and restarted GMRES."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels

log = logging.getLogger(__name__)


class SparseMatrix:
    """CSR matrix with sorted, unique column indices in every row."""

    def __init__(self, n_rows, n_cols, indptr, indices, data):
        self.shape = (int(n_rows), int(n_cols))
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)
        self.data.setflags(write=False)

    @classmethod
    def from_triplets(cls, n_rows, n_cols, rows, cols=None, vals=None):
        """Assemble from (row, col, value) triplets; duplicates are summed.

        Accepts either three parallel arrays or a single list of triples.
        """
        if cols is None:
            entries = list(rows)
            rows = np.array([e[0] for e in entries], dtype=np.int64)
            cols = np.array([e[1] for e in entries], dtype=np.int64)
            vals = np.array([e[2] for e in entries], dtype=np.float64)
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if rows.size and (rows.min() < 0 or rows.max() >= n_rows):
            raise IndexError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= n_cols):
            raise IndexError("column index out of range")
        key = rows * n_cols + cols
        uniq, inverse = np.unique(key, return_inverse=True)
        data = np.bincount(inverse, weights=vals, minlength=len(uniq))
        r = uniq // n_cols
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=n_rows), out=indptr[1:])
        return cls(n_rows, n_cols, indptr, uniq % n_cols, data)

    @classmethod
    def diagonal_matrix(cls, d):
        n = len(d)
        return cls(n, n, np.arange(n + 1), np.arange(n), d)

    @property
    def nnz(self) -> int:
        return len(self.data)

    def row_indices(self) -> np.ndarray:
        return np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.shape[1],):
            raise ValueError(f"dimension mismatch: matrix {self.shape}, vector {x.shape}")
        return kernels.csr_matvec(self.indptr, self.indices, self.data, x)

    __matmul__ = matvec

    def diagonal(self) -> np.ndarray:
        n = min(self.shape)
        out = np.zeros(n)
        rows = self.row_indices()
        mask = (rows == self.indices) & (rows < n)
        out[rows[mask]] = self.data[mask]
        return out

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_triplets(
            self.shape[1], self.shape[0], self.indices, self.row_indices(), self.data
        )

    @property
    def T(self):
        return self.transpose()

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_indices(), self.indices] = self.data
        return out

    def positions(self, rows, cols) -> np.ndarray:
        """Offsets into ``data`` of the stored entries (rows, cols).

        Raises KeyError if any requested entry is outside the pattern.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        key = self.row_indices() * self.shape[1] + self.indices
        want = rows * self.shape[1] + cols
        pos = np.searchsorted(key, want.ravel())
        pos = np.minimum(pos, len(key) - 1)
        if np.any(key[pos] != want.ravel()):
            raise KeyError("entry outside the sparsity pattern")
        return pos.reshape(want.shape)

    def with_data(self, data) -> "SparseMatrix":
        """Same pattern, new values."""
        return SparseMatrix(self.shape[0], self.shape[1], self.indptr, self.indices, data)

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        if self.shape != other.shape:
            raise ValueError("shape mismatch")
        return SparseMatrix.from_triplets(
            self.shape[0],
            self.shape[1],
            np.concatenate([self.row_indices(), other.row_indices()]),
            np.concatenate([self.indices, other.indices]),
            np.concatenate([self.data, other.data]),
        )

    def scaled(self, c: float) -> "SparseMatrix":
        return self.with_data(c * self.data)

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


def spmv(A: SparseMatrix, x) -> np.ndarray:
    return A.matvec(x)


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    residual: float
    converged: bool


class SolverError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def gmres_solve(
    A,
    b,
    x0=None,
    rel_tol=1e-10,
    max_iter=2000,
    restart=30,
    preconditioner="diagonal",
    kernel=None,
):
    """Right-preconditioned restarted GMRES.

    ``preconditioner`` is ``"diagonal"`` (Jacobi, zero entries replaced by 1),
    ``None``, or a callable applying an approximate inverse to a vector
    (see :func:`block_jacobi`). ``kernel``, if given, is a null vector of ``A`` (also of
    ``A^T``): it is projected out of the right-hand side, the initial guess,
    the residuals and the returned solution, so a consistent singular system
    is solved in the complement of the kernel.

    Convergence is declared on the true residual ``|b - Ax| <= rel_tol |b|``.
    Returns ``(x, SolverReport)``; non-convergence is reported, not raised.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: matrix {A.shape}, rhs {b.shape}")

    if kernel is not None:
        z = np.asarray(kernel, dtype=np.float64)
        z = z / np.linalg.norm(z)

        def project(v):
            return v - z * np.dot(z, v)
    else:

        def project(v):
            return v

    if callable(preconditioner):
        apply_pc = preconditioner
    elif preconditioner == "diagonal":
        d = A.diagonal().copy()
        d[d == 0.0] = 1.0
        inv_d = 1.0 / d

        def apply_pc(v):
            return inv_d * v
    elif preconditioner is None:

        def apply_pc(v):
            return v
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    b = project(b)
    x = np.zeros(n) if x0 is None else project(np.array(x0, dtype=np.float64))
    bnorm = np.linalg.norm(b)
    if not np.isfinite(bnorm):
        raise SolverError("NaN/Inf in the right-hand side", SolverReport(0, float("nan"), False))
    if bnorm == 0.0:
        return np.zeros(n), SolverReport(0, 0.0, True)
    target = rel_tol * bnorm

    r = project(b - A.matvec(x))
    rnorm = np.linalg.norm(r)
    if not np.isfinite(rnorm):
        raise SolverError("NaN/Inf in the initial residual", SolverReport(0, float("nan"), False))
    total = 0
    m = max(1, int(restart))
    while rnorm > target and total < max_iter:
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = rnorm
        V[0] = r / rnorm
        k_used = 0
        for k in range(m):
            w = project(A.matvec(apply_pc(V[k])))
            for i in range(k + 1):
                H[i, k] = np.dot(w, V[i])
                w -= H[i, k] * V[i]
            H[k + 1, k] = np.linalg.norm(w)
            if not np.isfinite(H[k + 1, k]):
                raise SolverError(
                    f"NaN/Inf encountered in GMRES at iteration {total + 1}",
                    SolverReport(total, float("nan"), False),
                )
            breakdown = H[k + 1, k] == 0.0
            if not breakdown:
                V[k + 1] = w / H[k + 1, k]
            for i in range(k):
                tmp = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = tmp
            denom = np.hypot(H[k, k], H[k + 1, k])
            if denom == 0.0:
                cs[k], sn[k] = 1.0, 0.0
            else:
                cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
            H[k, k] = cs[k] * H[k, k] + sn[k] * H[k + 1, k]
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            total += 1
            k_used = k + 1
            if abs(g[k + 1]) <= target or total >= max_iter or breakdown:
                break
        y = _back_substitute(H[:k_used, :k_used], g[:k_used])
        x = project(x + apply_pc(V[:k_used].T @ y))
        r = project(b - A.matvec(x))
        new_norm = np.linalg.norm(r)
        if not np.isfinite(new_norm):
            raise SolverError(
                f"NaN/Inf residual after {total} GMRES iterations",
                SolverReport(total, float("nan"), False),
            )
        if new_norm >= rnorm and abs(g[k_used]) > target:
            # stagnation: another cycle cannot help
            rnorm = new_norm
            break
        rnorm = new_norm
    rel = float(rnorm / bnorm)
    converged = rnorm <= target
    if not converged:
        log.warning("GMRES stopped after %d iterations, relative residual %.3e", total, rel)
    return x, SolverReport(total, rel, bool(converged))


def block_jacobi(A: SparseMatrix, blocks):
    """Preconditioner inverting the dense diagonal blocks of ``A``.

    ``blocks`` is an (n_blocks, block_size) array of row/column indices that
    partitions ``0..n-1``. Singular blocks fall back to the pseudo-inverse.
    """
    blocks = np.asarray(blocks, dtype=np.int64)
    nb, bs = blocks.shape
    if A.shape[0] != A.shape[1] or nb * bs != A.shape[0]:
        raise ValueError("blocks must partition the unknowns of a square matrix")
    owner = np.empty(A.shape[0], dtype=np.int64)
    local = np.empty(A.shape[0], dtype=np.int64)
    owner[blocks.ravel()] = np.repeat(np.arange(nb), bs)
    local[blocks.ravel()] = np.tile(np.arange(bs), nb)
    rows = A.row_indices()
    keep = owner[rows] == owner[A.indices]
    dense = np.zeros((nb, bs, bs))
    dense[owner[rows[keep]], local[rows[keep]], local[A.indices[keep]]] = A.data[keep]
    try:
        inv = np.linalg.inv(dense)
    except np.linalg.LinAlgError:
        inv = np.linalg.pinv(dense)

    def apply(v):
        out = np.empty_like(v)
        out[blocks] = np.einsum("kij,kj->ki", inv, v[blocks])
        return out

    return apply


def _back_substitute(R, g):
    k = len(g)
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        if R[i, i] == 0.0:
            continue
        y[i] = (g[i] - R[i, i + 1 :] @ y[i + 1 :]) / R[i, i]
    return y
