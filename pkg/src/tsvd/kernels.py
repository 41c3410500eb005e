"""Storage types and data-parallel compute primitives.

Dense matrices are plain ``numpy`` arrays in column-major (Fortran) order and
vectors are 1-D float64 arrays. Sparse matrices use :class:`CsrMatrix`, a
0-based compressed-sparse-row container with numba row-parallel kernels.
"""

import os
from contextlib import contextmanager

import numba
import numpy as np
from numba import njit, prange
from threadpoolctl import threadpool_limits

# the system TBB is older than numba supports; skip it when picking a layer
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

THREADS_ENV = "TSVD_NUM_THREADS"

_num_threads = None


def default_num_threads():
    """Worker count from the environment override, else all available cores."""
    env = os.environ.get(THREADS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1, got {env!r}")
        return n
    return os.cpu_count() or 1


def get_num_threads():
    global _num_threads
    if _num_threads is None:
        _num_threads = default_num_threads()
    return _num_threads


def set_num_threads(n):
    """Set the global worker count used by every kernel.

    The count also fixes the reduction partitioning of :func:`spmv_t`, so it
    is honoured even when fewer hardware threads exist; the numba and BLAS
    pools are capped at what the machine provides.
    """
    global _num_threads
    n = int(n)
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _num_threads = n
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


@contextmanager
def num_threads(n):
    """Temporarily run kernels (and BLAS) with ``n`` workers."""
    previous = get_num_threads()
    set_num_threads(n)
    try:
        with threadpool_limits(limits=n):
            yield
    finally:
        set_num_threads(previous)


class DimensionError(ValueError):
    """Operands do not conform."""


def as_vector(x, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {x.shape}")
    return x


def as_dense(M, name="M"):
    """Validate and return ``M`` as a finite column-major float64 matrix."""
    M = np.asfortranarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


class CsrMatrix:
    """Sparse ``nrows x ncols`` matrix in 0-based CSR layout.

    Column indices are strictly increasing inside each row and values are
    finite; the constructor checks both. Use :meth:`from_coo` to build from
    unsorted triplets (duplicates are summed).
    """

    def __init__(self, nrows, ncols, row_ptr, col_idx, values):
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        self.row_ptr = np.ascontiguousarray(row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(col_idx, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self._validate()
        for arr in (self.row_ptr, self.col_idx, self.values):
            arr.setflags(write=False)

    def _validate(self):
        rp, ci, nnz = self.row_ptr, self.col_idx, len(self.values)
        if self.nrows < 0 or self.ncols < 0:
            raise ValueError("negative dimensions")
        if rp.shape != (self.nrows + 1,):
            raise ValueError(f"row_ptr must have length nrows+1 = {self.nrows + 1}")
        if rp[0] != 0 or rp[-1] != nnz:
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if ci.shape != (nnz,):
            raise ValueError("col_idx and values lengths differ")
        if nnz and (ci.min() < 0 or ci.max() >= self.ncols):
            raise ValueError("column index out of range")
        if nnz > 1:
            step = np.diff(ci)
            # a non-increase is only allowed where a new row starts
            row_start = np.zeros(nnz, dtype=bool)
            row_start[rp[1:-1][rp[1:-1] < nnz]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within rows")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values contain NaN or Inf")

    @classmethod
    def from_coo(cls, nrows, ncols, rows, cols, values):
        """Build from (row, col, value) triplets, summing duplicates."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (rows.shape == cols.shape == values.shape):
            raise ValueError("triplet arrays must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= nrows):
            raise ValueError("row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= ncols):
            raise ValueError("column index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if rows.size:
            new = np.ones(rows.size, dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new)
            values = np.add.reduceat(values, starts)
            rows, cols = rows[starts], cols[starts]
        row_ptr = np.zeros(nrows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=nrows), out=row_ptr[1:])
        return cls(nrows, ncols, row_ptr, cols, values)

    @classmethod
    def from_dense(cls, M):
        M = np.asarray(M, dtype=np.float64)
        rows, cols = np.nonzero(M)
        return cls.from_coo(M.shape[0], M.shape[1], rows, cols, M[rows, cols])

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self):
        return len(self.values)

    def row_indices(self):
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.nrows), np.diff(self.row_ptr))

    def to_dense(self):
        M = np.zeros((self.nrows, self.ncols), order="F")
        np.add.at(M, (self.row_indices(), self.col_idx), self.values)
        return M

    def __repr__(self):
        return f"CsrMatrix(nrows={self.nrows}, ncols={self.ncols}, nnz={self.nnz})"


@njit(parallel=True, cache=True)
def _csr_matvec(row_ptr, col_idx, values, x, y):
    for i in prange(len(row_ptr) - 1):
        acc = 0.0
        for p in range(row_ptr[i], row_ptr[i + 1]):
            acc += values[p] * x[col_idx[p]]
        y[i] = acc


@njit(parallel=True, cache=True)
def _csr_rmatvec(row_ptr, col_idx, values, x, partial):
    # each chunk of rows scatters into its own accumulator row
    nchunks = partial.shape[0]
    nrows = len(row_ptr) - 1
    for c in prange(nchunks):
        lo = c * nrows // nchunks
        hi = (c + 1) * nrows // nchunks
        for i in range(lo, hi):
            xi = x[i]
            for p in range(row_ptr[i], row_ptr[i + 1]):
                partial[c, col_idx[p]] += values[p] * xi


def spmv(A, x):
    """Return ``A @ x`` for a :class:`CsrMatrix` ``A``."""
    x = as_vector(x)
    if x.shape[0] != A.ncols:
        raise DimensionError(f"spmv: x has length {x.shape[0]}, A has {A.ncols} columns")
    y = np.empty(A.nrows)
    _csr_matvec(A.row_ptr, A.col_idx, A.values, x, y)
    return y


def spmv_t(A, x):
    """Return ``A.T @ x`` without forming the transpose."""
    x = as_vector(x)
    if x.shape[0] != A.nrows:
        raise DimensionError(f"spmv_t: x has length {x.shape[0]}, A has {A.nrows} rows")
    nchunks = max(1, min(get_num_threads(), A.nrows))
    partial = np.zeros((nchunks, A.ncols))
    _csr_rmatvec(A.row_ptr, A.col_idx, A.values, x, partial)
    if nchunks == 1:
        return partial[0]
    return partial.sum(axis=0)


def gemv(M, x, transpose=False):
    """Dense matrix-vector product ``M @ x`` (or ``M.T @ x``)."""
    x = as_vector(x)
    rows, cols = M.shape
    if transpose:
        if x.shape[0] != rows:
            raise DimensionError(f"gemv: x has length {x.shape[0]}, M has {rows} rows")
        return M.T @ x
    if x.shape[0] != cols:
        raise DimensionError(f"gemv: x has length {x.shape[0]}, M has {cols} columns")
    return M @ x


def gemm(left, right, out=None):
    if left.shape[1] != right.shape[0]:
        raise DimensionError(f"gemm: cannot multiply {left.shape} by {right.shape}")
    if out is None:
        out = np.empty((left.shape[0], right.shape[1]), order="F")
    return np.matmul(left, right, out=out)


def project_out(basis, ncols_active, w, passes=2):
    """Remove from ``w`` its components along the first ``ncols_active`` columns.

    Classical Gram-Schmidt applied twice; the columns are assumed orthonormal.
    Returns a new vector.
    """
    w = as_vector(w, "w")
    if basis.shape[0] != w.shape[0]:
        raise DimensionError(f"project_out: basis has {basis.shape[0]} rows, w has length {w.shape[0]}")
    if not 0 <= ncols_active <= basis.shape[1]:
        raise DimensionError(f"project_out: ncols_active={ncols_active} outside 0..{basis.shape[1]}")
    w = w.copy()
    if ncols_active == 0:
        return w
    Q = basis[:, :ncols_active]
    for _ in range(passes):
        w -= Q @ (Q.T @ w)
    return w


def norm2(x):
    x = as_vector(x)
    return float(np.sqrt(np.dot(x, x)))


def dot(x, y):
    x, y = as_vector(x), as_vector(y, "y")
    if x.shape != y.shape:
        raise DimensionError(f"dot: lengths {x.shape[0]} and {y.shape[0]} differ")
    return float(np.dot(x, y))


def axpy(a, x, y, inplace=False):
    """Return ``y + a*x``; with ``inplace=True`` ``y`` is overwritten."""
    x = as_vector(x)
    if not inplace:
        y = as_vector(y, "y").copy()
    if x.shape != y.shape:
        raise DimensionError(f"axpy: lengths {x.shape[0]} and {y.shape[0]} differ")
    y += a * x
    return y


class LinearOperator:
    """Uniform matvec / transposed-matvec handle over CSR or dense storage."""

    def __init__(self, A):
        if isinstance(A, LinearOperator):
            A = A.matrix
        if isinstance(A, CsrMatrix):
            self.sparse = True
            self.matrix = A
            self.nnz = A.nnz
        else:
            self.sparse = False
            self.matrix = as_dense(A, "A")
            self.nnz = self.matrix.size
        self.shape = self.matrix.shape

    def matvec(self, x):
        if self.sparse:
            return spmv(self.matrix, x)
        return gemv(self.matrix, x)

    def rmatvec(self, x):
        if self.sparse:
            return spmv_t(self.matrix, x)
        return gemv(self.matrix, x, transpose=True)

    def to_dense(self):
        if self.sparse:
            return self.matrix.to_dense()
        return self.matrix


def aslinearoperator(A):
    if isinstance(A, LinearOperator):
        return A
    return LinearOperator(A)
