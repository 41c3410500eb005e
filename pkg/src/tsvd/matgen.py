"""Synthetic test matrices: decay spectra, dense matrices with a prescribed
spectrum, and random sparse matrices with a fixed row density."""

from dataclasses import dataclass

import numpy as np

from .kernels import CsrMatrix, norm2, project_out

KINDS = ("decay1", "decay2", "decay3", "explicit")


@dataclass
class SpectrumSpec:
    kind: str
    length: int
    values: np.ndarray = None


def spectrum(spec, length=None):
    """Singular values for a decay pattern.

    ``spec`` is a :class:`SpectrumSpec` or a kind name (then ``length`` is
    required)::

        decay1: 10**(-4(i-1)/19) for i <= 20, then 1e-4 / (i-20)**0.1
        decay2: i**-2
        decay3: i**-3
    """
    if isinstance(spec, str):
        spec = SpectrumSpec(kind=spec, length=length)
    if spec.length is None or spec.length < 1:
        raise ValueError(f"spectrum length must be >= 1, got {spec.length}")
    i = np.arange(1, spec.length + 1, dtype=np.float64)
    if spec.kind == "decay1":
        head = 10.0 ** (-4.0 / 19.0 * (i - 1))
        with np.errstate(divide="ignore"):
            tail = 1e-4 / np.maximum(i - 20, 1) ** 0.1
        return np.where(i <= 20, head, tail)
    if spec.kind == "decay2":
        return i**-2
    if spec.kind == "decay3":
        return i**-3
    if spec.kind == "explicit":
        s = np.asarray(spec.values, dtype=np.float64)
        if s.shape != (spec.length,):
            raise ValueError("explicit spectrum length mismatch")
        if np.any(s <= 0) or np.any(np.diff(s) > 0):
            raise ValueError("explicit spectrum must be positive and non-increasing")
        return s.copy()
    raise ValueError(f"unknown spectrum kind {spec.kind!r}; expected one of {KINDS}")


def random_orthonormal(rows, cols, rng):
    """Orthonormalize a standard normal block column by column (CGS2)."""
    Q = np.zeros((rows, cols), order="F")
    G = rng.standard_normal((rows, cols))
    for j in range(cols):
        w = project_out(Q, j, G[:, j])
        Q[:, j] = w / norm2(w)
    return Q


def dense_with_spectrum(m, n, s, rng):
    """Return ``Q1 @ diag(s) @ Q2.T`` with random orthonormal ``Q1``, ``Q2``."""
    s = np.asarray(s, dtype=np.float64)
    r = min(m, n)
    if s.shape != (r,):
        raise ValueError(f"need min(m, n) = {r} singular values, got {s.shape[0]}")
    if np.any(s < 0) or np.any(np.diff(s) > 0):
        raise ValueError("singular values must be non-negative and non-increasing")
    Q1 = random_orthonormal(m, r, rng)
    Q2 = random_orthonormal(n, r, rng)
    return np.asfortranarray((Q1 * s) @ Q2.T)


def random_sparse(m, n, nnz_per_row, rng):
    """CSR matrix with ``nnz_per_row`` distinct uniform columns per row and
    standard normal values."""
    if not 0 <= nnz_per_row <= n:
        raise ValueError(f"nnz_per_row must lie in 0..{n}, got {nnz_per_row}")
    cols = np.empty((m, nnz_per_row), dtype=np.int64)
    for i in range(m):
        cols[i] = np.sort(rng.choice(n, size=nnz_per_row, replace=False))
    values = rng.standard_normal(m * nnz_per_row)
    row_ptr = np.arange(m + 1, dtype=np.int64) * nnz_per_row
    return CsrMatrix(m, n, row_ptr, cols.ravel(), values)
