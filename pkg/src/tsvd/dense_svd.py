"""Full SVD of small dense matrices by one-sided (Hestenes) Jacobi rotations.

Used for the projected matrix inside the restarted Lanczos driver and as the
brute-force reference for whole-matrix checks.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .kernels import as_dense

MAX_SWEEPS = 50
ORTH_TOL = 1e-15
# columns below this fraction of eps * ||M||_F are numerically zero
NOISE_FLOOR = 1e-2


class JacobiConvergenceError(RuntimeError):
    def __init__(self, sweeps, off):
        super().__init__(
            f"one-sided Jacobi did not converge after {sweeps} sweeps "
            f"(largest relative off-diagonal Gram entry {off:.3e})"
        )
        self.sweeps = sweeps
        self.off = off


@dataclass
class SmallSvd:
    """``M = U[:, :r] @ diag(S) @ V[:, :r].T`` with ``r = min(p, q)``.

    ``U`` is ``p x p`` and ``V`` is ``q x q``, both orthonormal; ``S`` is
    non-negative and sorted in descending order.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    sweeps: int = 0


@njit(cache=True)
def _jacobi_sweeps(W, V, tol, floor2, max_sweeps):
    # Returns (sweeps used, last largest relative off-diagonal); sweeps < 0
    # signals non-convergence. Columns with squared norm <= floor2 are noise
    # and are not rotated.
    p, q = W.shape
    off = 0.0
    norms = np.empty(q)
    for sweep in range(max_sweeps):
        off = 0.0
        # squared column norms are refreshed every sweep and updated per rotation
        for j in range(q):
            s = 0.0
            for r in range(p):
                s += W[r, j] * W[r, j]
            norms[j] = s
        for i in range(q - 1):
            for j in range(i + 1, q):
                a = norms[i]
                b = norms[j]
                if a <= floor2 or b <= floor2:
                    continue
                c = 0.0
                for r in range(p):
                    c += W[r, i] * W[r, j]
                rel = abs(c) / np.sqrt(a * b)
                if rel > off:
                    off = rel
                if rel <= tol:
                    continue
                zeta = (b - a) / (2.0 * c)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + np.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + np.sqrt(1.0 + zeta * zeta))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = cs * t
                for r in range(p):
                    wi = W[r, i]
                    wj = W[r, j]
                    W[r, i] = cs * wi - sn * wj
                    W[r, j] = sn * wi + cs * wj
                for r in range(q):
                    vi = V[r, i]
                    vj = V[r, j]
                    V[r, i] = cs * vi - sn * vj
                    V[r, j] = sn * vi + cs * vj
                norms[i] = max(a - t * c, 0.0)
                norms[j] = b + t * c
        if off <= tol:
            return sweep + 1, off
    return -max_sweeps, off


def _complete_basis(Q, ncols_valid):
    """Fill columns ``ncols_valid:`` of ``Q`` with an orthonormal complement."""
    p = Q.shape[0]
    k = ncols_valid
    candidate = 0
    while k < Q.shape[1]:
        # cycle through coordinate vectors; each pass keeps the best-conditioned one
        best, best_norm = None, 0.0
        for e in range(candidate, candidate + p):
            w = np.zeros(p)
            w[e % p] = 1.0
            for _ in range(2):
                w -= Q[:, :k] @ (Q[:, :k].T @ w)
            nrm = np.linalg.norm(w)
            if nrm > 0.5:
                best, best_norm, candidate = w, nrm, e + 1
                break
            if nrm > best_norm:
                best, best_norm = w, nrm
        Q[:, k] = best / best_norm
        k += 1


def _fix_signs(U, V, r):
    idx = np.argmax(np.abs(U), axis=0)
    flip = U[idx, np.arange(U.shape[1])] < 0
    U[:, flip] *= -1.0
    flip_v = np.zeros(V.shape[1], dtype=bool)
    flip_v[:r] = flip[:r]
    V[:, flip_v] *= -1.0


def svd_full(M, tol=None, max_sweeps=MAX_SWEEPS):
    """Singular value decomposition of a small dense matrix.

    Parameters
    ----------
    M : array_like, shape (p, q)
        Finite real matrix, intended for sides up to about a thousand.
    tol : float, optional
        Relative orthogonality threshold ``|w_i . w_j| <= tol * |w_i| |w_j|``
        between rotated columns. Defaults to ``max(1e-15, sqrt(p) * eps)``.
    max_sweeps : int
        Raise :class:`JacobiConvergenceError` when exceeded.

    Returns
    -------
    SmallSvd
        Full orthonormal ``U`` (p x p) and ``V`` (q x q), descending ``S``.
        Each left singular vector has a non-negative largest-magnitude entry.
    """
    M = as_dense(M)
    p, q = M.shape
    transposed = p < q
    W = np.array(M.T if transposed else M, order="F")
    rows, cols = W.shape
    if tol is None:
        tol = max(ORTH_TOL, np.sqrt(rows) * np.finfo(float).eps)
    floor = NOISE_FLOOR * np.finfo(float).eps * np.linalg.norm(W)
    Vw = np.eye(cols, order="F")
    sweeps = 0
    if cols > 1:
        sweeps, off = _jacobi_sweeps(W, Vw, tol, floor * floor, max_sweeps)
        if sweeps < 0:
            raise JacobiConvergenceError(-sweeps, off)

    S = np.sqrt(np.einsum("ij,ij->j", W, W))
    order = np.argsort(-S, kind="stable")
    S = S[order]
    W = W[:, order]
    Vw = np.asfortranarray(Vw[:, order])

    Uw = np.zeros((rows, rows), order="F")
    # numerically zero columns get no direction from W
    nonzero = int(np.count_nonzero(S > max(floor, np.finfo(float).tiny)))
    Uw[:, :nonzero] = W[:, :nonzero] / S[:nonzero]
    if nonzero < rows:
        _complete_basis(Uw, nonzero)
    S[nonzero:] = 0.0

    if transposed:
        U, V = Vw, Uw
    else:
        U, V = Uw, Vw
    _fix_signs(U, V, min(p, q))
    return SmallSvd(U=U, S=S, V=V, sweeps=sweeps)


def singular_values(M):
    return svd_full(M).S
