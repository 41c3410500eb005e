"""Lanczos bidiagonalization with full reorthogonalization.

The process builds orthonormal ``U`` and ``V`` and an upper bidiagonal ``T``
with ``A V[:, :j] = U[:, :j] T[:j, :j]`` for the filled columns. A state can be
resumed at any column index, which the restarted driver uses after it has
replaced the leading columns by Ritz vectors.
"""

from dataclasses import dataclass, field

import numpy as np

from .kernels import DimensionError, aslinearoperator, norm2, project_out

BREAKDOWN_RTOL = 1e-14


@dataclass
class LbpState:
    """Preallocated workspace and progress of one bidiagonalization.

    ``U`` is ``m x (t+1)``, ``V`` is ``n x (t+1)`` and ``T`` is
    ``(t+1) x (t+1)``; only the first ``filled`` columns of the bases are
    meaningful. ``Ubuf``/``Vbuf`` are scratch blocks for the restart product.
    """

    U: np.ndarray
    V: np.ndarray
    T: np.ndarray
    t: int
    rng: np.random.Generator
    filled: int = 0
    matvec_count: int = 0
    scale: float = 0.0
    breakdowns: int = 0
    reorthogonalize: bool = True
    Ubuf: np.ndarray = field(default=None, repr=False)
    Vbuf: np.ndarray = field(default=None, repr=False)

    @property
    def beta_t(self):
        return float(self.T[self.t - 1, self.t])

    def breakdown_threshold(self):
        return BREAKDOWN_RTOL * (self.scale if self.scale > 0 else 1.0)


def allocate_workspace(m, n, t, k=None, rng=None, seed=0):
    """Allocate every array one solve needs, once."""
    if t < 1 or t + 1 > min(m, n):
        raise DimensionError(f"need 1 <= t and t+1 <= min(m, n) = {min(m, n)}, got t={t}")
    k = t if k is None else k
    return LbpState(
        U=np.zeros((m, t + 1), order="F"),
        V=np.zeros((n, t + 1), order="F"),
        T=np.zeros((t + 1, t + 1), order="F"),
        t=t,
        rng=np.random.default_rng(seed) if rng is None else rng,
        Ubuf=np.zeros((m, k), order="F"),
        Vbuf=np.zeros((n, k), order="F"),
    )


def _replacement(state, basis, ncols):
    # random unit vector orthogonal to the filled columns
    w = state.rng.standard_normal(basis.shape[0])
    w = project_out(basis, ncols, w)
    return w / norm2(w)


def _accept(state, w, basis, col):
    """Normalize ``w`` into ``basis[:, col]``; returns the norm stored in T."""
    nrm = norm2(w)
    if nrm <= state.breakdown_threshold():
        state.breakdowns += 1
        basis[:, col] = _replacement(state, basis, col)
        return 0.0
    basis[:, col] = w / nrm
    state.scale = max(state.scale, nrm)
    return nrm


def _orthogonalize(state, basis, ncols, w):
    if state.reorthogonalize:
        return project_out(basis, ncols, w)
    return w


def _steps(op, state, start):
    U, V, T = state.U, state.V, state.T
    for c in range(start - 1, state.t):
        # c is the 0-based column of the current pair (u_i, v_i)
        w = op.rmatvec(U[:, c]) - T[c, c] * V[:, c]
        state.matvec_count += 1
        w = _orthogonalize(state, V, c + 1, w)
        beta = _accept(state, w, V, c + 1)
        T[c, c + 1] = beta

        w = op.matvec(V[:, c + 1]) - beta * U[:, c]
        state.matvec_count += 1
        w = _orthogonalize(state, U, c + 1, w)
        T[c + 1, c + 1] = _accept(state, w, U, c + 1)
        state.filled = c + 2
    return state


def lbp_start(A, t, rng=None, workspace=None, reorthogonalize=True):
    """Run a fresh bidiagonalization filling ``t+1`` basis pairs.

    ``A`` is a :class:`~tsvd.kernels.CsrMatrix`, a dense array or a
    :class:`~tsvd.kernels.LinearOperator`. The start vector is standard
    normal from ``rng``. Uses ``1 + 2t`` products with ``A`` or ``A.T``.
    """
    op = aslinearoperator(A)
    m, n = op.shape
    if workspace is None:
        state = allocate_workspace(m, n, t, rng=rng)
    else:
        state = workspace
        if state.t != t or state.U.shape[0] != m or state.V.shape[0] != n:
            raise DimensionError("workspace does not match the matrix and t")
        if rng is not None:
            state.rng = rng
        state.U[:] = 0.0
        state.V[:] = 0.0
        state.T[:] = 0.0
        state.filled = 0
        state.matvec_count = 0
        state.scale = 0.0
        state.breakdowns = 0
    state.reorthogonalize = reorthogonalize

    v = state.rng.standard_normal(n)
    state.V[:, 0] = v / norm2(v)
    w = op.matvec(state.V[:, 0])
    state.matvec_count += 1
    state.T[0, 0] = _accept(state, w, state.U, 0)
    state.filled = 1
    return _steps(op, state, 1)


def lbp_resume(A, state, start_index):
    """Continue the recurrence from (1-based) iteration ``start_index`` to ``t``.

    ``state`` must hold ``start_index`` valid columns in ``U`` and ``V`` and
    the matching entries of ``T``. New vectors are reorthogonalized against
    everything already filled, including preserved Ritz vectors.
    """
    op = aslinearoperator(A)
    if state.filled != start_index:
        raise DimensionError(
            f"state has {state.filled} filled columns, cannot resume at iteration {start_index}"
        )
    if not 1 <= start_index <= state.t:
        raise DimensionError(f"start_index must lie in 1..{state.t}, got {start_index}")
    return _steps(op, state, start_index)


def orthogonality_error(Q):
    """``max |Q^T Q - I|`` over the given columns."""
    return float(np.abs(Q.T @ Q - np.eye(Q.shape[1])).max()) if Q.shape[1] else 0.0
