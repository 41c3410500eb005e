"""Restarted truncated SVD driver.

Computes the ``k`` largest singular triplets of a sparse or dense matrix by
Lanczos bidiagonalization over a ``t``-dimensional subspace. Triplet accuracy
is judged with the cheap residual ``|beta_t * Uhat[t, j]| / sigma_j`` taken
from the projected problem; unconverged runs restart while keeping the
current ``k`` Ritz vectors as the leading basis columns.
"""

import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .dense_svd import svd_full
from .kernels import DimensionError, aslinearoperator, gemm, norm2, num_threads, project_out
from .lbp import _accept, allocate_workspace, lbp_resume, lbp_start

ZERO_RESIDUAL_ATOL = 1e-14
DENSE_FALLBACK_MAX_ELEMENTS = 10**8


class RankDeficiencyWarning(UserWarning):
    """A Ritz value is zero while its residual numerator is not."""


@dataclass
class SvdsOptions:
    """Solver parameters.

    ``t=None`` selects ``max(15, 3k)``; any ``t`` is clamped to
    ``min(m, n) - 1``. ``r`` caps the number of passes, so at most ``r - 1``
    restarts happen. ``threads=None`` keeps the current global worker count.
    ``reorthogonalize=False`` is a diagnostic switch only.
    """

    k: int
    tol: float = 1e-10
    t: int = None
    r: int = 10
    seed: int = 0
    threads: int = None
    reorthogonalize: bool = True

    def resolve_t(self, m, n):
        """Validate against an ``m x n`` matrix and return the subspace size.

        Returns ``None`` when the default subspace cannot leave room beyond
        ``k`` (tiny matrices); the caller then solves densely.
        """
        k = self.k
        if not 1 <= k <= min(m, n):
            raise ValueError(f"k must lie in 1..min(m, n) = {min(m, n)}, got {k}")
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.threads is not None and self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        t = max(15, 3 * k) if self.t is None else int(self.t)
        t = min(t, min(m, n) - 1)
        if t < k + 2:
            if self.t is not None and self.t < k + 2:
                raise ValueError(f"subspace dimension t={self.t} must be at least k + 2 = {k + 2}")
            return None
        return t


@dataclass
class SvdsResult:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    residuals: np.ndarray
    restarts: int
    converged: bool
    matvecs: int
    wall_time: float
    t: int = None
    residual_history: list = field(default_factory=list)
    breakdowns: int = 0


@dataclass
class FlopModel:
    c_mul: float = 1.0
    c_svd: float = 1.0

    def __post_init__(self):
        if self.c_mul <= 0 or self.c_svd <= 0:
            raise ValueError("flop model constants must be positive")


@dataclass
class FlopEstimate:
    total: float
    lbp_matvec: float
    lbp_reorth: float
    assembly_gemm: float
    small_svd: float
    restart: float

    def terms(self):
        d = asdict(self)
        d.pop("total")
        return d


def estimate_flops(m, n, nnz, k, t, R, model=None):
    """Operation-count model for a solve with ``R`` restarts.

    ``nnz=0`` denotes a dense matrix (``m*n`` entries). The restart term
    charges one product for the new left vector plus ``t - k`` further
    Lanczos steps, each with two products and reorthogonalization against
    ``t + k + 4`` vectors of length ``m + n``.
    """
    model = model or FlopModel()
    cm, cs = model.c_mul, model.c_svd
    nnz = nnz if nnz else m * n
    terms = dict(
        lbp_matvec=(2 * t + 1) * cm * nnz,
        lbp_reorth=(t * t + 3 * t + 1) * cm * (m + n),
        assembly_gemm=(R + 1) * cm * (m + n) * t * k,
        small_svd=(R + 1) * cs * t**3,
        restart=R * (cm * (nnz + m * k) + (t - k) * (2 * cm * nnz + (t + k + 4) * cm * (m + n))),
    )
    return FlopEstimate(total=float(sum(terms.values())), **{k_: float(v) for k_, v in terms.items()})


def predicted_matvecs(t, k, restarts):
    """Products with ``A`` or ``A.T`` a Krylov solve performs."""
    return 1 + 2 * t + restarts * (1 + 2 * (t - k))


def check_convergence(T, tsvd, k, tol):
    """Residuals ``|T[t-1, t] * Uhat[t-1, j]| / Shat[j]`` for the leading ``k``.

    ``tsvd`` is the SVD of the leading ``t x t`` block of ``T``. Returns
    ``(all_converged, residuals)``.
    """
    t = tsvd.U.shape[0]
    if k > t:
        raise DimensionError(f"k={k} exceeds the projected dimension t={t}")
    beta_t = T[t - 1, t]
    numer = np.abs(beta_t * tsvd.U[t - 1, :k])
    sigma = tsvd.S[:k]
    res = np.empty(k)
    for j in range(k):
        if sigma[j] > 0:
            res[j] = numer[j] / sigma[j]
        elif numer[j] <= ZERO_RESIDUAL_ATOL:
            res[j] = 0.0
        else:
            warnings.warn(
                f"Ritz value {j} is zero with residual numerator {numer[j]:.3e}; "
                "the matrix looks rank deficient below k",
                RankDeficiencyWarning,
                stacklevel=2,
            )
            res[j] = np.inf
    return bool(np.all(res < tol)), res


def restart(A, state, tsvd, k):
    """Keep ``k`` Ritz pairs as leading columns and prepare to resume at ``k+1``.

    After the call ``U[:, :k]``/``V[:, :k]`` hold the Ritz vectors,
    ``V[:, k]`` the previous last right vector and ``U[:, k]`` the new left
    vector ``A v - sum_j u_j beta_t Uhat[t-1, j]``, reorthogonalized. ``T`` is
    diagonal in its leading block with the coupling column in ``T[:k, k]``.
    """
    op = aslinearoperator(A)
    t = state.t
    if state.filled != t + 1:
        raise DimensionError("restart needs a completed bidiagonalization pass")
    U, V, T = state.U, state.V, state.T
    beta_t = T[t - 1, t]
    coupling = beta_t * tsvd.U[t - 1, :k]

    Ubuf = state.Ubuf[:, :k] if state.Ubuf is not None and state.Ubuf.shape[1] >= k else None
    Vbuf = state.Vbuf[:, :k] if state.Vbuf is not None and state.Vbuf.shape[1] >= k else None
    Uk = gemm(U[:, :t], tsvd.U[:, :k], out=Ubuf)
    Vk = gemm(V[:, :t], tsvd.V[:, :k], out=Vbuf)
    V[:, k] = V[:, t]
    U[:, :k] = Uk
    V[:, :k] = Vk
    U[:, k + 1 :] = 0.0
    V[:, k + 1 :] = 0.0

    w = op.matvec(V[:, k]) - U[:, :k] @ coupling
    state.matvec_count += 1
    if state.reorthogonalize:
        w = project_out(U, k, w)

    T[:] = 0.0
    T[np.arange(k), np.arange(k)] = tsvd.S[:k]
    T[:k, k] = coupling
    state.scale = max(state.scale, float(tsvd.S[0]))
    T[k, k] = _accept(state, w, U, k)
    state.filled = k + 1
    return state


def assemble(state, tsvd, k):
    """Lift the leading ``k`` singular vectors of ``T[:t, :t]`` through the bases."""
    t = state.t
    U = gemm(state.U[:, :t], tsvd.U[:, :k])
    V = gemm(state.V[:, :t], tsvd.V[:, :k])
    return U, tsvd.S[:k].copy(), V


def _dense_solve(op, opts, start):
    M = op.to_dense()
    if M.size > DENSE_FALLBACK_MAX_ELEMENTS:
        raise ValueError("matrix too large for the dense path")
    d = svd_full(M)
    k = opts.k
    U = np.asfortranarray(d.U[:, :k])
    V = np.asfortranarray(d.V[:, :k])
    S = d.S[:k].copy()
    res = np.empty(k)
    for j in range(k):
        r = norm2(M.T @ U[:, j] - S[j] * V[:, j])
        if S[j] > 0:
            res[j] = r / S[j]
        else:
            res[j] = 0.0 if r <= ZERO_RESIDUAL_ATOL else np.inf
    return SvdsResult(
        U=U,
        S=S,
        V=V,
        residuals=res,
        restarts=0,
        converged=bool(np.all(res < opts.tol)),
        matvecs=0,
        wall_time=time.perf_counter() - start,
        t=None,
        residual_history=[float(res.max())],
    )


def svds_solve(A, opts):
    """Top-``k`` singular triplets of ``A``.

    Parameters
    ----------
    A : CsrMatrix, array_like or LinearOperator
    opts : SvdsOptions

    Returns
    -------
    SvdsResult
        Always populated, also when ``converged`` is False. Matrices too small
        to leave a subspace of at least ``k + 2`` are solved by the dense
        Jacobi SVD instead (``t`` is then ``None`` and ``matvecs`` 0).
    """
    start = time.perf_counter()
    op = aslinearoperator(A)
    m, n = op.shape
    t = opts.resolve_t(m, n)
    if opts.threads is None:
        return _solve(op, opts, t, start)
    with num_threads(opts.threads):
        return _solve(op, opts, t, start)


def _solve(op, opts, t, start):
    if t is None:
        return _dense_solve(op, opts, start)
    k = opts.k
    m, n = op.shape
    state = allocate_workspace(m, n, t, k=k, seed=opts.seed)
    lbp_start(op, t, workspace=state, reorthogonalize=opts.reorthogonalize)

    history = []
    restarts = 0
    converged = False
    for _ in range(opts.r - 1):
        tsvd = svd_full(state.T[:t, :t])
        converged, res = check_convergence(state.T, tsvd, k, opts.tol)
        history.append(float(res.max()))
        if converged:
            break
        restart(op, state, tsvd, k)
        lbp_resume(op, state, k + 1)
        restarts += 1
    else:
        # loop exhausted (or r == 1): refresh factors from the final Krylov state
        tsvd = svd_full(state.T[:t, :t])
        converged, res = check_convergence(state.T, tsvd, k, opts.tol)
        history.append(float(res.max()))

    U, S, V = assemble(state, tsvd, k)
    return SvdsResult(
        U=U,
        S=S,
        V=V,
        residuals=res,
        restarts=restarts,
        converged=converged,
        matvecs=state.matvec_count,
        wall_time=time.perf_counter() - start,
        t=t,
        residual_history=history,
        breakdowns=state.breakdowns,
    )


def svds(A, k, **kwargs):
    """Shorthand for ``svds_solve(A, SvdsOptions(k, **kwargs))``."""
    return svds_solve(A, SvdsOptions(k=k, **kwargs))
