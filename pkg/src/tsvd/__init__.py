"""Truncated SVD of sparse and dense matrices by Lanczos bidiagonalization
with full reorthogonalization and augmented restarting."""

from .dense_svd import SmallSvd, svd_full
from .kernels import CsrMatrix, LinearOperator, get_num_threads, num_threads, set_num_threads
from .lbp import LbpState, lbp_resume, lbp_start
from .svds import FlopModel, SvdsOptions, SvdsResult, estimate_flops, predicted_matvecs, svds, svds_solve

__all__ = [
    "CsrMatrix",
    "FlopModel",
    "LbpState",
    "LinearOperator",
    "SmallSvd",
    "SvdsOptions",
    "SvdsResult",
    "estimate_flops",
    "get_num_threads",
    "lbp_resume",
    "lbp_start",
    "num_threads",
    "predicted_matvecs",
    "set_num_threads",
    "svd_full",
    "svds",
    "svds_solve",
]
