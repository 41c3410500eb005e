"""Command-line harness: ``decompose``, ``gen``, ``verify`` and ``bench``.

Exit codes: 0 success, 1 error (usage, I/O, dimension), 2 when a result was
produced but did not meet its tolerance.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import matgen
from .io import (
    MatrixMarketError,
    atomic_write,
    read_matrix_market,
    read_result,
    result_document,
    write_matrix_market,
    write_result,
)
from .kernels import LinearOperator, default_num_threads
from .svds import SvdsOptions, estimate_flops, svds_solve

log = logging.getLogger("tsvd")

EXIT_OK, EXIT_ERROR, EXIT_UNCONVERGED = 0, 1, 2


class UsageError(Exception):
    pass


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _thread_list(s):
    try:
        vals = [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad thread list {s!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"thread counts must be positive, got {s!r}")
    return vals


def _add_solver_flags(p):
    p.add_argument("--k", type=int, required=True, help="number of singular triplets")
    p.add_argument("--tol", type=float, default=1e-10, help="relative residual tolerance")
    p.add_argument("--subspace", type=int, default=None, help="subspace dimension t (default max(15, 3k))")
    p.add_argument("--restarts", type=int, default=10, help="restart cap r")
    p.add_argument("--seed", type=int, default=0)


def _add_generator_flags(p):
    p.add_argument("--pattern", choices=["decay1", "decay2", "decay3"])
    p.add_argument("--sparse", action="store_true", help="random sparse matrix instead of a decay pattern")
    p.add_argument("--rows", type=_positive_int)
    p.add_argument("--cols", type=_positive_int)
    p.add_argument("--nnz-per-row", type=int, default=5)


def build_parser():
    parser = argparse.ArgumentParser(prog="tsvd", description="Truncated SVD by restarted Lanczos bidiagonalization.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="compute the top-k singular triplets of a matrix file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="result file (default: JSON on stdout)")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--threads", type=_positive_int, default=None)
    p.add_argument("--save-factors", action="store_true", help="also write U and V as Matrix Market arrays")
    p.add_argument("--no-timing", action="store_true", help="omit wall time so repeated runs are byte-identical")
    _add_solver_flags(p)

    p = sub.add_parser("gen", help="write a synthetic test matrix")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_generator_flags(p)

    p = sub.add_parser("verify", help="recheck a result document against its matrix")
    p.add_argument("--input", required=True, help="matrix file")
    p.add_argument("--result", required=True, help="JSON result written with --save-factors")
    p.add_argument("--check-tol", type=float, default=1e-8)

    p = sub.add_parser("bench", help="time decompose across thread counts")
    p.add_argument("--input", help="matrix file; otherwise a generator is used")
    p.add_argument("--output", help="CSV file (default: stdout)")
    p.add_argument("--threads", type=_thread_list, default=None, help="comma-separated thread counts")
    p.add_argument("--gen-seed", type=int, default=0, help="seed for the generated matrix")
    _add_solver_flags(p)
    _add_generator_flags(p)
    return parser


def _options(args, threads):
    if args.k < 1:
        raise UsageError(f"--k must be >= 1, got {args.k}")
    if args.tol <= 0:
        raise UsageError(f"--tol must be positive, got {args.tol}")
    if args.restarts < 1:
        raise UsageError(f"--restarts must be >= 1, got {args.restarts}")
    return SvdsOptions(k=args.k, tol=args.tol, t=args.subspace, r=args.restarts, seed=args.seed, threads=threads)


def _generate(args, seed):
    if args.rows is None or args.cols is None:
        raise UsageError("--rows and --cols are required to generate a matrix")
    rng = np.random.default_rng(seed)
    if args.sparse:
        if args.pattern:
            raise UsageError("--sparse and --pattern are mutually exclusive")
        if not 0 <= args.nnz_per_row <= args.cols:
            raise UsageError(f"--nnz-per-row must lie in 0..{args.cols}")
        return matgen.random_sparse(args.rows, args.cols, args.nnz_per_row, rng), f"sparse_{args.rows}x{args.cols}"
    if not args.pattern:
        raise UsageError("one of --pattern or --sparse is required")
    s = matgen.spectrum(args.pattern, min(args.rows, args.cols))
    A = matgen.dense_with_spectrum(args.rows, args.cols, s, rng)
    return A, f"{args.pattern}_{args.rows}x{args.cols}"


def cmd_decompose(args):
    threads = args.threads or default_num_threads()
    opts = _options(args, threads)
    if args.save_factors and not args.output:
        raise UsageError("--save-factors needs --output")
    A = read_matrix_market(args.input)
    op = LinearOperator(A)
    result = svds_solve(op, opts)
    doc = result_document(
        result, opts, Path(args.input).name, op.shape, op.matrix.nnz if op.sparse else 0, threads,
        timing=not args.no_timing,
    )
    if args.save_factors:
        out = Path(args.output)
        for name, F in (("U", result.U), ("V", result.V)):
            fpath = out.with_name(f"{out.stem}.{name}.mtx")
            write_matrix_market(fpath, F)
            doc.factors[name] = fpath.name
    if args.output:
        write_result(doc, args.output, args.format)
    elif args.format == "json":
        sys.stdout.write(json.dumps(asdict(doc), indent=2) + "\n")
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["index", "sigma", "residual"])
        for i, (s, r) in enumerate(zip(doc.singular_values, doc.residuals), start=1):
            w.writerow([i, f"{s:.17g}", f"{r:.17g}"])
    log.info("k=%d converged=%s restarts=%d matvecs=%d", opts.k, result.converged, result.restarts, result.matvecs)
    return EXIT_OK if result.converged else EXIT_UNCONVERGED


def cmd_gen(args):
    A, name = _generate(args, args.seed)
    write_matrix_market(args.output, A, comment=f"{name} seed={args.seed}")
    return EXIT_OK


def triplet_residuals(A, U, S, V):
    """Per triplet ``(|A v - s u| / s, |A^T u - s v| / s)``."""
    op = LinearOperator(A)
    out = []
    for j, s in enumerate(S):
        r1 = np.linalg.norm(op.matvec(V[:, j]) - s * U[:, j])
        r2 = np.linalg.norm(op.rmatvec(U[:, j]) - s * V[:, j])
        out.append((r1 / s, r2 / s) if s > 0 else (r1, r2))
    return np.array(out).reshape(-1, 2)


def cmd_verify(args):
    A = read_matrix_market(args.input)
    doc = read_result(args.result)
    if "U" not in doc.factors or "V" not in doc.factors:
        raise UsageError("result document has no stored factors; rerun decompose with --save-factors")
    base = Path(args.result).parent
    U = np.asarray(read_matrix_market(base / doc.factors["U"]))
    V = np.asarray(read_matrix_market(base / doc.factors["V"]))
    m, n = A.shape
    k = len(doc.singular_values)
    if (doc.m, doc.n) != (m, n) or U.shape != (m, k) or V.shape != (n, k):
        raise UsageError(
            f"dimension mismatch: matrix is {m}x{n}, result describes {doc.m}x{doc.n} "
            f"with U {U.shape} and V {V.shape}"
        )
    res = triplet_residuals(A, U, np.asarray(doc.singular_values), V)
    worst = float(res.max()) if res.size else 0.0
    print(f"max relative residual {worst:.3e} (check tol {args.check_tol:.1e})")
    return EXIT_OK if worst <= args.check_tol else EXIT_UNCONVERGED


BENCH_COLUMNS = ["threads", "wall_time_seconds", "matvecs", "restarts", "max_residual", "converged", "flops_estimate"]


def cmd_bench(args):
    if args.input:
        A = read_matrix_market(args.input)
    else:
        A, _ = _generate(args, args.gen_seed)
    op = LinearOperator(A)
    m, n = op.shape
    thread_counts = args.threads or [default_num_threads()]
    rows = []
    for threads in thread_counts:
        opts = _options(args, threads)
        result = svds_solve(op, opts)
        t = result.t if result.t is not None else 0
        flops = estimate_flops(m, n, op.matrix.nnz if op.sparse else 0, opts.k, t, result.restarts).total
        row = [
            threads,
            f"{result.wall_time:.6f}",
            result.matvecs,
            result.restarts,
            f"{float(result.residuals.max()):.17g}",
            int(result.converged),
            f"{flops:.17g}",
        ]
        row += [f"{s:.17g}" for s in result.S]
        rows.append(row)
        log.info("threads=%d time=%.3fs", threads, result.wall_time)

    header = BENCH_COLUMNS + [f"sigma_{j + 1}" for j in range(args.k)]

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)

    if args.output:
        atomic_write(args.output, write)
    else:
        write(sys.stdout)
    return EXIT_OK


COMMANDS = {"decompose": cmd_decompose, "gen": cmd_gen, "verify": cmd_verify, "bench": cmd_bench}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors; 2 is reserved for "unconverged"
        return EXIT_OK if e.code == 0 else EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, MatrixMarketError, ValueError, OSError) as e:
        print(f"tsvd {args.command}: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
