"""Matrix Market input/output, CSR interop and result documents."""

import csv
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .kernels import CsrMatrix

DENSE_MAX_ELEMENTS = 10**8


class MatrixMarketError(ValueError):
    def __init__(self, msg, lineno=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {msg}" if where else msg)
        self.lineno = lineno


def _data_lines(fh, start):
    for lineno, line in enumerate(fh, start=start):
        s = line.strip()
        if s and not s.startswith("%"):
            yield lineno, s


def read_matrix_market(path, dense_max_elements=DENSE_MAX_ELEMENTS):
    """Read a real ``coordinate`` (-> CsrMatrix) or ``array`` (-> ndarray) file.

    Duplicate coordinate entries are summed and ``symmetric`` files are
    expanded to both triangles. Errors carry the offending line number.
    """
    path = Path(path)
    with open(path) as fh:
        banner = fh.readline()
        parts = banner.split()
        if len(parts) != 5 or parts[0] != "%%MatrixMarket" or parts[1].lower() != "matrix":
            raise MatrixMarketError("malformed header; expected '%%MatrixMarket matrix ...'", 1, path)
        layout, fieldtype, symmetry = (p.lower() for p in parts[2:])
        if layout not in ("coordinate", "array"):
            raise MatrixMarketError(f"unsupported format {layout!r}", 1, path)
        if fieldtype not in ("real", "double", "integer"):
            raise MatrixMarketError(f"unsupported field {fieldtype!r}; only real matrices are read", 1, path)
        if symmetry not in ("general", "symmetric"):
            raise MatrixMarketError(f"unsupported symmetry {symmetry!r}", 1, path)
        symmetric = symmetry == "symmetric"

        lines = _data_lines(fh, 2)
        try:
            lineno, size = next(lines)
        except StopIteration:
            raise MatrixMarketError("missing size line", None, path) from None
        try:
            dims = [int(x) for x in size.split()]
        except ValueError:
            raise MatrixMarketError(f"bad size line {size!r}", lineno, path) from None

        if layout == "array":
            if len(dims) != 2:
                raise MatrixMarketError("array size line needs 'rows cols'", lineno, path)
            return _read_array(lines, *dims, symmetric, path, dense_max_elements)
        if len(dims) != 3:
            raise MatrixMarketError("coordinate size line needs 'rows cols entries'", lineno, path)
        return _read_coordinate(lines, *dims, symmetric, path)


def _read_coordinate(lines, nrows, ncols, nentries, symmetric, path):
    rows = np.empty(nentries, dtype=np.int64)
    cols = np.empty(nentries, dtype=np.int64)
    vals = np.empty(nentries)
    count = 0
    for lineno, s in lines:
        if count == nentries:
            raise MatrixMarketError("more entries than declared", lineno, path)
        tok = s.split()
        if len(tok) != 3:
            raise MatrixMarketError(f"expected 'row col value', got {s!r}", lineno, path)
        try:
            i, j, v = int(tok[0]), int(tok[1]), float(tok[2])
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry {s!r}", lineno, path) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(f"index ({i}, {j}) outside {nrows}x{ncols}", lineno, path)
        if not np.isfinite(v):
            raise MatrixMarketError(f"non-finite value {tok[2]!r}", lineno, path)
        rows[count], cols[count], vals[count] = i - 1, j - 1, v
        count += 1
    if count != nentries:
        raise MatrixMarketError(f"declared {nentries} entries, found {count}", None, path)
    if symmetric:
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return CsrMatrix.from_coo(nrows, ncols, rows, cols, vals)


def _read_array(lines, nrows, ncols, symmetric, path, dense_max_elements):
    if nrows * ncols > dense_max_elements:
        raise MatrixMarketError(
            f"dense {nrows}x{ncols} matrix has {nrows * ncols} elements, above the "
            f"limit of {dense_max_elements}",
            None,
            path,
        )
    if symmetric and nrows != ncols:
        raise MatrixMarketError("symmetric array must be square", None, path)
    expected = nrows * (nrows + 1) // 2 if symmetric else nrows * ncols
    vals = np.empty(expected)
    count = 0
    for lineno, s in lines:
        for tok in s.split():
            if count == expected:
                raise MatrixMarketError("more values than declared", lineno, path)
            try:
                v = float(tok)
            except ValueError:
                raise MatrixMarketError(f"cannot parse value {tok!r}", lineno, path) from None
            if not np.isfinite(v):
                raise MatrixMarketError(f"non-finite value {tok!r}", lineno, path)
            vals[count] = v
            count += 1
    if count != expected:
        raise MatrixMarketError(f"declared {expected} values, found {count}", None, path)
    if not symmetric:
        return vals.reshape((nrows, ncols), order="F")
    M = np.zeros((nrows, ncols), order="F")
    # lower triangle, column by column
    p = 0
    for j in range(ncols):
        M[j:, j] = vals[p : p + nrows - j]
        M[j, j:] = vals[p : p + nrows - j]
        p += nrows - j
    return M


def _fmt(v):
    return repr(float(v))


def atomic_write(path, write):
    """Call ``write(fh)`` on a temporary file, then rename it onto ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_matrix_market(path, A, comment=None):
    """Write a CsrMatrix as ``coordinate`` or a dense array as ``array``."""

    def write(fh):
        if isinstance(A, CsrMatrix):
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            if comment:
                fh.write(f"% {comment}\n")
            fh.write(f"{A.nrows} {A.ncols} {A.nnz}\n")
            rows = A.row_indices()
            for i, j, v in zip(rows, A.col_idx, A.values):
                fh.write(f"{i + 1} {j + 1} {_fmt(v)}\n")
        else:
            M = np.asarray(A, dtype=np.float64)
            fh.write("%%MatrixMarket matrix array real general\n")
            if comment:
                fh.write(f"% {comment}\n")
            fh.write(f"{M.shape[0]} {M.shape[1]}\n")
            fh.writelines(f"{_fmt(v)}\n" for v in M.ravel(order="F"))

    atomic_write(path, write)


def from_pointer_csr(nnz, nrows, ncols, values, cols, pointerB, pointerE):
    """Canonical CSR from the 1-based begin/end pointer layout.

    Row ``i`` owns the 1-based positions ``pointerB[i] .. pointerE[i] - 1`` of
    ``values``/``cols``; entries falling between one row's end and the next
    row's begin are ignored.
    """
    values = np.asarray(values, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.int64)
    pointerB = np.asarray(pointerB, dtype=np.int64)
    pointerE = np.asarray(pointerE, dtype=np.int64)
    if values.shape != (nnz,) or cols.shape != (nnz,):
        raise ValueError(f"values and cols must have length nnz = {nnz}")
    if pointerB.shape != (nrows,) or pointerE.shape != (nrows,):
        raise ValueError(f"pointerB and pointerE must have length nrows = {nrows}")
    rows_out, cols_out, vals_out = [], [], []
    for i in range(nrows):
        b, e = pointerB[i], pointerE[i]
        if b < 1 or e < b or e - 1 > nnz:
            raise ValueError(f"row {i}: inconsistent pointers pointerB={b}, pointerE={e} (nnz={nnz})")
        c = cols[b - 1 : e - 1]
        if c.size and (c.min() < 1 or c.max() > ncols):
            raise ValueError(f"row {i}: column index outside 1..{ncols}")
        rows_out.append(np.full(c.size, i, dtype=np.int64))
        cols_out.append(c - 1)
        vals_out.append(values[b - 1 : e - 1])
    cat = lambda parts, dt: np.concatenate(parts) if parts else np.empty(0, dtype=dt)  # noqa: E731
    return CsrMatrix.from_coo(
        nrows, ncols, cat(rows_out, np.int64), cat(cols_out, np.int64), cat(vals_out, np.float64)
    )


@dataclass
class ResultDocument:
    matrix_name: str
    m: int
    n: int
    nnz: int
    options: dict
    singular_values: list
    residuals: list
    restarts: int
    converged: bool
    matvecs: int
    wall_time_seconds: float
    threads: int
    factors: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.singular_values) != len(self.residuals):
            raise ValueError("singular_values and residuals must have equal length")
        s = self.singular_values
        if any(a < b for a, b in zip(s, s[1:])):
            raise ValueError("singular values must be in descending order")


def result_document(result, opts, matrix_name, shape, nnz, threads, timing=True):
    """Populate a :class:`ResultDocument` from an ``SvdsResult``."""
    options = asdict(opts)
    options["t"] = result.t
    return ResultDocument(
        matrix_name=matrix_name,
        m=int(shape[0]),
        n=int(shape[1]),
        nnz=int(nnz),
        options=options,
        singular_values=[float(v) for v in result.S],
        residuals=[float(v) for v in result.residuals],
        restarts=int(result.restarts),
        converged=bool(result.converged),
        matvecs=int(result.matvecs),
        wall_time_seconds=float(result.wall_time) if timing else None,
        threads=int(threads),
    )


def write_result(doc, path, format="json"):
    """Write ``doc`` as JSON (full document) or CSV (index, sigma, residual)."""
    if format == "json":
        atomic_write(path, lambda fh: fh.write(json.dumps(asdict(doc), indent=2) + "\n"))
    elif format == "csv":

        def write(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "sigma", "residual"])
            for i, (s, r) in enumerate(zip(doc.singular_values, doc.residuals), start=1):
                w.writerow([i, f"{s:.17g}", f"{r:.17g}"])

        atomic_write(path, write)
    else:
        raise ValueError(f"unknown result format {format!r}; expected 'json' or 'csv'")


def read_result(path):
    with open(path) as fh:
        return ResultDocument(**json.load(fh))


def read_result_csv(path):
    """Return ``(singular_values, residuals)`` from a CSV result."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return (
        np.array([float(r["sigma"]) for r in rows]),
        np.array([float(r["residual"]) for r in rows]),
    )
