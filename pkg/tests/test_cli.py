import csv
import json

import numpy as np
import pytest

from tsvd.cli import main, triplet_residuals
from tsvd.io import read_matrix_market, read_result
from tsvd.matgen import spectrum
from tsvd.svds import estimate_flops


@pytest.fixture(scope="module")
def decay2_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("m") / "decay2_500.mtx"
    assert main(["gen", "--pattern", "decay2", "--rows", "500", "--cols", "400", "--seed", "1", "--output", str(p)]) == 0
    return p


def test_decompose_identity(tmp_path):
    p = tmp_path / "id3.mtx"
    p.write_text("%%MatrixMarket matrix coordinate real general\n3 3 3\n1 1 1\n2 2 1\n3 3 1\n")
    out = tmp_path / "r.json"
    assert main(["decompose", "--input", str(p), "--k", "1", "--output", str(out)]) == 0
    doc = read_result(out)
    assert doc.singular_values == [1.0] and doc.converged


def test_decompose_decay2(decay2_file, tmp_path):
    out = tmp_path / "r.json"
    assert main(["decompose", "--input", str(decay2_file), "--k", "10", "--output", str(out)]) == 0
    doc = read_result(out)
    assert max(doc.residuals) < 1e-10
    np.testing.assert_allclose(doc.singular_values, spectrum("decay2", 10), rtol=1e-8)


def test_decompose_csv_stdout(decay2_file, capsys):
    assert main(["decompose", "--input", str(decay2_file), "--k", "3", "--format", "csv"]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert [int(r["index"]) for r in rows] == [1, 2, 3]


@pytest.mark.parametrize(
    "extra",
    [["--k", "0"], ["--k", "3", "--tol", "-1"], ["--k", "999"], ["--k", "3", "--subspace", "4"], ["--bogus"]],
)
def test_decompose_bad_arguments(decay2_file, extra, capsys):
    assert main(["decompose", "--input", str(decay2_file)] + extra) == 1


def test_missing_input(tmp_path):
    assert main(["decompose", "--input", str(tmp_path / "nope.mtx"), "--k", "1"]) == 1


def test_unconverged_exit_code(decay2_file, tmp_path):
    args = ["decompose", "--input", str(decay2_file), "--k", "10", "--subspace", "12", "--restarts", "1"]
    assert main(args + ["--tol", "1e-15", "--output", str(tmp_path / "r.json")]) == 2
    assert read_result(tmp_path / "r.json").converged is False


def test_gen_deterministic(tmp_path):
    a, b = tmp_path / "a.mtx", tmp_path / "b.mtx"
    for p in (a, b):
        assert main(["gen", "--pattern", "decay3", "--rows", "40", "--cols", "30", "--seed", "9", "--output", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.mtx"
    main(["gen", "--pattern", "decay3", "--rows", "40", "--cols", "30", "--seed", "10", "--output", str(c)])
    assert c.read_bytes() != a.read_bytes()


def test_gen_spectrum(tmp_path):
    p = tmp_path / "g.mtx"
    assert main(["gen", "--pattern", "decay2", "--rows", "200", "--cols", "150", "--seed", "4", "--output", str(p)]) == 0
    s = np.linalg.svd(read_matrix_market(p), compute_uv=False)
    # absolute agreement relative to sigma_1 = 1
    assert np.max(np.abs(s - spectrum("decay2", 150))) <= 1e-12


def test_gen_sparse(tmp_path):
    p = tmp_path / "s.mtx"
    assert main(["gen", "--sparse", "--rows", "1000", "--cols", "800", "--nnz-per-row", "5", "--output", str(p)]) == 0
    A = read_matrix_market(p)
    assert A.shape == (1000, 800) and A.nnz == 5000


@pytest.mark.parametrize(
    "args",
    [["--rows", "5", "--cols", "5"], ["--pattern", "decay1"], ["--sparse", "--pattern", "decay1", "--rows", "3", "--cols", "3"]],
)
def test_gen_bad_arguments(tmp_path, args):
    assert main(["gen", "--output", str(tmp_path / "x.mtx")] + args) == 1


class TestVerify:
    @pytest.fixture()
    def solved(self, decay2_file, tmp_path):
        out = tmp_path / "r.json"
        assert main(["decompose", "--input", str(decay2_file), "--k", "5", "--output", str(out), "--save-factors"]) == 0
        return out

    def test_ok(self, decay2_file, solved, capsys):
        assert main(["verify", "--input", str(decay2_file), "--result", str(solved)]) == 0
        assert "max relative residual" in capsys.readouterr().out
        doc = read_result(solved)
        U = read_matrix_market(solved.parent / doc.factors["U"])
        V = read_matrix_market(solved.parent / doc.factors["V"])
        assert triplet_residuals(read_matrix_market(decay2_file), U, doc.singular_values, V).max() < 1e-8

    def test_tampered(self, decay2_file, solved):
        data = json.loads(solved.read_text())
        data["singular_values"] = [s * 1.01 for s in data["singular_values"]]
        solved.write_text(json.dumps(data))
        assert main(["verify", "--input", str(decay2_file), "--result", str(solved)]) == 2

    def test_dimension_mismatch(self, solved, tmp_path):
        other = tmp_path / "o.mtx"
        main(["gen", "--pattern", "decay2", "--rows", "300", "--cols", "400", "--output", str(other)])
        assert main(["verify", "--input", str(other), "--result", str(solved)]) == 1

    def test_missing_factors(self, decay2_file, tmp_path):
        out = tmp_path / "plain.json"
        main(["decompose", "--input", str(decay2_file), "--k", "2", "--output", str(out)])
        assert main(["verify", "--input", str(decay2_file), "--result", str(out)]) == 1


def test_bench(tmp_path):
    out = tmp_path / "b.csv"
    args = ["bench", "--pattern", "decay2", "--rows", "300", "--cols", "200", "--k", "6", "--threads", "1,2,4", "--output", str(out)]
    assert main(args) == 0
    rows = list(csv.DictReader(out.open()))
    assert [int(r["threads"]) for r in rows] == [1, 2, 4]
    sig = np.array([[float(r[f"sigma_{j}"]) for j in range(1, 7)] for r in rows])
    np.testing.assert_allclose(sig[1:], np.broadcast_to(sig[0], (2, 6)), rtol=1e-8)
    for r in rows:
        assert float(r["flops_estimate"]) == estimate_flops(300, 200, 0, 6, 18, int(r["restarts"])).total

    again = tmp_path / "b2.csv"
    main(args[:-4] + ["--threads", "1", "--output", str(again)])
    r0 = next(csv.DictReader(again.open()))
    assert (r0["matvecs"], r0["restarts"]) == (rows[0]["matvecs"], rows[0]["restarts"])


def test_bench_bad_threads(tmp_path):
    assert main(["bench", "--pattern", "decay2", "--rows", "50", "--cols", "40", "--k", "2", "--threads", "0,2"]) == 1


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
