import numpy as np
import pytest

from dpchi2._validation import DataError
from dpchi2.cli import main, read_histogram, read_table
from dpchi2.gof import zcdp_gof_test
from dpchi2.randnoise import RngStream


@pytest.fixture
def hist(tmp_path):
    path = tmp_path / "hist.csv"
    path.write_text("# counts\n5000\n1650\n1700\n1650\n")
    return path


@pytest.fixture
def table(tmp_path):
    path = tmp_path / "table.csv"
    path.write_text("3400,3300\n1700,1600\n")
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_read_histogram(tmp_path):
    path = tmp_path / "h"
    path.write_text("3\n5\n2\n")
    assert read_histogram(path).tolist() == [3, 5, 2]


@pytest.mark.parametrize("text, needle", [
    ("", "no counts"),
    ("3\nx\n2\n", ":2:"),
    ("3\n-1\n", ":2:"),
    ("3\n2.5\n", ":2:"),
])
def test_read_histogram_errors(tmp_path, text, needle):
    path = tmp_path / "h"
    path.write_text(text)
    with pytest.raises(DataError, match=needle):
        read_histogram(path)


def test_read_table(tmp_path):
    path = tmp_path / "t"
    path.write_text("# header\n1,2,3\n4,5,6\n")
    assert read_table(path).tolist() == [[1, 2, 3], [4, 5, 6]]
    path.write_text("1,2\n3\n")
    with pytest.raises(DataError, match=":2:"):
        read_table(path)
    path.write_text("# nothing\n")
    with pytest.raises(DataError):
        read_table(path)


def test_gof_example_line(hist, capsys):
    code, out, err = run(["test-gof", "--null", "0.5,0.1667,0.1667,0.1667", "--rho", "0.001",
                          "--alpha", "0.05", "--stat", "proj", "--seed", "7", hist], capsys)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 1
    decision, stat, thr, df = lines[0].split(",")
    assert decision in ("Reject", "FailToReject", "Inconclusive")
    assert df == "3"
    # the CLI renormalizes a null that sums to 1 within 1e-3
    null = np.array([0.5, 0.1667, 0.1667, 0.1667]) / 1.0001
    ref = zcdp_gof_test([5000, 1650, 1700, 1650], 0.001, 0.05, null, rng=RngStream(7))
    assert float(stat) == pytest.approx(ref.statistic.value, rel=1e-8)


def test_gof_mc_and_classical(hist, capsys):
    code, out, _ = run(["test-gof", "--null", "0.5,0.1667,0.1667,0.1667", "--epsilon", "0.0447",
                        hist], capsys)
    assert code == 0 and out.strip().endswith(",59")
    code, out, _ = run(["test-gof", "--null", "0.5,0.1667,0.1667,0.1667", "--stat", "classical",
                        hist], capsys)
    assert code == 0 and out.count("\n") == 1


def test_usage_errors(hist, capsys):
    base = ["test-gof", "--null", "0.5,0.5", hist]
    assert run(base + ["--alpha", "1.5"], capsys)[0] == 1
    assert run(base + ["--bogus"], capsys)[0] == 1
    assert run(base + ["--rho", "0.1", "--epsilon", "0.1"], capsys)[0] == 1
    assert run(base + ["--stat", "weird"], capsys)[0] == 1
    assert run(["test-gof", hist], capsys)[0] == 1
    assert run([], capsys)[0] == 1


def test_data_errors(hist, tmp_path, capsys):
    assert run(["test-gof", "--null", "0.5,0.5", hist], capsys)[0] == 2
    assert run(["test-gof", "--null", "0.5,0.5", tmp_path / "missing"], capsys)[0] == 2
    bad = tmp_path / "bad"
    bad.write_text("1\n-4\n")
    code, out, err = run(["test-gof", "--null", "0.5,0.5", bad], capsys)
    assert code == 2 and out == "" and ":2:" in err


def test_help_lists_flags(capsys):
    code = main(["simulate", "--help"])
    help_text = capsys.readouterr().out
    for flag in ("--rho", "--epsilon", "--alpha", "--stat", "--mc-samples", "--seed", "--trials",
                 "--n-grid", "--noise-variance", "--workers", "--preset", "--out"):
        assert flag in help_text
    assert code == 0


def test_indep_and_gwas(table, tmp_path, capsys):
    code, out, _ = run(["test-indep", table], capsys)
    assert code == 0 and out.strip().endswith(",1")
    gwas = tmp_path / "gwas.csv"
    gwas.write_text("100,80\n60,70\n40,50\n")
    code, out, _ = run(["test-gwas", gwas], capsys)
    assert code == 0 and out.strip().endswith(",2")
    assert run(["test-gwas", "--epsilon", "0.1", gwas], capsys)[0] == 1
    assert run(["test-gwas", table], capsys)[0] == 2


def test_simulate_stdout_and_file(tmp_path, capsys):
    code, out, err = run(["simulate", "--preset", "gof-power-paper", "--trials", "5",
                          "--n-grid", "1000,2000"], capsys)
    assert code == 0
    assert out.splitlines()[0].startswith("n,trials,rejections")
    assert len(out.splitlines()) == 3
    assert "n=1000" in err
    dest = tmp_path / "out.csv"
    code, out, _ = run(["simulate", "--test", "zcdp-indep", "--null", "0.6,0.4;0.5,0.5",
                        "--n-grid", "3000", "--trials", "4", "--out", dest], capsys)
    assert code == 0 and out == ""
    assert dest.read_text().count("\n") == 2


def test_simulate_budget_routing(capsys):
    assert run(["simulate", "--preset", "mc-gof-power-paper", "--rho", "0.001", "--trials", "2"],
               capsys)[0] == 1
    assert run(["simulate", "--preset", "gof-power-paper", "--epsilon", "0.04", "--trials", "2"],
               capsys)[0] == 1
    assert run(["simulate", "--test", "zcdp-gof"], capsys)[0] == 1
