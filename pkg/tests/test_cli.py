import csv
import json

import numpy as np
import pytest

from ttround.cli import BenchRecord, main, norm_study
from ttround.core import contract_to_dense, formal_sum, random_gaussian_tt
from ttround.ttio import read_tt, write_tt

TIMING = {"wall_time"}


@pytest.fixture
def padded(tmp_path):
    x = random_gaussian_tt([4, 5, 6, 3], [3, 4, 2], seed=0)
    padded = formal_sum([x, x.scaled(0.5)])
    path = tmp_path / "in.ttf"
    write_tt(path, padded)
    return x, path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_round_det_recovers_true_ranks(padded, tmp_path, capsys):
    x, path = padded
    out = tmp_path / "out.ttf"
    assert main(["round", str(path), str(out), "--tol", "1e-10", "--algo", "det"]) == 0
    y = read_tt(out)
    assert y.ranks == x.ranks
    record = json.loads(capsys.readouterr().out)
    assert record["ranks"] == list(x.ranks)
    assert record["relative_error"] <= 1e-10
    np.testing.assert_allclose(contract_to_dense(y), 1.5 * contract_to_dense(x), rtol=1e-9, atol=1e-9)


def test_round_krp_adapt_deterministic(padded, tmp_path, capsys):
    _, path = padded
    outs = [tmp_path / "a.ttf", tmp_path / "b.ttf"]
    for out in outs:
        assert main(["round", str(path), str(out), "--tol", "1e-4", "--algo", "krp-adapt", "--seed", "7"]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()


@pytest.mark.parametrize("algo", ["rand-orth", "orth-rand", "krp-fix"])
def test_round_rank_mode(padded, tmp_path, capsys, algo):
    x, path = padded
    out = tmp_path / "out.ttf"
    assert main(["round", str(path), str(out), "--ranks", "3", "4", "2", "--algo", algo]) == 0
    assert read_tt(out).ranks == x.ranks
    assert json.loads(capsys.readouterr().out)["relative_error"] <= 1e-10


def test_round_errors(padded, tmp_path, capsys):
    _, path = padded
    out = tmp_path / "out.ttf"
    assert main(["round", str(path), str(out), "--ranks", "2", "2", "2", "2", "2"]) == 1
    assert "InvalidRanks" in capsys.readouterr().err
    assert main(["round", str(path), str(out), "--tol", "1e-3", "--algo", "krp-fix"]) == 1
    assert main(["round", str(tmp_path / "missing.ttf"), str(out), "--tol", "1e-3"]) == 1
    bad = tmp_path / "bad.ttf"
    bad.write_bytes(b"not a tensor")
    assert main(["round", str(bad), str(out), "--tol", "1e-3"]) == 1
    with pytest.raises(SystemExit):
        main(["round", str(path), str(out)])


def test_bench_exact_tensor(tmp_path):
    csv_path = tmp_path / "bench.csv"
    args = ["bench-synthetic", "--d", "4", "--n", "6", "--rank", "3", "--eps-pert", "0",
            "--targets", "3", "--seeds", "3", "--csv", str(csv_path)]
    assert main(args) == 0
    rows = read_rows(csv_path)
    assert {r["algorithm"] for r in rows} == {"det", "rand-orth", "orth-rand", "krp-fix"}
    assert len(rows) == 1 + 3 * 3
    for r in rows:
        assert float(r["relative_error"]) <= 1e-10
        assert r["ranks"] == "1 3 3 3 1"
    again = tmp_path / "again.csv"
    assert main(args[:-1] + [str(again)]) == 0
    for a, b in zip(rows, read_rows(again)):
        assert {k: v for k, v in a.items() if k not in TIMING} == {k: v for k, v in b.items() if k not in TIMING}


def test_bench_tolerance_mode(tmp_path):
    csv_path = tmp_path / "bench.csv"
    assert main(["bench-synthetic", "--d", "4", "--n", "8", "--rank", "3", "--eps-pert", "1e-5",
                 "--tols", "1e-3", "--seeds", "2", "--csv", str(csv_path)]) == 0
    rows = read_rows(csv_path)
    assert [r["algorithm"] for r in rows] == ["det", "orth-rand", "orth-rand", "krp-adapt", "krp-adapt",
                                             "krp-adapt-r", "krp-adapt-r"]
    assert rows[0]["seed"] == ""
    assert float(rows[0]["relative_error"]) <= 1e-3
    assert main(["bench-synthetic", "--d", "0", "--tols", "1e-3", "--csv", str(csv_path)]) == 1


def test_norm_study_zero(tmp_path):
    csv_path = tmp_path / "norm.csv"
    assert main(["norm-study", "--d", "3", "--widths", "4", "--trials", "100", "--zero", "--csv", str(csv_path)]) == 0
    (row,) = read_rows(csv_path)
    for key in ("mean_estimate", "min_estimate", "max_estimate", "true_norm"):
        assert float(row[key]) == 0.0
    assert main(["norm-study", "--trials", "50", "--csv", str(csv_path)]) == 1


def test_norm_study_trends():
    # default study settings; at widths 32 -> 128 the bias is near the Monte-Carlo noise floor
    rows = norm_study([3, 5], [8, 32, 128], trials=1000, seed=0)
    by = {(r["d"], r["width"]): r for r in rows}
    for d in (3, 5):
        gaps = [abs(by[d, w]["mean_estimate"] - by[d, w]["true_norm"]) / by[d, w]["true_norm"] for w in (8, 32, 128)]
        assert gaps[0] > gaps[1] > gaps[2]

    def band(r):
        return (r["max_estimate"] - r["min_estimate"]) / r["true_norm"]

    assert band(by[5, 8]) >= band(by[3, 8])


def test_bench_record_invariants():
    with pytest.raises(ValueError):
        BenchRecord("det", "tol", 1e-3, -1.0, [1, 2, 1], 0.0, 0.0, None)
    with pytest.raises(ValueError):
        BenchRecord("det", "tol", 1e-3, 0.1, [1, 0, 1], 0.0, 0.0, None)
    row = BenchRecord("det", "tol", 0.1, 0.1, [1, 2, 1], 0.5, 3.0, None).csv_row()
    assert row["target"] == "0.10000000000000001"
    assert row["max_rank"] == "2"


def test_cookie_command(tmp_path, capsys):
    logs = tmp_path / "logs"
    assert main(["cookie", "--params", "1", "--grid", "8", "--samples", "2", "--tol", "1e-4",
                 "--strategies", "deterministic", "--log-dir", str(logs)]) == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[0])
    assert summary["converged"]
    assert (logs / "deterministic_seed0.csv").exists()
    assert main(["cookie", "--grid", "4"]) == 1
