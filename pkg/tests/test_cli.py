import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ratmeyer.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, dumps, export_csv, main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


# ---------------------------------------------------------------- JSON


def test_dumps_is_deterministic_and_sorted():
    a = dumps({"b": 1.0, "a": [1, 2.5, float("nan")], "c": {"z": True, "y": None}})
    assert a == ('{"a": [1, 2.5000000000e+00, "nan"], "b": 1.0000000000e+00, '
                 '"c": {"y": null, "z": true}}\n')
    assert json.loads(a)["b"] == 1.0
    assert dumps(np.float64(0.1)) == "1.0000000000e-01\n"
    with pytest.raises(TypeError):
        dumps(object())


def test_export_csv_rejects_ragged(tmp_path):
    with pytest.raises(ValueError):
        export_csv(tmp_path / "x.csv", {"a": [1, 2], "b": [1]})


# ---------------------------------------------------------------- subcommands


def test_sfs_check_passes(capsys):
    code, out = run(["sfs-check", "--pairs", "20", "--points", "512"], capsys)
    rep = json.loads(out)
    assert code == EXIT_OK and rep["pass"] is True
    assert rep["dual_gramian"]["residual"] < 1e-12


def test_sfs_check_bad_delta_is_usage_error(capsys):
    code, _ = run(["sfs-check", "--delta", "0.4"], capsys)
    assert code == EXIT_USAGE


def test_build_1d_writes_artifacts_and_is_byte_identical(tmp_path, capsys):
    args = ["build-1d", "--p", "3", "--q", "2", "--grid", "128"]
    c1, o1 = run(args + ["--out", str(tmp_path / "a")], capsys)
    c2, o2 = run(args + ["--out", str(tmp_path / "b")], capsys)
    assert c1 == c2 == EXIT_OK and o1 == o2
    for name in ("M.grid", "H.grid", "scaling.json", "wavelets.json", "job.json", "report.json",
                 "phi_hat.csv", "psi_hat.csv", "lowpass.csv"):
        assert (tmp_path / "a" / name).exists(), name
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rep = json.loads(o1)
    assert rep["smith_barnwell"] < 1e-9 and rep["L_identity"] is True


def test_build_1d_tolerance_failure_exit_one(capsys):
    code, out = run(["build-1d", "--p", "3", "--q", "2", "--grid", "64", "--tol", "1e-300"], capsys)
    assert code == EXIT_FAIL and json.loads(out)["pass"] is False


def test_build_1d_usage_errors(capsys):
    assert run(["build-1d", "--p", "4", "--q", "2"], capsys)[0] == EXIT_USAGE
    assert run(["build-1d", "--p", "3"], capsys)[0] == EXIT_USAGE
    assert run(["build-1d", "--bogus"], capsys)[0] == EXIT_USAGE


def test_job_file_round_trip_and_errors(tmp_path, capsys):
    job = tmp_path / "job.json"
    job.write_text(json.dumps({"mode": "build-1d", "p": 2, "q": 1, "grid": 64}))
    code, out = run(["build-1d", "--job", str(job)], capsys)
    assert code == EXIT_OK
    assert run(["build-lift", "--job", str(job)], capsys)[0] == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["build-1d", "--job", str(bad)], capsys)[0] == EXIT_USAGE
    nomode = tmp_path / "nomode.json"
    nomode.write_text(json.dumps({"p": 3}))
    assert run(["build-1d", "--job", str(nomode)], capsys)[0] == EXIT_USAGE


def test_build_lift(capsys):
    code, out = run(["build-lift", "--p", "3", "--q", "2", "--shape", "16", "16"], capsys)
    rep = json.loads(out)
    assert code == EXIT_OK and rep["lift_lowpass_deviation"] < 1e-10


def test_build_general_malformed_dilation(capsys):
    assert run(["build-general", "--dilation", "[[1,"], capsys)[0] == EXIT_USAGE
    assert run(["build-general", "--dilation", '[["1","2"]]'], capsys)[0] == EXIT_USAGE
    assert run(["build-general"], capsys)[0] == EXIT_USAGE


def test_build_general_dyadic(capsys):
    code, out = run(["build-general", "--dilation", '[["2"]]', "--delta", "0.05",
                     "--shape", "64"], capsys)
    rep = json.loads(out)
    assert code == EXIT_OK and rep["pass"] is True


def test_verify_subcommand(capsys):
    code, out = run(["verify", "--j-range", "0", "0", "--k-range", "3", "--grid", "128"], capsys)
    rep = json.loads(out)
    assert code == EXIT_OK and rep["dc"] < 1e-9 and rep["parseval"]["ratio"] > 0.999


# ---------------------------------------------------------------- export


def test_export_sfs_curves(tmp_path, capsys):
    path = tmp_path / "f.csv"
    code, _ = run(["export", "sfs", "--output", str(path), "--points", "1001"], capsys)
    assert code == EXIT_OK
    head, data = read_csv(path)
    assert head == ["xi", "f0", "f1", "f2", "f3"]
    xi = data[:, 0]
    i0 = np.argmin(np.abs(xi))
    assert data[i0, 1] == 1.0 and np.abs(data[:, 1]).max() == 1.0
    for c in (2, 3, 4):
        # |f_j| is even in xi; the grid is symmetric about 0
        assert np.allclose(np.abs(data[:, c]), np.abs(data[::-1, c]), atol=1e-12)


def test_export_grid_repeats_over_periods(tmp_path, capsys):
    run(["build-1d", "--p", "3", "--q", "2", "--grid", "64", "--out", str(tmp_path)], capsys)
    path = tmp_path / "m.csv"
    code, out = run(["export", "grid", "--input", str(tmp_path / "M.grid"), "--output", str(path),
                     "--periods", "2"], capsys)
    assert code == EXIT_OK
    head, data = read_csv(path)
    half = data.shape[0] // 2
    assert np.array_equal(data[:half, 1:], data[half:, 1:])
    assert np.all(np.diff(data[:, 0]) > 0)
    assert run(["export", "grid", "--output", str(path)], capsys)[0] == EXIT_USAGE


# ---------------------------------------------------------------- threads


def test_threads_env_and_flag(monkeypatch, capsys):
    monkeypatch.setenv("RATMEYER_THREADS", "nope")
    assert run(["sfs-check", "--pairs", "5", "--points", "64"], capsys)[0] == EXIT_USAGE
    monkeypatch.setenv("RATMEYER_THREADS", "2")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        monkeypatch.delenv(var, raising=False)
    assert run(["sfs-check", "--pairs", "5", "--points", "64"], capsys)[0] == EXIT_OK
    assert os.environ["OMP_NUM_THREADS"] == "2"
    assert run(["--threads", "0", "sfs-check"], capsys)[0] == EXIT_USAGE


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ratmeyer.cli", "export", "sfs",
                        "--output", str(tmp_path / "f.csv"), "--points", "11"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stderr.strip() == "PASS"
    r = subprocess.run([sys.executable, "-m", "ratmeyer.cli", "nope"], capture_output=True, text=True)
    assert r.returncode == 2
