import json
import subprocess
import sys

import numpy as np
import pytest

from simplex_sphere.cli import ExperimentConfig, UsageError, main, read_report, read_rows, run, write_rows
from simplex_sphere.samplers import read_batch, write_batch

FAST = {
    "solve-params": ["--b", "1.2,2"],
    "sample": ["--n", "12", "--b", "1.5", "--sampler", "gibbs", "--n-samples", "30"],
    "verify-thm1": ["--n", "20,40", "--b", "1.5", "--n-samples", "200"],
    "verify-thm2": ["--n", "20,40", "--b", "3", "--n-samples", "20", "--sweeps", "10", "--burn-in", "100"],
    "verify-thm3": ["--n", "20,40", "--b", "1.5", "--n-samples", "200"],
    "llt-check": ["--n", "20,40", "--n-samples", "10000", "--bins", "10"],
    "sandwich-check": ["--n", "8", "--b", "1.5", "--n-samples", "20000"],
}


def test_solve_params_prints_boundary(tmp_path, capsys):
    assert main(["solve-params", "--b", "2", "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "r=0 s=1" in out
    rep = read_report(tmp_path / "solve-params.json")
    row = rep["rows"][0]
    assert abs(row["r"]) <= 1e-6 and abs(row["s"] - 1) <= 1e-6


def test_b_not_below_n_is_usage_error(tmp_path, capsys):
    code = main(["sample", "--n", "3", "--b", "3", "--out-dir", str(tmp_path)])
    assert code == 2
    assert "1 < b < n" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["sample", "--n", "10", "--b", "0.5"],
    ["sample", "--n", "10", "--b", "1.5", "--threads", "0"],
    ["sample", "--n", "10", "--b", "1.5", "--n-samples", "0"],
    ["sample", "--n", "10", "--b", "1.5", "--sampler", "shell"],
    ["sample", "--n", "10"],
    ["solve-params", "--b", "2.5"],
    ["solve-params"],
    ["no-such-command"],
    ["sample", "--n", "ten", "--b", "1.5"],
])
def test_usage_errors_exit_2(tmp_path, argv):
    assert main(argv + ["--out-dir", str(tmp_path)]) == 2


def test_infeasible_rejection_exit_1(tmp_path, capsys):
    code = main(["sample", "--n", "200", "--b", "1.9", "--sampler", "exact", "--n-samples", "1",
                 "--out-dir", str(tmp_path)])
    assert code == 1
    assert "gibbs" in capsys.readouterr().err


def test_failed_check_exit_1(tmp_path, capsys):
    # listing n in decreasing order makes "sup_err decreases along the list" false
    code = main(["llt-check", "--n", "400,50", "--n-samples", "100000", "--out-dir", str(tmp_path)])
    assert code == 1
    assert "FAIL sup_err_decreasing" in capsys.readouterr().out
    assert json.loads((tmp_path / "manifest.json").read_text())["passed"] is False


def test_config_validation():
    with pytest.raises(UsageError, match="1 < b < n"):
        ExperimentConfig("verify-thm1", n=[5, 50], b=[6.0]).validate()
    with pytest.raises(UsageError):
        ExperimentConfig("sample", n=[5, 6], b=[1.5]).validate()
    with pytest.raises(UsageError):
        ExperimentConfig("sample", n=[5], b=[1.5], eps=0.7).validate()
    ExperimentConfig("sample", n=[5], b=[1.5]).validate()


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SIMPLEX_SPHERE_OUT_DIR", str(tmp_path / "env"))
    assert main(["solve-params", "--b", "1.5"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_sample_batch_file(tmp_path):
    assert main(["sample", "--n", "15", "--b", "1.5", "--n-samples", "25", "--seed", "4",
                 "--out-dir", str(tmp_path)]) == 0
    batch = read_batch(tmp_path / "batch.txt")
    assert len(batch) == 25 and batch.seed == 4 and batch.sampler_id == "exact"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 4
    assert manifest["worker_seeds"] == [[4, 0]]
    assert "numpy" in manifest["versions"] and manifest["wall_clock_seconds"] >= 0
    assert set(manifest["files"]) == {"batch.txt", "sample.json"}


def _outputs(path):
    out = {}
    for f in sorted(path.rglob("*")):
        if f.is_file():
            data = f.read_bytes()
            if f.name == "manifest.json":
                m = json.loads(data)
                m.pop("wall_clock_seconds")
                data = json.dumps(m, sort_keys=True).encode()
            out[f.relative_to(path)] = data
    return out


@pytest.mark.parametrize("cmd", sorted(FAST))
@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_reproducible_and_readable(tmp_path, cmd, fmt):
    argv = [cmd] + FAST[cmd] + ["--seed", "17", "--format", fmt, "--out-dir", str(tmp_path)]
    first_code = main(argv)
    assert first_code in (0, 1)
    first = _outputs(tmp_path)
    assert main(argv) == first_code
    assert _outputs(tmp_path) == first
    # every file round-trips through the readers
    for name in first:
        path = tmp_path / name
        if path.suffix == ".json":
            assert json.dumps(read_report(path), indent=2, sort_keys=True) + "\n" == path.read_text() \
                or name.name == "manifest.json"
        elif path.suffix == ".csv":
            again = tmp_path / "again.csv"
            write_rows(again, read_rows(path))
            assert again.read_bytes() == path.read_bytes()
            again.unlink()
        elif path.suffix == ".txt":
            again = tmp_path / "again.txt"
            batch = read_batch(path)
            write_batch(again, batch)
            assert again.read_bytes() == path.read_bytes()
            again.unlink()


def test_threads_give_same_multiset(tmp_path):
    base = ["sample", "--n", "10", "--b", "1.5", "--n-samples", "40", "--seed", "3"]
    assert main(base + ["--threads", "2", "--out-dir", str(tmp_path / "a")]) == 0
    assert main(base + ["--threads", "2", "--out-dir", str(tmp_path / "b")]) == 0
    a = read_batch(tmp_path / "a" / "batch.txt").points
    b = read_batch(tmp_path / "b" / "batch.txt").points
    key = lambda p: p[np.lexsort(p.T[::-1])]  # noqa: E731
    np.testing.assert_array_equal(key(a), key(b))
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["worker_seeds"] == [[3, 0], [3, 1]]


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "simplex_sphere", "solve-params", "--b", "2",
                          "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0
    assert "r=0 s=1" in res.stdout
