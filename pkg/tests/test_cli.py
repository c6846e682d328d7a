import csv
import json

import pytest

from krpo_lab import cli

FAST = "group_size = 4\nbatch_size = 3\ntask.prompt_count = 8\ntask.eval_count = 8\nsteps = 3\n"


@pytest.fixture
def config(tmp_path):
    def write(extra=""):
        path = tmp_path / "exp.cfg"
        path.write_text(FAST + extra)
        return str(path)

    return write


def read_index(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_writes_artifacts(tmp_path, config):
    out = tmp_path / "runs"
    assert cli.main(["run", "--config", config(), "--out", str(out), "--seed", "42", "--quiet"]) == 0
    run_dir = out / "kalman_42"
    assert sorted(p.name for p in run_dir.iterdir()) == ["metrics.csv", "report.json", "reward_curve.svg"]
    rows = (run_dir / "metrics.csv").read_text().splitlines()
    assert rows[0] == "step,sum_reward,mean_reward,mean_kl,grad_norm,loss,estimator,seed"
    assert len(rows) == 4
    report = json.loads((run_dir / "report.json").read_text())
    assert report["config"]["seed"] == 42
    assert (run_dir / "reward_curve.svg").read_text().startswith("<svg")


def test_run_is_byte_identical(tmp_path, config):
    dirs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["run", "--config", config(), "--out", str(out), "--seed", "42", "--quiet"]) == 0
        dirs.append(out / "kalman_42")
    for fname in ("metrics.csv", "report.json", "reward_curve.svg"):
        assert (dirs[0] / fname).read_bytes() == (dirs[1] / fname).read_bytes()


def test_run_flags_override_config(tmp_path, config):
    out = tmp_path / "o"
    argv = ["run", "--config", config(), "--out", str(out), "--estimator", "fixed", "--fixed-b", "0.5", "--steps", "2", "--quiet"]
    assert cli.main(argv) == 0
    report = json.loads((out / "fixed_42" / "report.json").read_text())
    assert report["config"]["fixed_b"] == 0.5 and len(report["metrics"]) == 2


def test_unwritable_output_fails(tmp_path, config, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["run", "--config", config(), "--out", str(blocker / "sub"), "--quiet"]) != 0
    assert "error" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("group_size = 0\n")
    assert cli.main(["run", "--config", str(path), "--quiet"]) == 2
    assert "line 1" in capsys.readouterr().err


@pytest.mark.parametrize(
    "axis,values,expected",
    [
        ("kl_weight", "0, 0.001, 0.01, 0.05", 4),
        ("group_size", "5, 8, 10, 15", 4),
        ("seed", "42, 777, 1234", 3),
    ],
)
def test_sweep_single_axis(tmp_path, config, axis, values, expected):
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--config", config(f"sweep.{axis} = {values}\n"), "--out", str(out), "--steps", "1", "--quiet"]) == 0
    rows = read_index(out / "sweep_index.csv")
    assert len(rows) == expected
    assert [float(r[axis]) for r in rows] == [float(v) for v in values.split(",")]
    assert all(r["status"] == "ok" and (out / r["path"] / "report.json").is_file() for r in rows)


def test_sweep_product_order(tmp_path, config):
    out = tmp_path / "sweep"
    text = config("sweep.seed = 2, 1\nsweep.estimator = kalman, group_mean\n")
    assert cli.main(["sweep", "--config", text, "--out", str(out), "--steps", "1", "--quiet"]) == 0
    rows = read_index(out / "sweep_index.csv")
    assert [(r["estimator"], r["seed"]) for r in rows] == [("kalman", "2"), ("kalman", "1"), ("group_mean", "2"), ("group_mean", "1")]
    assert list(rows[0])[:2] == ["estimator", "seed"]
    assert (out / "sweep_config.txt").is_file()


def test_sweep_without_axes(tmp_path, config):
    assert cli.main(["sweep", "--config", config(), "--out", str(tmp_path / "s"), "--quiet"]) == 2


def _runs(tmp_path, config, estimator, seeds):
    out = tmp_path / estimator
    for seed in seeds:
        assert cli.main(["run", "--config", config(), "--out", str(out), "--estimator", estimator, "--seed", str(seed), "--quiet"]) == 0
    return str(out)


def test_compare_identical_sets(tmp_path, config):
    runs = _runs(tmp_path, config, "kalman", [1, 2])
    out = tmp_path / "cmp"
    assert cli.main(["compare", "--a", runs, "--b", runs, "--out", str(out), "--quiet"]) == 0
    data = json.loads((out / "comparison.json").read_text())
    assert data["mean"]["accuracy_diff"] == 0.0 and data["ttest"] == "n/a"
    assert (out / "comparison.svg").is_file() and (out / "comparison.csv").is_file()


def test_compare_two_estimators(tmp_path, config):
    a = _runs(tmp_path, config, "group_mean", [1, 2])
    b = _runs(tmp_path, config, "kalman", [1, 2])
    out = tmp_path / "cmp"
    assert cli.main(["compare", "--a", a, "--b", b, "--out", str(out), "--pairing", "seed", "--quiet"]) == 0
    data = json.loads((out / "comparison.json").read_text())
    assert (data["label_a"], data["label_b"], data["pairing"]) == ("group_mean", "kalman", "seed")
    assert [r["seed"] for r in data["rows"]] == [1, 2]


def test_compare_single_seed_per_seed_pairing(tmp_path, config):
    a = _runs(tmp_path, config, "group_mean", [5])
    b = _runs(tmp_path, config, "kalman", [5])
    out = tmp_path / "cmp"
    assert cli.main(["compare", "--a", a, "--b", b, "--out", str(out), "--pairing", "seed", "--quiet"]) == 0
    assert (out / "comparison.csv").read_text().splitlines()[-1].startswith("ttest,n/a")


def test_compare_mismatched_seeds(tmp_path, config, capsys):
    a = _runs(tmp_path, config, "group_mean", [1])
    b = _runs(tmp_path, config, "kalman", [2])
    assert cli.main(["compare", "--a", a, "--b", b, "--out", str(tmp_path / "c"), "--quiet"]) != 0
    assert "seed" in capsys.readouterr().err


def test_compare_missing_path(tmp_path):
    assert cli.main(["compare", "--a", str(tmp_path / "nope"), "--b", str(tmp_path / "nope"), "--quiet"]) != 0


def test_selftest():
    assert cli.main(["selftest", "--quiet"]) == 0
