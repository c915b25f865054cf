"""Configuration files, CSV outputs and the command-line driver."""
import numpy as np
import pytest

from gpipinn import cli
from gpipinn.config import ConfigError, parse_config, parse_config_text
from gpipinn.csvio import read_csv, write_csv
from gpipinn.network import load_checkpoint, save_checkpoint
from gpipinn.problem import LqrConfig, lqr_problem
from gpipinn.training import METRIC_COLUMNS, TrainConfig, initial_networks

FAST = """
[problem]
kind = lqr
d = 1
Lambda1 = 0.25

[train]
M1 = 64
M2 = 32
M3 = 4
N1 = 2
N2 = 2
minibatch_size = 32
L = 1
N = 4
test_size = 64
val_per_axis = 4
k_max = 10
record_time = false

[eval]
mc_paths = 20
mc_dt = 0.01
residual_points = 16
marks_per_point = 4
reference_points = 5
"""


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.ini"
    path.write_text(FAST)
    return path


def test_minimal_file_takes_documented_defaults(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[problem]\nkind = lqr\n")
    spec, tc, desc = parse_config(path, env={})
    assert spec.d == 1 and spec.T == 1.0
    assert tc.M1 == 4096 and tc.M2 == 4096 and tc.M3 == 64
    assert tc.N1 == 16 and tc.N2 == 16 and tc.eta1 == 1e-3 and tc.k_max == 100
    assert tc.xi == 45.0
    assert desc.train_config(1).xi == 1.0
    assert parse_config_text("[problem]\nkind = consumption\n", env={}).train_config(2).xi == 10.0


def test_explicit_xi_wins_over_algorithm_default():
    desc = parse_config_text("[problem]\nkind = lqr\n[train]\nxi = 3\n", env={})
    assert desc.train_config(1).xi == desc.train_config(2).xi == 3.0


@pytest.mark.parametrize("text", [
    "[problem]\nkind = lqr\n[train]\neta1 = -1\n",
    "[problem]\nkind = lqr\n[train]\nbogus = 1\n",
    "[problem]\nkind = lqr\n[extra]\na = 1\n",
    "[problem]\nd = 2\n",
    "[problem]\nkind = heat\n",
    "[problem]\nkind = lqr\n[train]\nM1 = many\n",
    "[problem]\nkind = lqr\n[eval]\nmc_paths = 1\n",
])
def test_invalid_files_are_rejected(text):
    with pytest.raises(ConfigError):
        parse_config_text(text, env={})


def test_serialised_config_round_trips(fast_config):
    desc = parse_config_text(fast_config.read_text(), env={})
    again = parse_config_text(desc.to_text(), env={})
    assert again == desc
    assert again.train_config(1) == desc.train_config(1)


def test_environment_overrides_file_values(fast_config):
    env = {"GPIPINN_TRAIN_K_MAX": "7", "GPIPINN_PROBLEM_LAMBDA1": "0.5", "HOME": "/x"}
    desc = parse_config_text(fast_config.read_text(), env=env)
    assert desc.train["k_max"] == 7
    assert desc.problem["Lambda1"] == 0.5
    with pytest.raises(ConfigError):
        parse_config_text(fast_config.read_text(), env={"GPIPINN_TRAIN_NOPE": "1"})


def test_missing_config_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_config(tmp_path / "absent.ini")


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    rows = [[i, *rng.standard_normal(3), 1e-300, -0.0] for i in range(5)]
    write_csv(tmp_path / "a.csv", ["i", "a", "b", "c", "tiny", "negzero"], rows)
    header, back = read_csv(tmp_path / "a.csv")
    assert header == ["i", "a", "b", "c", "tiny", "negzero"]
    assert back == rows
    assert isinstance(back[0][0], int)


def test_checkpoint_round_trip_is_exact(tmp_path):
    theta, phi = initial_networks(lqr_problem(LqrConfig(d=2)), TrainConfig(L=1, N=4))
    save_checkpoint(phi, tmp_path / "c.ckpt")
    back = load_checkpoint(tmp_path / "c.ckpt")
    assert back.arch == phi.arch
    assert np.array_equal(back.values, phi.values)


def test_train_writes_metrics_and_evaluate_reproduces_the_final_error(fast_config, tmp_path):
    out = tmp_path / "run"
    assert cli.main(["train2", "--config", str(fast_config), "--out", str(out), "--seed", "5"]) == 0
    header, rows = read_csv(out / "metrics.csv")
    assert header == list(METRIC_COLUMNS)
    assert [r[0] for r in rows] == list(range(1, 11))
    assert (out / "metrics.csv").read_bytes().count(b"\r\n") == 11

    ev = tmp_path / "eval"
    assert cli.main(["evaluate", "--config", str(fast_config), "--out", str(ev), "--seed", "5",
                     "--checkpoint", str(out)]) == 0
    eh, er = read_csv(ev / "evaluation.csv")
    result = dict(zip(eh, er[0]))
    assert result["mae_v"] == pytest.approx(rows[-1][5], abs=1e-12)
    assert result["mae_a"] == pytest.approx(rows[-1][6], abs=1e-12)
    ph, pr = read_csv(ev / "point_errors.csv")
    assert len(pr) == 64


def test_same_seed_gives_identical_metrics_file(fast_config, tmp_path):
    for name in ("a", "b"):
        cli.main(["train1", "--config", str(fast_config), "--out", str(tmp_path / name), "--epochs", "3"])
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_checkpoint_every_writes_epoch_files(fast_config, tmp_path):
    cli.main(["train2", "--config", str(fast_config), "--out", str(tmp_path), "--epochs", "4",
              "--checkpoint-every", "2"])
    assert sorted(p.name for p in tmp_path.glob("*_epoch*.ckpt")) == [
        "control_epoch2.ckpt", "control_epoch4.ckpt", "value_epoch2.ckpt", "value_epoch4.ckpt"]


def test_reference_and_simulate_tables(fast_config, tmp_path):
    assert cli.main(["reference", "--config", str(fast_config), "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "reference.csv")
    assert header == ["t", "h", "f", "x0", "V", "alpha1"]
    assert len(rows) == 15
    assert cli.main(["simulate", "--config", str(fast_config), "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "simulate.csv")
    assert [r[2] for r in rows] == [0.0, 1.0, 2.0]
    assert all(r[0] == "reference" and r[4] > 0 for r in rows)


def test_compare_reports_slower_residual_epochs_with_jumps(fast_config, tmp_path):
    assert cli.main(["compare", "--config", str(fast_config), "--out", str(tmp_path), "--epochs", "3"]) == 0
    _, ratio = read_csv(tmp_path / "compare_ratio.csv")
    assert ratio[0][0] > 1.0
    _, rows = read_csv(tmp_path / "compare.csv")
    assert [r[0] for r in rows] == [1, 2]
    assert (tmp_path / "algo1" / "metrics.csv").exists() and (tmp_path / "algo2" / "metrics.csv").exists()


def test_errors_exit_with_status_two(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[problem]\nkind = lqr\n[train]\neta1 = -1\n")
    assert cli.main(["train2", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "eta1" in capsys.readouterr().err
    assert cli.main(["train2", "--config", str(tmp_path / "missing.ini")]) == 2
    with pytest.raises(SystemExit):
        cli.main(["fly", "--config", str(bad)])
