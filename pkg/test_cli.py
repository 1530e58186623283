import os

import pandas as pd
import pytest
from click.testing import CliRunner

from eigen_calculator import RunConfig, compare, neural_parameter_count, run_config_from
from main import EXIT_INVALID_CONFIG, cli
from solver import rayleigh_quotient
from problems import build_problem
from trial import read_snapshot
from utils import ConfigError

QUICK_MORSE = ["run", "--problem", "morse", "--grid", "20", "--restarts", "1", "--max-iterations", "5"]


@pytest.fixture
def runner():
    return CliRunner(mix_stderr=False)


def test_fem_mode_needs_henon_heiles(runner, tmp_path):
    result = runner.invoke(cli, ["run", "--problem", "morse", "--mode", "fem", "--out", str(tmp_path)])
    assert result.exit_code == EXIT_INVALID_CONFIG
    assert "henon-heiles" in result.stderr


def test_dump_config(runner):
    result = runner.invoke(cli, ["run", "--problem", "n-alpha", "--levels", "1", "--dump-config"])
    assert result.exit_code == 0
    assert 'problem = "n-alpha"' in result.stdout
    assert "hidden_units = 8" in result.stdout
    assert "grid = 100" in result.stdout
    assert 'gradient_mode = "finite-difference"' in result.stdout
    assert "# mesh = <unset>" in result.stdout


def test_config_file_is_overridden_by_flags(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('problem = "henon-heiles"\nrestarts = 2\nhidden-units = 6\n')
    result = runner.invoke(cli, ["run", "--config", str(config), "--restarts", "3", "--dump-config"])
    assert result.exit_code == 0
    assert "restarts = 3" in result.stdout
    assert "hidden_units = 6" in result.stdout


def test_unknown_config_key(runner, tmp_path):
    config = tmp_path / "run.toml"
    config.write_text("learning_rate = 0.1\n")
    result = runner.invoke(cli, ["run", "--config", str(config)])
    assert result.exit_code == EXIT_INVALID_CONFIG
    assert "learning_rate" in result.stderr


def test_constants(runner, tmp_path):
    out = tmp_path / "constants.csv"
    result = runner.invoke(cli, ["constants", "--out", str(out)])
    assert result.exit_code == 0
    assert "hbar_c" in result.stdout
    assert set(pd.read_csv(out).columns) >= {"group", "name", "value"}


def test_fem_run_writes_the_table(runner, tmp_path):
    result = runner.invoke(cli, ["run", "--problem", "henon-heiles", "--mode", "fem", "--mesh", "5",
                                 "--out", str(tmp_path)])
    assert result.exit_code == 0
    table = pd.read_csv(tmp_path / "mesh_table.csv")
    assert list(table["level"]) == [1, 2, 3, 4, 5, 6, 7]
    eigenvalues = pd.read_csv(tmp_path / "eigenvalues.csv")
    assert eigenvalues["eigenvalue"].is_monotonic_increasing


def test_short_morse_run(runner, tmp_path):
    result = runner.invoke(cli, QUICK_MORSE + ["--out", str(tmp_path)])
    assert result.exit_code in (0, 1)
    for name in ("eigenvalues.csv", "state_0.snapshot", "wavefunction_0.csv", "residual_0.csv",
                 "iterations_0.csv"):
        assert os.path.exists(tmp_path / name)

    summary = pd.read_csv(tmp_path / "eigenvalues.csv")
    assert len(summary) == 1
    assert result.exit_code == (0 if summary["converged"].all() else 1)
    assert len(pd.read_csv(tmp_path / "residual_0.csv")) == 20

    snapshot = read_snapshot(str(tmp_path / "state_0.snapshot"))
    reloaded = rayleigh_quotient(snapshot, build_problem("morse", grid=20))
    assert reloaded == pytest.approx(summary["eigenvalue"][0], rel=1e-12)


def test_runs_are_reproducible(runner, tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    runner.invoke(cli, QUICK_MORSE + ["--seed", "7", "--out", str(first)])
    runner.invoke(cli, QUICK_MORSE + ["--seed", "7", "--out", str(second)])
    assert (first / "iterations_0.csv").read_bytes() == (second / "iterations_0.csv").read_bytes()


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(levels=0)
    with pytest.raises(ConfigError):
        RunConfig(problem="morse", kernel_scan=True)
    with pytest.raises(ConfigError):
        run_config_from({"restarts": "many"})
    assert run_config_from({"problem": "sextic-3d"}).problem == "sextic-3d"


def test_neural_parameter_count():
    assert neural_parameter_count(2, 8) == 33
    assert neural_parameter_count(1, 10) == 31


@pytest.mark.slow
def test_neural_ground_state_matches_the_finest_mesh(tmp_path):
    config = RunConfig(problem="henon-heiles", levels=1, restarts=2, out=str(tmp_path))
    report = compare(config, "henon-heiles")
    assert abs(report["difference"][0]) <= 2e-3
    assert os.path.exists(tmp_path / "compare.csv")
