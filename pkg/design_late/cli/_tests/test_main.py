import json
from pathlib import Path
from unittest.mock import patch

import pytest

from design_late.config import Config
from design_late.models.run_config import RunConfig
from design_late.models.simulation_config import SimulationConfig

from ..main import EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main

CSV = "score,attended,offered\n4,1,1\n1,0,1\n2,0,0\n1,0,0\n"


@pytest.fixture
def data_file(tmp_path) -> Path:
    path = tmp_path / "trial.csv"
    path.write_text(CSV)
    return path


@pytest.fixture
def config_file(tmp_path) -> Path:
    path = tmp_path / "run.yaml"
    RunConfig(
        columns={"outcome": "score", "receipt": "attended", "assignment": "offered"}
    ).save_to(path)
    return path


@pytest.fixture
def simulation_file(tmp_path) -> Path:
    path = tmp_path / "simulation.yaml"
    SimulationConfig(
        name="tiny", n=40, dbar0=0.1, dbar1=0.8, num_datasets=2, reps=30, seed=5
    ).save_to(path)
    return path


@pytest.fixture
def user_dir(tmp_path):
    user = tmp_path / "user"
    dirs = (Config.SIMULATIONS_READONLY_DIR, user)
    with patch.object(Config, "SIMULATIONS_USER_DIR", user), patch.object(
        Config, "SIMULATION_DIRS", dirs
    ):
        yield user


def test_estimate(data_file, config_file, tmp_path):
    out = tmp_path / "report.json"

    code = main(["estimate", "--data", str(data_file), "--config", str(config_file),
                 "--out", str(out)])

    assert code == EXIT_OK
    report = json.loads(out.read_text())
    assert report["tau_late"] == pytest.approx(2.0)
    assert report["methods"]["db"]["se"] == pytest.approx(1.41421, abs=1e-5)


def test_estimate_to_stdout_as_csv(data_file, config_file, capsys):
    code = main(
        ["estimate", "--data", str(data_file), "--config", str(config_file),
         "--format", "csv"]
    )

    assert code == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("design,n,m,h,tau_itt,pi_itt,tau_late,method")
    assert len(lines) == 4


def test_estimate_uses_config_output_path(data_file, tmp_path):
    out = tmp_path / "from_config.json"
    config_file = tmp_path / "run.yaml"
    RunConfig(
        columns={"outcome": "score", "receipt": "attended", "assignment": "offered"},
        output_path=out,
    ).save_to(config_file)

    assert main(["estimate", "--data", str(data_file), "--config",
                 str(config_file)]) == EXIT_OK
    assert out.exists()


def test_diagnose(data_file, config_file, capsys):
    code = main(["diagnose", "--data", str(data_file), "--config", str(config_file)])

    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["arm_sizes"] == [2, 2]
    assert report["receipt_rates"] == [0.5, 0.0]
    assert report["weak_instrument"] is True


def test_unknown_subcommand(capsys):
    assert main(["fit"]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_missing_arguments():
    assert main(["estimate", "--data", "trial.csv"]) == EXIT_USAGE


def test_missing_column(tmp_path, config_file, capsys):
    data_file = tmp_path / "other.csv"
    data_file.write_text("score,attended\n1,0\n")

    code = main(["estimate", "--data", str(data_file), "--config", str(config_file)])

    assert code == EXIT_DATA
    assert "offered" in capsys.readouterr().err


def test_invalid_config(tmp_path, data_file):
    config_file = tmp_path / "bad.yaml"
    config_file.write_text("design: blocked\ncolumns:\n  outcome: score\n")

    code = main(["estimate", "--data", str(data_file), "--config", str(config_file)])

    assert code == EXIT_DATA


def test_missing_config(tmp_path, data_file):
    code = main(["estimate", "--data", str(data_file), "--config",
                 str(tmp_path / "absent.yaml")])

    assert code == EXIT_DATA


def test_zero_compliance(tmp_path, config_file):
    data_file = tmp_path / "trial.csv"
    data_file.write_text("score,attended,offered\n4,0,1\n1,0,1\n2,0,0\n1,0,0\n")

    code = main(["estimate", "--data", str(data_file), "--config", str(config_file)])

    assert code == EXIT_NUMERICAL


def test_simulate(simulation_file, tmp_path):
    out = tmp_path / "summary.csv"

    code = main(["simulate", "--config", str(simulation_file), "--out", str(out)])

    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 4
    assert "coverage" in lines[0]


def test_simulate_is_independent_of_threads(simulation_file, tmp_path):
    outputs = []
    for threads in ("1", "3"):
        out = tmp_path / f"summary_{threads}.json"
        code = main(
            ["simulate", "--config", str(simulation_file), "--threads", threads,
             "--out", str(out)]
        )
        assert code == EXIT_OK
        outputs.append(out.read_bytes())

    assert outputs[0] == outputs[1]


def test_simulate_overrides(simulation_file, tmp_path):
    out = tmp_path / "summary.json"

    main(["simulate", "--config", str(simulation_file), "--reps", "10", "--seed",
          "11", "--out", str(out)])

    report = json.loads(out.read_text())
    assert (report["reps"], report["seed"]) == (10, 11)


def test_simulate_invalid_override(simulation_file):
    assert main(["simulate", "--config", str(simulation_file), "--reps", "0"]) == (
        EXIT_DATA
    )


def test_simulate_needs_one_source(simulation_file):
    assert main(["simulate"]) == EXIT_USAGE
    assert main(["simulate", "--config", str(simulation_file), "--preset",
                 "n400_p50_d20_d50"]) == EXIT_USAGE


def test_simulate_unknown_preset(user_dir):
    assert main(["simulate", "--preset", "nonexistent"]) == EXIT_USAGE


def test_simulate_preset(user_dir, tmp_path):
    out = tmp_path / "summary.json"

    code = main(["simulate", "--preset", "n200_p50_d20_d70", "--reps", "5",
                 "--out", str(out)])

    assert code == EXIT_OK
    report = json.loads(out.read_text())
    assert (report["name"], report["n"], report["reps"]) == ("n200_p50_d20_d70", 200, 5)


def test_presets_list(user_dir, capsys):
    assert main(["presets", "list"]) == EXIT_OK

    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 16
    assert all("\tbuilt-in\t" in line for line in lines)


def test_presets_copy(user_dir, capsys):
    assert main(["presets", "copy", "n400_p50_d20_d50"]) == EXIT_OK

    new_path = Path(capsys.readouterr().out.strip())
    assert new_path.parent == user_dir
    copy = SimulationConfig.load_from(new_path)
    assert copy.name.startswith("n400_p50_d20_d50 (")
    assert copy.n == 400

    assert main(["presets", "list"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 17
    assert sum("\tuser\t" in line for line in lines) == 1


def test_presets_copy_by_new_name(user_dir, capsys):
    main(["presets", "copy", "n400_p50_d20_d50"])
    copied_name = SimulationConfig.load_from(
        Path(capsys.readouterr().out.strip())
    ).name

    assert main(["presets", "copy", copied_name]) == EXIT_OK
