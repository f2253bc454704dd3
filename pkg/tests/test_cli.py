import json

import pandas as pd
import pytest

from cli import ConfigError, RunConfig, experiment_defaults, main, parse_config_text, parse_value, run

TEST_CONFIG = {
    "active_environment": "test",
    "test": {
        "output_folder_path": "out",
        "log_level": "WARNING",
        "experiments": {"boundary-layer": {"trace_steps": 100}},
    },
    "experiments": {
        "boundary-layer": {
            "u0": "paper_square_u0",
            "g": "sin_t",
            "epsilons": [0.1, 0.01],
            "orders": [0, 1],
            "trace_steps": 1000,
        },
        "square": {"u0": "paper_square_u0", "nx": 4, "ny": 4, "steps": 20, "refinements": 0},
        "disk": {
            "u0": "xy",
            "nr": 10,
            "ntheta": 63,
            "steps": 5000,
            "epsilons": [0.1, 0.5],
            "refinements": 0,
        },
        "oned": {"u0": "paper_1d_u0", "n_cells": 6, "steps": 20, "epsilons": [0.1, 1.0]},
        "sweep-epsilon": {"experiment": "oned", "epsilons": [0.1, 0.5, 1.0]},
    },
}


@pytest.fixture
def root(tmp_path, monkeypatch):
    monkeypatch.delenv("SOLVER_OUT_DIR", raising=False)
    (tmp_path / "config.json").write_text(json.dumps(TEST_CONFIG), encoding="utf-8")
    return tmp_path


def test_parse_config_text():
    settings = parse_config_text("# run\nnu = 0.3\n\nepsilons = 0.1, 0.2  # two values\nmode = penalty\n")
    assert settings == {"nu": 0.3, "epsilons": (0.1, 0.2), "mode": "penalty"}


@pytest.mark.parametrize(
    "text, line",
    [
        ("nu = 0.2\nsteps 100\n", 2),
        ("nu = 0.2\n\nnu = 0.3\n", 3),
        ("colour = blue\n", 1),
        ("steps = many\n", 1),
        ("nu = -0.2\n", 1),
        ("u0 = not_registered\n", 1),
        ("procedure = 3\n", 1),
    ],
)
def test_parse_config_errors_carry_the_line(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_parse_value_allows_zero_where_meaningful():
    assert parse_value("procedure", "0") == 0
    assert parse_value("orders", "0,1,2") == (0, 1, 2)
    with pytest.raises(ConfigError):
        parse_value("steps", "0")


def test_parse_value_accepts_the_registered_profiles():
    assert parse_value("u0", "paper_square_u0") == "paper_square_u0"
    assert parse_value("u0", "paper_1d_u0") == "paper_1d_u0"
    assert parse_value("peak_window", "0.05") == 0.05


def test_experiment_defaults_merge_the_environment():
    defaults = experiment_defaults(TEST_CONFIG, "boundary-layer")
    assert defaults["trace_steps"] == 100
    assert defaults["epsilons"] == (0.1, 0.01)
    assert experiment_defaults(TEST_CONFIG, "nothing") == {}


def test_run_config_rejects_unknown_settings(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_settings("square", tmp_path, {"colour": "blue"})


def test_boundary_layer_files(root):
    written = run(["boundary-layer"], root_path=root)
    names = sorted(path.name for path in written)
    assert names == ["boundary_trace_eps0.01.csv", "boundary_trace_eps0.1.csv", "remainder_norms.csv"]
    trace = pd.read_csv(root / "out" / "boundary_trace_eps0.1.csv")
    assert list(trace.columns) == ["t", "g", "k_eps", "approx_n0", "approx_n1"]
    assert len(trace) == 101
    assert trace.loc[0, "k_eps"] == pytest.approx(0.5)
    norms = pd.read_csv(root / "out" / "remainder_norms.csv")
    assert list(norms.columns) == ["epsilon", "order", "l2_norm", "sup_norm"]
    assert len(norms) == 4


def test_outputs_are_reproducible(root):
    first = {path.name: path.read_bytes() for path in run(["boundary-layer"], root_path=root)}
    second = {path.name: path.read_bytes() for path in run(["boundary-layer"], root_path=root)}
    assert first == second


def test_output_directory_precedence(root, monkeypatch):
    monkeypatch.setenv("SOLVER_OUT_DIR", str(root / "from_env"))
    written = run(["boundary-layer"], root_path=root)
    assert all(path.parent == root / "from_env" for path in written)
    written = run(["boundary-layer", "--out", str(root / "from_flag")], root_path=root)
    assert all(path.parent == root / "from_flag" for path in written)


def test_config_file_and_flags(root):
    (root / "run.cfg").write_text("epsilons = 0.5\norders = 0\n", encoding="utf-8")
    written = run(["boundary-layer", "--config", str(root / "run.cfg")], root_path=root)
    assert sorted(path.name for path in written) == ["boundary_trace_eps0.5.csv", "remainder_norms.csv"]
    trace = pd.read_csv(root / "out" / "boundary_trace_eps0.5.csv")
    assert list(trace.columns) == ["t", "g", "k_eps", "approx_n0"]


def test_unstable_disk_exits_with_code_2(root, monkeypatch, capsys):
    monkeypatch.chdir(root)
    assert main(["disk", "--steps", "1000"]) == 2
    assert "error=2" in capsys.readouterr().err


def test_bad_config_exits_with_code_1(root, monkeypatch, capsys):
    monkeypatch.chdir(root)
    (root / "bad.cfg").write_text("nu = 0.2\ncolour = blue\n", encoding="utf-8")
    assert main(["square", "--config", "bad.cfg"]) == 1
    assert "line 2" in capsys.readouterr().err
    assert main(["square", "--mode", "corrector"]) == 1
    assert main(["square", "--config", "missing.cfg"]) == 1


def test_oned_summary(root):
    written = run(["oned"], root_path=root)
    names = {path.name for path in written}
    assert {"oned_direct_error.csv", "oned_corrector2_error.csv", "oned_peak_summary.csv", "oned_sweep.csv"} <= names
    summary = pd.read_csv(root / "out" / "oned_peak_summary.csv")
    assert list(summary.columns) == ["mode", "peak_error", "peak_time"]
    assert list(summary["mode"]) == ["direct", "penalty_eps0.1", "corrector1", "corrector2"]
    assert summary["peak_time"].max() <= 0.05 + 1e-12
    sweep = pd.read_csv(root / "out" / "oned_sweep.csv")
    assert list(sweep["epsilon"]) == [0.1, 1.0]


def test_tiny_square(root):
    written = run(["square"], root_path=root)
    names = {path.name for path in written}
    for label in ("direct", "penalty_eps0.1"):
        for suffix in ("error", "error_l2", "field_t0", "field_t0.5", "field_t1", "section", "gradient"):
            assert f"square_{label}_{suffix}.csv" in names
    assert "square_peak_summary.csv" in names
    assert not any("rate" in name for name in names)
    field = pd.read_csv(root / "out" / "square_direct_field_t1.csv")
    assert list(field.columns) == ["x", "y", "u"]
    assert len(field) == 25


def test_tiny_disk(root):
    (root / "disk.cfg").write_text("nr = 3\nntheta = 8\nsteps = 20\n", encoding="utf-8")
    written = run(["disk", "--config", str(root / "disk.cfg"), "--mode", "penalty"], root_path=root)
    names = {path.name for path in written}
    assert "disk_penalty_eps0.1_section.csv" in names
    assert "disk_sweep.csv" in names
    section = pd.read_csv(root / "out" / "disk_penalty_eps0.1_section.csv")
    assert list(section.columns) == ["t", "r", "u"]
    sweep = pd.read_csv(root / "out" / "disk_sweep.csv")
    assert list(sweep["epsilon"]) == [0.1, 0.5]


def test_sweep_epsilon_uses_the_target_experiment(root):
    written = run(["sweep-epsilon"], root_path=root)
    assert [path.name for path in written] == [
        "oned_sweep.csv",
        "oned_sweep_eps0.1_error.csv",
        "oned_sweep_eps0.5_error.csv",
        "oned_sweep_eps1_error.csv",
    ]
    sweep = pd.read_csv(written[0])
    assert list(sweep.columns) == ["epsilon", "initial_error", "final_error", "warning"]
    assert list(sweep["epsilon"]) == [0.1, 0.5, 1.0]
    curve = pd.read_csv(written[1])
    assert list(curve.columns) == ["t", "max_error"]
    assert len(curve) == 21
    assert curve["max_error"].max() >= sweep["initial_error"][0]


def test_experiment_key_is_only_read_by_the_sweep(root, monkeypatch, capsys):
    monkeypatch.chdir(root)
    (root / "target.cfg").write_text("experiment = disk\n", encoding="utf-8")
    assert main(["square", "--config", "target.cfg"]) == 1
    assert "sweep-epsilon" in capsys.readouterr().err
