"""
Unit tests for the command-line surface and experiment configuration
"""

import json

import pandas as pd
import pytest
from pydantic import ValidationError

from cli.main import SUBCOMMANDS, cli, run_command
from models.experiment import COMMAND_CONFIGS, CorrelationConfig, OffsetScanConfig, build_experiment_config
from services.workflows_service import workflows_service
from utils.config import Settings, load_experiment_config, parse_key_value_text
from utils.errors import ConfigurationError

SPIN_CONFIG = """
# bare spin, epsilon = Delta = beta = 1
epsilon = 1.0
delta = 1.0
r = 0.0
n_modes = 0
beta = 1.0
n_points = 256
"""


class TestConfigParsing:
    """Test cases for key = value configuration files"""

    def test_runtime_settings(self, test_settings):
        """Keyword overrides apply and out-of-range tolerances are refused"""
        assert test_settings.LOG_LEVEL == "WARNING"
        assert test_settings.OUTPUT_DIR == "/tmp/offsetlab_test_results"
        with pytest.raises(ValidationError):
            Settings(FOCK_TAIL_TOLERANCE=2.0)

    def test_values_and_lines(self):
        """Scalars, booleans and lists parse; every key records its line"""
        values, lines = parse_key_value_text("beta = 2\nrenormalize = false\nbetas = 1, 2.5\nnoise = real\n")
        assert values == {"beta": 2, "renormalize": False, "betas": [1, 2.5], "noise": "real"}
        assert lines == {"beta": 1, "renormalize": 2, "betas": 3, "noise": 4}

    def test_missing_equals(self):
        """A line without '=' names its number"""
        with pytest.raises(ConfigurationError, match="line 2"):
            parse_key_value_text("beta = 1\nbeta 2\n")

    def test_duplicate_key(self):
        """Keys may be set once"""
        with pytest.raises(ConfigurationError, match="duplicate key 'beta'"):
            parse_key_value_text("beta = 1\nbeta = 2\n")

    def test_dashes_become_underscores(self):
        """n-modes and n_modes are the same key"""
        values, _ = parse_key_value_text("n-modes = 2\n")
        assert values == {"n_modes": 2}

    def test_json_document(self, write_config):
        """Flat JSON objects are accepted"""
        path = write_config('{"beta": 2.0, "n-modes": 1}', "config.json")
        values, lines = load_experiment_config(str(path))
        assert values == {"beta": 2.0, "n_modes": 1}
        assert lines == {}

    def test_nested_json_rejected(self, write_config):
        """Nested objects are not part of the flat format"""
        path = write_config('{"molecule": {"beta": 2.0}}', "config.json")
        with pytest.raises(ConfigurationError, match="nested key 'molecule'"):
            load_experiment_config(str(path))

    def test_missing_file(self, tmp_path):
        """Absent configuration files raise"""
        with pytest.raises(ConfigurationError):
            load_experiment_config(str(tmp_path / "absent.cfg"))


class TestExperimentConfig:
    """Test cases for per-command validation"""

    def test_every_subcommand_has_a_model(self):
        """The CLI, the config registry and the pipeline registry agree"""
        assert set(SUBCOMMANDS) == set(COMMAND_CONFIGS)
        assert set(SUBCOMMANDS) == set(workflows_service.workflows)

    def test_unknown_key_names_line(self):
        """Strict parsing reports the key and its line"""
        with pytest.raises(ConfigurationError) as info:
            build_experiment_config("correlation", {"beta": 1.0, "bta": 2.0}, {"beta": 1, "bta": 2})
        assert str(info.value.message) == "bta: unknown key (line 2)"
        assert info.value.exit_code == 2

    def test_invalid_value(self):
        """Range violations name the key"""
        with pytest.raises(ConfigurationError, match="^r:"):
            build_experiment_config("correlation", {"r": 1.5})

    def test_overrides_win(self):
        """Command-line flags replace file values; None is ignored"""
        config = build_experiment_config("correlation", {"seed": 1, "jobs": 2}, overrides={"seed": 9, "jobs": None})
        assert isinstance(config, CorrelationConfig)
        assert config.seed == 9
        assert config.jobs == 2

    def test_list_keys_split(self):
        """Comma-separated text becomes a list"""
        config = build_experiment_config("offset-scan", {"betas": "1, 2", "rs": 0.5})
        assert isinstance(config, OffsetScanConfig)
        assert config.betas == [1.0, 2.0]
        assert config.rs == [0.5]

    def test_unknown_command(self):
        """Only registered subcommands build"""
        with pytest.raises(ConfigurationError):
            build_experiment_config("teleport", {})


class TestRunCommand:
    """Test cases for run_command exit codes and artifacts"""

    def test_correlation_artifacts(self, write_config, output_dir, capsys):
        """Success writes CSV, JSON and the resolved configuration"""
        path = write_config(SPIN_CONFIG)
        code = run_command(["correlation", "--config", str(path), "--out", str(output_dir), "--seed", "5"])
        assert code == 0

        names = {p.name for p in output_dir.iterdir()}
        assert {"resolved_config.json", "correlation.csv", "correlation_table.json", "correlation.json"} <= names

        resolved = json.loads((output_dir / "resolved_config.json").read_text())
        assert resolved["command"] == "correlation"
        assert resolved["seed"] == 5
        assert resolved["parameters"]["n_points"] == 256

        report = json.loads((output_dir / "correlation.json").read_text())
        assert report["offset"]["C0"] == pytest.approx(0.31464, abs=1e-5)
        assert report["long_time_average"] == pytest.approx(0.31464, abs=1e-4)

        frame = pd.read_csv(output_dir / "correlation.csv")
        assert list(frame.columns) == ["t", "re_C", "im_C", "long_time_average"]
        assert len(frame) == 256

        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert summary["status"] == "completed"

    def test_csv_only(self, write_config, output_dir):
        """--format csv skips the JSON tables"""
        path = write_config(SPIN_CONFIG)
        assert run_command(["correlation", "--config", str(path), "--out", str(output_dir), "--format", "csv"]) == 0
        names = {p.name for p in output_dir.iterdir()}
        assert "correlation.csv" in names
        assert "correlation_table.json" not in names

    def test_defaults_without_config(self, output_dir):
        """A subcommand runs on its defaults"""
        assert run_command(["davies", "--out", str(output_dir)]) == 0
        report = json.loads((output_dir / "davies.json").read_text())
        assert report["classification"] == "CONVERGENT"

    def test_config_error_exit_code(self, write_config, output_dir, capsys):
        """Unknown keys exit 2 with a line-precise message"""
        path = write_config("beta = 1.0\nbta = 2.0\n")
        code = run_command(["correlation", "--config", str(path), "--out", str(output_dir)])
        assert code == 2
        payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert payload["message"] == "bta: unknown key (line 2)"

    def test_numerical_failure_exit_code(self, write_config, output_dir, capsys):
        """Numerical failures exit 3 with the module payload"""
        path = write_config("n_modes = 3\nn_max = 20\nr = 0.25\n")
        code = run_command(["correlation", "--config", str(path), "--out", str(output_dir)])
        assert code == 3
        payload = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert payload["exit_code"] == 3
        assert payload["module"] == "env_model"

    def test_bad_flag_exit_code(self):
        """Click usage errors exit 2"""
        assert run_command(["correlation", "--jobs", "0"]) == 2

    def test_unknown_subcommand(self):
        """Unknown subcommands are usage errors"""
        assert run_command(["teleport"]) == 2

    def test_help_lists_subcommands(self, cli_runner):
        """Top-level help names every experiment"""
        result = cli_runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        for name in SUBCOMMANDS:
            assert name in result.output
