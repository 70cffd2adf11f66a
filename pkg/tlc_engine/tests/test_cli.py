"""
Tests for the experiment command line
"""

import importlib
import json
from unittest.mock import patch

import pandas as pd
import pytest

from ..cli.main import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, main
from ..core.config import load_config_document
from ..core.engine import run_experiment
from ..core.exceptions import NonconvergenceError

# tlc_engine.cli re-exports main(), which shadows the submodule attribute
cli_main_module = importlib.import_module("tlc_engine.cli.main")


class TestParser:
    """Argument parsing"""

    def test_scenarios_are_subcommands(self):
        args = build_parser().parse_args(["validate-gradient", "--seed", "18446744073709551615"])
        assert args.scenario == "validate-gradient"
        assert args.seed == 2 ** 64 - 1

    def test_seed_out_of_range(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["simulate", "--seed", "-1"])

    def test_unknown_mode(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["simulate", "--mode", "hybrid"])

    def test_scenario_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestMain:
    """Exit codes and artifacts"""

    def test_simulate_end_to_end(self, write_config, tmp_path):
        path = write_config({
            "scenario": "simulate",
            "interarrival": [6, 6, 10, 20],
            "horizon": 100.0,
            "replications": 1,
        })
        out = tmp_path / "run"
        code = main(["simulate", "--config", str(path), "--seed", "42", "--out", str(out)])
        assert code == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["seed"] == 42
        assert (out / "resolved_config.yaml").exists()
        assert (out / "costs.csv").exists()

    def test_command_line_scenario_wins(self, write_config, tmp_path):
        path = write_config({"scenario": "optimize", "interarrival": [6, 6, 10, 20]})
        with patch.object(cli_main_module, "run_experiment") as run_mock:
            run_mock.return_value.output_dir = tmp_path
            run_mock.return_value.artifacts = []
            assert main(["simulate", "--config", str(path)]) == EXIT_OK
        experiment = run_mock.call_args.args[0]
        assert experiment.scenario.value == "simulate"

    def test_config_error(self, write_config):
        path = write_config({"scenario": "simulate", "interarrival": [6, 6, 10, 20], "horizn": 5})
        assert main(["simulate", "--config", str(path)]) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG

    def test_no_rates_is_config_error(self):
        assert main(["simulate"]) == EXIT_CONFIG

    def test_engine_failure(self, write_config):
        path = write_config({"scenario": "simulate", "interarrival": [6, 6, 10, 20]})
        with patch.object(cli_main_module, "run_experiment", side_effect=NonconvergenceError("stuck", events=10)):
            assert main(["simulate", "--config", str(path)]) == EXIT_RUNTIME

    def test_unexpected_failure(self, write_config):
        path = write_config({"scenario": "simulate", "interarrival": [6, 6, 10, 20]})
        with patch.object(cli_main_module, "run_experiment", side_effect=RuntimeError("disk full")):
            assert main(["simulate", "--config", str(path)]) == EXIT_RUNTIME


@pytest.mark.slow
class TestAcceptance:
    """Full-size optimisation runs"""

    def test_optimize_reduces_cost(self, tmp_path, test_config):
        experiment = load_config_document({
            "scenario": "optimize",
            "preset": "measured",
            "seed": 2024,
            "output_dir": str(tmp_path),
        })
        result = run_experiment(experiment, test_config)
        assert result.summary["final_cost"] < result.summary["initial_cost"]

    def test_baseline_cost_grows_with_load(self, tmp_path, test_config):
        experiment = load_config_document({
            "scenario": "compare-baseline",
            "preset": "measured",
            "seed": 2024,
            "replications": 5,
            "optimizer": {"iterations": 5, "replications": 5},
            "baseline": {"scaling_factors": [1.0, 2.0]},
            "output_dir": str(tmp_path),
        })
        run_experiment(experiment, test_config)
        frame = pd.read_csv(tmp_path / "compare_baseline.csv")
        assert frame["baseline_cost"].iloc[1] > frame["baseline_cost"].iloc[0]
