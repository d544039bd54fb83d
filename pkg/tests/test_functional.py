#!/usr/bin/env python3

import argparse
import json

import pytest
from unittest.mock import patch

# Import the main entry point
import rcbf
from config_manager import ConfigError

SHORT_CERES = [
    "initial_state=[496000.0, 0.0, 0.0, 0.0, 15.0, 0.0]",
    "simulation.t_max=2000",
]


def scenario_args(command="run", config="leo-docking-layer", **overrides):
    """Namespace shaped like the parser output for a scenario verb."""
    values = dict(
        command=command,
        config=config,
        config_path=None,
        seed=None,
        gamma1=None,
        gamma2=None,
        k=None,
        dt=None,
        t_max=None,
        policy=None,
        out=None,
        overrides=[],
        verbose=0,
    )
    values.update(overrides)
    return argparse.Namespace(**values)


class TestCommandLineInterface:
    """Test the command-line interface functionality."""

    @patch("argparse.ArgumentParser.parse_args")
    @patch("rcbf.cmd_run")
    def test_run_command(self, mock_run, mock_parse_args):
        """Test dispatch of the run command."""
        args = scenario_args(verbose=1)
        mock_parse_args.return_value = args
        mock_run.return_value = 0

        rcbf.main()

        mock_run.assert_called_once_with(args, 2)  # base verbosity 1 + arg verbosity 1

    @patch("argparse.ArgumentParser.parse_args")
    @patch("rcbf.cmd_sweep")
    def test_failed_sweep_exits_nonzero(self, mock_sweep, mock_parse_args):
        """A sweep with failures exits 1."""
        mock_parse_args.return_value = scenario_args(command="sweep", seeds="0..2", jobs=1)
        mock_sweep.return_value = 1

        with pytest.raises(SystemExit) as excinfo:
            rcbf.main()
        assert excinfo.value.code == 1

    @patch("argparse.ArgumentParser.parse_args")
    @patch("rcbf.cmd_portrait")
    def test_config_error_exits_two(self, mock_portrait, mock_parse_args, capsys):
        """Validation errors are printed one per line and exit 2."""
        mock_parse_args.return_value = scenario_args(command="portrait", config="phase-portrait")
        mock_portrait.side_effect = ConfigError(["simulation.dt: must be > 0", "gains.k: bad"])

        with pytest.raises(SystemExit) as excinfo:
            rcbf.main()
        assert excinfo.value.code == 2
        out = capsys.readouterr().out
        assert "  simulation.dt: must be > 0" in out
        assert "  gains.k: bad" in out

    @patch("argparse.ArgumentParser.parse_args")
    @patch("rcbf.cmd_verify")
    def test_runtime_error_exits_one(self, mock_verify, mock_parse_args, capsys):
        """Numerical failures exit 1 with the message."""
        mock_parse_args.return_value = argparse.Namespace(command="verify", samples=10, seed=0, verbose=0)
        mock_verify.side_effect = RuntimeError("state is not finite")

        with pytest.raises(SystemExit) as excinfo:
            rcbf.main()
        assert excinfo.value.code == 1
        assert "Error: state is not finite" in capsys.readouterr().out

    @patch("argparse.ArgumentParser.parse_args")
    def test_missing_command(self, mock_parse_args, capsys):
        """No verb prints usage guidance."""
        mock_parse_args.return_value = argparse.Namespace(command=None, verbose=0)

        with pytest.raises(SystemExit):
            rcbf.main()
        assert "Please specify a command" in capsys.readouterr().out


class TestOverrides:
    """Test translation of shorthand flags."""

    def test_shorthands_then_set(self):
        args = scenario_args(seed=7, gamma2=0.071, policy="zero", k="auto", overrides=["gains.kp=0.2"])
        assert rcbf.collect_overrides(args) == [
            "simulation.seed=7",
            "tolerances.gamma2=0.071",
            "simulation.policy=" + json.dumps("zero"),
            "gains.k=" + json.dumps("auto"),
            "gains.kp=0.2",
        ]

    def test_numeric_gain(self):
        assert rcbf.collect_overrides(scenario_args(k="25")) == ["gains.k=25.0"]

    def test_bad_gain(self):
        with pytest.raises(ConfigError):
            rcbf.collect_overrides(scenario_args(k="fast"))

    def test_missing_config(self):
        with pytest.raises(ConfigError):
            rcbf.cmd_run(scenario_args(config=None), 1)


class TestConfigCommands:
    """Test the config verbs."""

    @patch("argparse.ArgumentParser.parse_args")
    def test_config_list(self, mock_parse_args, capsys):
        mock_parse_args.return_value = argparse.Namespace(command="config", config_command="list", verbose=0)
        rcbf.main()
        assert capsys.readouterr().out.split() == [
            "ceres-landing", "leo-docking", "leo-docking-layer", "phase-portrait"
        ]

    @patch("argparse.ArgumentParser.parse_args")
    def test_config_get(self, mock_parse_args, capsys):
        mock_parse_args.return_value = argparse.Namespace(
            command="config", config_command="get", name="leo-docking", option="tolerances.gamma2", verbose=0
        )
        rcbf.main()
        assert capsys.readouterr().out.strip() == "0.12"

    @patch("argparse.ArgumentParser.parse_args")
    def test_config_get_missing(self, mock_parse_args, capsys):
        mock_parse_args.return_value = argparse.Namespace(
            command="config", config_command="get", name="leo-docking", option="tolerances.gamma9", verbose=0
        )
        with pytest.raises(SystemExit) as excinfo:
            rcbf.main()
        assert excinfo.value.code == 1
        assert "not found" in capsys.readouterr().out


class TestScenarioCommands:
    """Run verbs against the presets."""

    def test_infeasible_tolerances(self, capsys):
        with patch("argparse.ArgumentParser.parse_args", return_value=scenario_args(config="leo-docking", gamma2=0.071)):
            with pytest.raises(SystemExit) as excinfo:
                rcbf.main()
        assert excinfo.value.code == 2
        assert "feasibility assumption violated" in capsys.readouterr().out

    def test_auto_gain_is_printed(self, temp_dir, capsys):
        args = scenario_args(config="ceres-landing", k="auto", out=temp_dir, overrides=list(SHORT_CERES))
        assert rcbf.cmd_run(args, 1) == 0
        out = capsys.readouterr().out
        assert "Solved gain k = 0.355" in out
        assert "✓ ceres-landing: landing" in out

    def test_empty_seed_range(self):
        args = scenario_args(command="sweep", seeds="3..1", jobs=1)
        with pytest.raises(ConfigError):
            rcbf.cmd_sweep(args, 1)
