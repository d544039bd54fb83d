#!/usr/bin/env python3

import argparse
import os

import pytest
from unittest.mock import patch

# Import modules for testing
import rcbf
from core import read_csv, read_json
from verifier import (
    check_contact_speed_cap,
    check_disturbance_bounds,
    check_feasibility,
    check_gain_reproduction,
    check_gradients,
    check_line_max,
    CERES_20KM,
    _short_run,
    check_closed_loops,
    check_qp_kkt,
    report_checks,
)


SHORT_CERES = [
    "initial_state=[496000.0, 0.0, 0.0, 0.0, 15.0, 0.0]",
    "simulation.t_max=2000",
]


def scenario_args(command="run", config="leo-docking-layer", **overrides):
    values = dict(
        command=command, config=config, config_path=None, seed=None, gamma1=None,
        gamma2=None, k=None, dt=None, t_max=None, policy=None, out=None,
        overrides=[], verbose=0,
    )
    values.update(overrides)
    return argparse.Namespace(**values)


def run_main(args):
    with patch("argparse.ArgumentParser.parse_args", return_value=args):
        rcbf.main()


class TestIntegrationFlow:
    """Test whole commands from parsed arguments to files on disk."""

    def test_run_writes_log_and_summary(self, temp_dir, capsys):
        """The in-layer docking preset docks and leaves a CSV and a JSON summary."""
        run_main(scenario_args(out=temp_dir, verbose=1))

        summary = read_json(os.path.join(temp_dir, "leo-docking.json"))
        assert summary["outcome"]["success"] is True
        assert summary["outcome"]["classification"] == "docking"
        assert 0.07 <= summary["outcome"]["terminal_h_dot"] <= 0.12
        assert summary["metadata"]["seed"] == 0

        rows = read_csv(os.path.join(temp_dir, "leo-docking.csv"))
        assert len(rows) == summary["outcome"]["steps"] + 1
        assert "cbf_margin" in rows[0]
        assert "Wrote" in capsys.readouterr().out

    def test_run_seed_override_is_recorded(self, temp_dir):
        with pytest.raises(SystemExit):
            run_main(scenario_args(out=temp_dir, seed=11, t_max=2.0))
        summary = read_json(os.path.join(temp_dir, "leo-docking.json"))
        assert summary["metadata"]["seed"] == 11
        assert summary["outcome"]["classification"] == "timeout"

    def test_timeout_exits_one(self, temp_dir):
        with pytest.raises(SystemExit) as excinfo:
            run_main(scenario_args(out=temp_dir, t_max=1.0))
        assert excinfo.value.code == 1

    def test_sweep_writes_report(self, temp_dir, capsys):
        """Three seeds of the in-layer preset all dock."""
        run_main(scenario_args(command="sweep", out=temp_dir, seeds="0..2", jobs=1))

        report = read_json(os.path.join(temp_dir, "sweep.json"))
        assert report["runs"] == 3
        assert report["classifications"] == {"docking": 3}
        assert [r["seed"] for r in report["per_seed"]] == [0, 1, 2]
        assert "Summary: 3/3 successful (docking: 3)" in capsys.readouterr().out

    def test_ceres_run_with_overrides(self, temp_dir):
        run_main(scenario_args(config="ceres-landing", out=temp_dir, overrides=list(SHORT_CERES)))
        summary = read_json(os.path.join(temp_dir, "ceres-landing.json"))
        assert summary["outcome"]["classification"] == "landing"
        assert summary["outcome"]["peak_input"] <= 0.5

    def test_run_from_exported_file(self, temp_dir):
        path = os.path.join(temp_dir, "layer.json")
        run_main(scenario_args(command="config", config_command="export", name="leo-docking-layer", path=path))
        assert os.path.exists(path)

        out = os.path.join(temp_dir, "from-file")
        with pytest.raises(SystemExit):
            # A 0.5 s horizon times out, but the files are still written
            run_main(scenario_args(config=None, config_path=path, out=out, t_max=0.5))
        assert os.path.exists(os.path.join(out, "leo-docking.csv"))


@pytest.mark.slow
class TestPortraitFlow:
    def test_portrait_writes_all_files(self, temp_dir, capsys):
        run_main(scenario_args(command="portrait", config="phase-portrait", out=temp_dir))
        names = sorted(os.listdir(temp_dir))
        assert len(names) == 10
        assert "level_set_0.csv" in names
        assert "Summary: 10 files written" in capsys.readouterr().out


class TestVerifierChecks:
    """The cheap checks of the verify command pass on their own."""

    def test_gain_reproduction(self):
        assert check_gain_reproduction().passed

    def test_feasibility(self):
        assert check_feasibility().passed

    def test_sampled_checks(self):
        for result in (
            check_contact_speed_cap(2000, seed=1),
            check_gradients(20, seed=1),
            check_qp_kkt(200, seed=1),
            check_line_max(20, seed=1),
            check_disturbance_bounds(20, seed=1),
        ):
            assert result.passed, f"{result.name}: {result.detail}"

    def test_truncated_run_passes_without_contact(self):
        result = _short_run(
            "ceres-landing", [("simulation.t_max", 5.0)], label="short", require_contact=False
        )
        assert result.passed, result.detail
        assert result.name == "closed loop short"
        assert "timeout" in result.detail

    def test_timeout_fails_when_contact_required(self):
        assert not _short_run("ceres-landing", [("simulation.t_max", 5.0)]).passed

    def test_adversarial_ceres_run(self):
        result = _short_run(
            "ceres-landing",
            [
                ("initial_state", CERES_20KM),
                ("simulation.t_max", 2000.0),
                ("simulation.policy", "adversarial"),
            ],
        )
        assert result.passed, result.detail

    @pytest.mark.slow
    def test_closed_loops(self):
        results = check_closed_loops()
        assert len(results) == 4
        for result in results:
            assert result.passed, f"{result.name}: {result.detail}"

    def test_report(self, capsys):
        results = [check_gain_reproduction(), check_feasibility()]
        assert report_checks(results, verbosity=1) == (2, 0)
        assert "Summary: 2 passed, 0 failed" in capsys.readouterr().out

    @pytest.mark.slow
    def test_verify_command(self, capsys):
        with patch("argparse.ArgumentParser.parse_args") as mock_parse_args:
            mock_parse_args.return_value = scenario_args(command="verify", samples=10, seed=0)
            rcbf.main()
        assert "0 failed" in capsys.readouterr().out
