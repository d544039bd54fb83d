#!/usr/bin/env python3

import pytest

from config_manager import ConfigError
from sweeper import aggregate, parse_seed_range, run_seed, sweep


def result(seed, classification="docking", success=True, t_f=60.0, speed=0.1):
    return {
        "seed": seed,
        "classification": classification,
        "success": success,
        "t_f": t_f,
        "terminal_h_dot": speed,
        "violations": [],
    }


class TestSeedRange:
    """Test parsing of --seeds."""

    def test_inclusive_range(self):
        assert parse_seed_range("0..19") == list(range(20))

    def test_single_seed(self):
        assert parse_seed_range(" 7 ") == [7]

    def test_empty_range(self):
        with pytest.raises(ConfigError) as excinfo:
            parse_seed_range("5..4")
        assert "empty" in excinfo.value.errors[0]

    def test_malformed(self):
        with pytest.raises(ConfigError):
            parse_seed_range("1-3")

    def test_no_seeds(self, layer_config):
        with pytest.raises(ConfigError):
            sweep(layer_config, [])


class TestAggregate:
    """Test the sweep report."""

    def test_counts_and_failures(self):
        report = aggregate(
            [
                result(2, "unsafe_contact", success=False, speed=0.2),
                result(0),
                result(1, speed=0.08),
            ]
        )
        assert report["runs"] == 3
        assert report["successes"] == 2
        assert report["success_rate"] == pytest.approx(2 / 3)
        assert report["classifications"] == {"unsafe_contact": 1, "docking": 2}
        assert report["failures"] == [{"seed": 2, "classification": "unsafe_contact", "violations": []}]
        assert [r["seed"] for r in report["per_seed"]] == [0, 1, 2]
        assert report["terminal_h_dot"]["min"] == pytest.approx(0.08)

    def test_timeouts_have_no_contact_statistics(self):
        report = aggregate([result(0, "timeout", success=False, t_f=None, speed=None)])
        assert report["t_f"] == {"count": 0}
        assert report["success_rate"] == 0.0


class TestSweep:
    """Short sweeps of the in-layer docking preset."""

    def test_run_seed_leaves_config_untouched(self, layer_config):
        layer_config["simulation"]["t_max"] = 0.5
        summary = run_seed(layer_config, 4)
        assert summary["seed"] == 4
        assert layer_config["simulation"]["seed"] == 0

    def test_three_seeds(self, layer_config):
        report = sweep(layer_config, [0, 1, 2], verbosity=0)
        assert report["successes"] == 3
        assert report["classifications"] == {"docking": 3}

    def test_parallel_matches_serial(self, layer_config):
        layer_config["simulation"]["t_max"] = 2.0
        serial = sweep(layer_config, [0, 1], jobs=1, verbosity=0)
        parallel = sweep(layer_config, [0, 1], jobs=2, verbosity=0)
        assert serial["per_seed"] == parallel["per_seed"]

    def test_verbose_lines(self, layer_config, capsys):
        layer_config["simulation"]["t_max"] = 0.5
        sweep(layer_config, [3], verbosity=2)
        assert "seed 3: timeout no contact" in capsys.readouterr().out
