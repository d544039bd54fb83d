#!/usr/bin/env python3

import logging
import os

import pytest
from unittest.mock import patch

# Import modules to test
from core import (
    LOG_LEVEL_ENV,
    configure_logging,
    format_float,
    read_csv,
    read_json,
    verbosity_to_level,
    write_csv,
    write_json,
)


class TestLogging:
    """Test log level selection."""

    def test_verbosity_levels(self):
        assert verbosity_to_level(0) == logging.WARNING
        assert verbosity_to_level(1) == logging.INFO
        assert verbosity_to_level(3) == logging.DEBUG

    def test_configure_uses_verbosity(self):
        with patch.dict(os.environ, {}, clear=False):
            os.environ.pop(LOG_LEVEL_ENV, None)
            assert configure_logging(2) == logging.DEBUG
            assert len(logging.getLogger().handlers) == 1

    def test_environment_wins(self):
        with patch.dict(os.environ, {LOG_LEVEL_ENV: "error"}):
            assert configure_logging(2) == logging.ERROR

    def test_unknown_environment_value_is_ignored(self, capsys):
        with patch.dict(os.environ, {LOG_LEVEL_ENV: "LOUD"}):
            assert configure_logging(0) == logging.WARNING
        assert "LOUD" in capsys.readouterr().err


class TestFiles:
    """Test JSON and CSV helpers."""

    def test_json_round_trip(self, temp_dir):
        path = os.path.join(temp_dir, "nested", "summary.json")
        data = {"outcome": {"classification": "docking", "t_f": 1153.25}}
        write_json(path, data)
        assert read_json(path) == data

    def test_csv_round_trip(self, temp_dir):
        path = os.path.join(temp_dir, "log.csv")
        write_csv(path, ["t", "h"], [["0", "-1"], ["0.5", "-0.25"]])
        rows = read_csv(path)
        assert rows == [{"t": "0", "h": "-1"}, {"t": "0.5", "h": "-0.25"}]

    @pytest.mark.parametrize("value", [0.1, 1.0 / 3.0, -2.5e-17, 476000.0])
    def test_format_float_reparses_exactly(self, value):
        assert float(format_float(value)) == value
