#!/usr/bin/env python3

import csv
import json
import logging
import os
import sys
from typing import Any, Dict, List, Sequence

# Environment variable overriding the verbosity-derived log level
LOG_LEVEL_ENV = "RCBF_LOG_LEVEL"

# Verbosity used when no -v flags are given
DEFAULT_VERBOSITY = 1

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def verbosity_to_level(verbosity: int) -> int:
    if verbosity <= 0:
        return logging.WARNING
    if verbosity == 1:
        return logging.INFO
    return logging.DEBUG


def configure_logging(verbosity: int = DEFAULT_VERBOSITY) -> int:
    """
    Install a single stderr handler on the root logger.

    RCBF_LOG_LEVEL (a level name such as DEBUG) wins over the verbosity.

    Args:
        verbosity: count of -v flags added to the default

    Returns:
        The level that was applied
    """
    level = verbosity_to_level(verbosity)
    env_level = os.environ.get(LOG_LEVEL_ENV)
    if env_level:
        named = logging.getLevelName(env_level.strip().upper())
        if isinstance(named, int):
            level = named
        else:
            print(f"Warning: ignoring unknown {LOG_LEVEL_ENV} value '{env_level}'", file=sys.stderr)

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)
    return level


def ensure_directory(path: str) -> str:
    if path:
        os.makedirs(path, exist_ok=True)
    return path


def read_json(file_path: str) -> Dict[str, Any]:
    """
    Read a JSON document.

    Args:
        file_path: Path to the file

    Returns:
        The parsed document
    """
    with open(file_path, 'r') as f:
        return json.load(f)


def write_json(file_path: str, data: Any) -> None:
    """
    Write data as indented JSON, creating the parent directory.

    Args:
        file_path: Destination path
        data: JSON-serializable data
    """
    ensure_directory(os.path.dirname(file_path))
    with open(file_path, 'w') as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def format_float(value: float) -> str:
    """17 significant digits, enough to re-parse the same double."""
    return "%.17g" % value


def write_csv(file_path: str, header: Sequence[str], rows: List[Sequence[str]]) -> None:
    ensure_directory(os.path.dirname(file_path))
    with open(file_path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(file_path: str) -> List[Dict[str, str]]:
    with open(file_path, 'r', newline='') as f:
        return list(csv.DictReader(f))
