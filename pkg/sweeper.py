#!/usr/bin/env python3

import copy
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Sequence

import numpy as np

from config_manager import ConfigError, set_config_value
from scenarios import build_scenario
from sim import run_scenario

logger = logging.getLogger(__name__)

SEED_RANGE = re.compile(r"^\s*(\d+)\s*\.\.\s*(\d+)\s*$")


def parse_seed_range(text: str) -> List[int]:
    """
    Parse an inclusive seed range "A..B" or a single seed "N".

    Raises:
        ConfigError: if the range is malformed or empty
    """
    match = SEED_RANGE.match(text)
    if match:
        first, last = int(match.group(1)), int(match.group(2))
        seeds = list(range(first, last + 1))
    elif text.strip().isdigit():
        seeds = [int(text.strip())]
    else:
        raise ConfigError([f"--seeds: expected A..B, got '{text}'"])
    if not seeds:
        raise ConfigError([f"--seeds: range '{text}' is empty"])
    return seeds


def run_seed(config: Dict[str, Any], seed: int) -> Dict[str, Any]:
    """
    Run one seed of a configuration.

    Returns:
        The outcome summary with the seed attached
    """
    seeded = copy.deepcopy(config)
    set_config_value(seeded, "simulation.seed", seed)
    _, outcome = run_scenario(build_scenario(seeded))
    summary = outcome.to_dict()
    summary["seed"] = seed
    return summary


def _distribution(values: Sequence[float]) -> Dict[str, Any]:
    if not values:
        return {"count": 0}
    data = np.asarray(values, dtype=float)
    return {
        "count": int(data.size),
        "min": float(data.min()),
        "mean": float(data.mean()),
        "max": float(data.max()),
        "std": float(data.std()),
    }


def aggregate(results: Sequence[Dict[str, Any]]) -> Dict[str, Any]:
    """Success rate, classification counts and t_f / terminal speed statistics."""
    ordered = sorted(results, key=lambda r: r["seed"])
    successes = [r for r in ordered if r["success"]]
    counts: Dict[str, int] = {}
    for r in ordered:
        counts[r["classification"]] = counts.get(r["classification"], 0) + 1
    return {
        "runs": len(ordered),
        "successes": len(successes),
        "success_rate": len(successes) / len(ordered) if ordered else 0.0,
        "classifications": counts,
        "t_f": _distribution([r["t_f"] for r in ordered if r["t_f"] is not None]),
        "terminal_h_dot": _distribution(
            [r["terminal_h_dot"] for r in ordered if r["terminal_h_dot"] is not None]
        ),
        "failures": [
            {"seed": r["seed"], "classification": r["classification"], "violations": r["violations"]}
            for r in ordered
            if not r["success"]
        ],
        "per_seed": ordered,
    }


def sweep(
    config: Dict[str, Any], seeds: Sequence[int], jobs: int = 1, verbosity: int = 1
) -> Dict[str, Any]:
    """
    Run a configuration over several seeds.

    Args:
        config: validated scenario configuration
        seeds: seeds to run
        jobs: worker processes; 1 runs in-process
        verbosity: verbosity level

    Returns:
        The aggregate report, ordered by seed
    """
    if not seeds:
        raise ConfigError(["--seeds: no seeds to run"])

    results = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {seed: pool.submit(run_seed, config, seed) for seed in seeds}
            for seed in seeds:
                results.append(futures[seed].result())
                if verbosity >= 2:
                    _print_seed(results[-1])
    else:
        for seed in seeds:
            results.append(run_seed(config, seed))
            if verbosity >= 2:
                _print_seed(results[-1])

    report = aggregate(results)
    logger.info(
        "sweep: %d/%d successful", report["successes"], report["runs"]
    )
    return report


def _print_seed(result: Dict[str, Any]) -> None:
    status = "✓" if result["success"] else "✗"
    t_f = result["t_f"]
    speed = result["terminal_h_dot"]
    detail = f"t_f={t_f:.1f}s h_dot={speed:.4f}m/s" if t_f is not None else "no contact"
    print(f"{status} seed {result['seed']}: {result['classification']} {detail}")
