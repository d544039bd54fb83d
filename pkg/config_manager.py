#!/usr/bin/env python3

import copy
import hashlib
import json
import numbers
import os
from typing import Any, Dict, List, Optional, Sequence

from core import read_json, write_json

# Checked-in scenario presets
PRESET_DIRECTORY = os.path.join(os.path.dirname(os.path.abspath(__file__)), "presets")

SCENARIOS = ("ceres-landing", "leo-docking", "phase-portrait")

POLICIES = ("zero", "random", "adversarial", "helpful")

LEFT_BOUND_AXES = ("lateral", "along_track")

STATE_DIMENSIONS = {"ceres-landing": 6, "leo-docking": 4}

PHYSICAL_FIELDS = {
    "ceres-landing": ("mu", "rho", "u_bar"),
    "leo-docking": ("u_bar", "delta", "v_max"),
    "phase-portrait": ("u_bar",),
}

GAIN_FIELDS = {
    "ceres-landing": (),
    "leo-docking": ("k0", "kv", "kp", "u_tilde1", "u_tilde0"),
    "phase-portrait": ("u_tilde1",),
}


class ConfigError(ValueError):
    """A scenario configuration failed to load or validate."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def list_presets() -> List[str]:
    """Names of the checked-in presets."""
    if not os.path.isdir(PRESET_DIRECTORY):
        return []
    return sorted(
        name[: -len(".json")] for name in os.listdir(PRESET_DIRECTORY) if name.endswith(".json")
    )


def preset_path(name: str) -> str:
    return os.path.join(PRESET_DIRECTORY, f"{name}.json")


def read_config(source: str) -> Dict[str, Any]:
    """
    Read a config from a file path or a preset name, without validation.

    Args:
        source: path to a JSON file, or the name of a preset

    Returns:
        The configuration dictionary
    """
    path = source if os.path.isfile(source) else preset_path(source)
    if not os.path.isfile(path):
        raise ConfigError(
            [f"config: '{source}' is neither a file nor a preset ({', '.join(list_presets())})"]
        )
    try:
        return read_json(path)
    except json.JSONDecodeError as e:
        raise ConfigError([f"config: cannot parse {path}: {e}"]) from e


def load_config(source: str, overrides: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    """
    Read, override and validate a configuration.

    Raises:
        ConfigError: with one message per invalid field
    """
    config = read_config(source)
    if overrides:
        config = apply_overrides(config, overrides)
    errors = validate_config(config)
    if errors:
        raise ConfigError(errors)
    return config


def get_config_value(config: Dict[str, Any], option_name: str) -> Any:
    """
    Get a value by dot-separated path (e.g. "tolerances.gamma2").

    Returns:
        The value, or None if the path does not exist
    """
    current: Any = config
    for part in option_name.split('.'):
        if not isinstance(current, dict) or part not in current:
            return None
        current = current[part]
    return current


def set_config_value(config: Dict[str, Any], option_name: str, value: Any) -> bool:
    """
    Set a value by dot-separated path, creating intermediate sections.

    Returns:
        True if successful, False if the path runs through a non-section value
    """
    parts = option_name.split('.')
    current = config
    for part in parts[:-1]:
        if part not in current or current[part] is None:
            current[part] = {}
        elif not isinstance(current[part], dict):
            return False
        current = current[part]
    current[parts[-1]] = value
    return True


def parse_value(text: str) -> Any:
    """JSON literal if it parses (numbers, lists, null, true), else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """
    Apply PATH=VALUE overrides to a copy of config.

    Only existing paths may be overridden, which catches misspelt options.
    """
    updated = copy.deepcopy(config)
    errors = []
    for override in overrides:
        if '=' not in override:
            errors.append(f"override '{override}': expected PATH=VALUE")
            continue
        path, text = override.split('=', 1)
        path = path.strip()
        parent_path, _, key = path.rpartition('.')
        parent = get_config_value(updated, parent_path) if parent_path else updated
        if not isinstance(parent, dict) or key not in parent:
            errors.append(f"override '{override}': unknown option '{path}'")
            continue
        set_config_value(updated, path, parse_value(text))
    if errors:
        raise ConfigError(errors)
    return updated


def _is_number(value: Any) -> bool:
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _check_number(
    errors: List[str], section: Dict[str, Any], prefix: str, key: str, minimum: float = 0.0,
    strict: bool = True,
) -> Optional[float]:
    value = section.get(key)
    if not _is_number(value):
        errors.append(f"{prefix}.{key}: expected a number, got {value!r}")
        return None
    if (strict and not value > minimum) or (not strict and value < minimum):
        relation = ">" if strict else ">="
        errors.append(f"{prefix}.{key}: must be {relation} {minimum}, got {value}")
        return None
    return float(value)


def _section(errors: List[str], config: Dict[str, Any], name: str) -> Dict[str, Any]:
    section = config.get(name)
    if not isinstance(section, dict):
        errors.append(f"{name}: missing section")
        return {}
    return section


def validate_config(config: Dict[str, Any]) -> List[str]:
    """
    Check a configuration field by field.

    Args:
        config: configuration dictionary

    Returns:
        List of error messages, empty when valid
    """
    errors: List[str] = []
    scenario = config.get("scenario")
    if scenario not in SCENARIOS:
        return [f"scenario: expected one of {', '.join(SCENARIOS)}, got {scenario!r}"]

    physical = _section(errors, config, "physical")
    for key in PHYSICAL_FIELDS[scenario]:
        _check_number(errors, physical, "physical", key)
    _check_number(errors, physical, "physical", "w_u_max", strict=False)
    w_x_max = _check_number(errors, physical, "physical", "w_x_max", strict=False)
    if scenario == "leo-docking":
        _check_number(errors, physical, "physical", "mean_motion", strict=False)
        axis = physical.get("left_bound_axis", "lateral")
        if axis not in LEFT_BOUND_AXES:
            errors.append(f"physical.left_bound_axis: expected one of {LEFT_BOUND_AXES}, got {axis!r}")

    tolerances = _section(errors, config, "tolerances")
    gamma1 = _check_number(errors, tolerances, "tolerances", "gamma1")
    gamma2 = _check_number(errors, tolerances, "tolerances", "gamma2")
    l_h = _check_number(errors, tolerances, "tolerances", "l_h")
    if gamma1 is not None and gamma2 is not None:
        if gamma2 <= gamma1:
            errors.append(f"tolerances.gamma2: must exceed gamma1 ({gamma2} <= {gamma1})")
        elif l_h is not None and w_x_max is not None:
            floor = gamma1 + 2.0 * l_h * w_x_max
            if not gamma2 > floor:
                errors.append(
                    f"tolerances: feasibility assumption violated "
                    f"(gamma2 = {gamma2} <= gamma1 + 2 l_h w_x_max = {floor:g})"
                )

    gains = _section(errors, config, "gains")
    if gains.get("k") != "auto":
        _check_number(errors, gains, "gains", "k")
    for key in GAIN_FIELDS[scenario]:
        _check_number(errors, gains, "gains", key)

    simulation = _section(errors, config, "simulation")
    dt = _check_number(errors, simulation, "simulation", "dt")
    t_max = _check_number(errors, simulation, "simulation", "t_max")
    if dt is not None and t_max is not None and t_max < dt:
        errors.append(f"simulation.t_max: must be at least dt ({t_max} < {dt})")
    _check_number(errors, simulation, "simulation", "contact_tolerance")
    _check_number(errors, simulation, "simulation", "hold_interval")
    seed = simulation.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        errors.append(f"simulation.seed: expected a nonnegative integer, got {seed!r}")
    if simulation.get("policy") not in POLICIES:
        errors.append(
            f"simulation.policy: expected one of {', '.join(POLICIES)}, got {simulation.get('policy')!r}"
        )

    if scenario in STATE_DIMENSIONS:
        state = config.get("initial_state")
        dim = STATE_DIMENSIONS[scenario]
        if not isinstance(state, list) or len(state) != dim or not all(map(_is_number, state)):
            errors.append(f"initial_state: expected {dim} numbers, got {state!r}")
        depth = config.get("initial_layer_depth")
        if depth is not None and not (_is_number(depth) and 0 < depth <= 1):
            errors.append(f"initial_layer_depth: expected null or a number in (0, 1], got {depth!r}")
    else:
        portrait = _section(errors, config, "portrait")
        start_h = portrait.get("start_h")
        if not _is_number(start_h) or start_h >= 0:
            errors.append(f"portrait.start_h: expected a negative number, got {start_h!r}")
        depth = portrait.get("inside_depth")
        if not (_is_number(depth) and 0 < depth <= 1):
            errors.append(f"portrait.inside_depth: expected a number in (0, 1], got {depth!r}")
        outside = portrait.get("outside_state")
        if not isinstance(outside, list) or len(outside) != 2 or not all(map(_is_number, outside)):
            errors.append(f"portrait.outside_state: expected 2 numbers, got {outside!r}")
        _check_number(errors, portrait, "portrait", "t_max")
        samples = portrait.get("samples")
        if not isinstance(samples, int) or isinstance(samples, bool) or samples < 2:
            errors.append(f"portrait.samples: expected an integer >= 2, got {samples!r}")
        h_min = portrait.get("h_min")
        if h_min is not None and not (_is_number(h_min) and h_min < 0):
            errors.append(f"portrait.h_min: expected null or a negative number, got {h_min!r}")

    output = config.get("output", {})
    if not isinstance(output, dict) or not isinstance(output.get("directory", ""), str):
        errors.append("output.directory: expected a path string")

    return errors


def export_config(config: Dict[str, Any], file_path: str) -> None:
    write_json(file_path, config)


def config_hash(config: Dict[str, Any]) -> str:
    """Short digest of the canonical JSON form."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def output_directory(config: Dict[str, Any]) -> str:
    return get_config_value(config, "output.directory") or os.path.join("results", config["scenario"])
