#!/usr/bin/env python3
"""Builds models, barriers, controllers and policies from a validated config."""

import dataclasses
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
from scipy.optimize import brentq

from barrier import (
    BarrierError,
    BarrierSpec,
    ContactType,
    DisturbanceBounds,
    LinearClassK,
    LinearPotential,
    eval_H,
    solve_alpha_gain,
)
from config_manager import ConfigError, config_hash, validate_config
from controller import (
    DockingBarriers,
    DockingController,
    DockingControllerConfig,
    LandingController,
)
from dynamics import (
    CeresAltitude,
    CeresModel,
    DoubleIntegratorModel,
    HcwModel,
    LinearConstraint,
    VelocityInfNorm,
    docking_axis_constraint,
    left_bound_constraint,
    make_policy,
    right_bound_constraint,
)
from sim import PortraitDataset, Scenario, run_phase_portrait

logger = logging.getLogger(__name__)

# Relative gap between a configured and the solved gain that triggers a warning
GAIN_MISMATCH_WARNING = 0.01


def _bounds(physical: Dict[str, Any]) -> DisturbanceBounds:
    return DisturbanceBounds(w_u_max=float(physical["w_u_max"]), w_x_max=float(physical["w_x_max"]))


def resolve_gain(spec: BarrierSpec, bounds: DisturbanceBounds, configured: Any) -> float:
    """
    Class-K gain for H1: solved when configured is "auto", otherwise the
    configured value, warning if it strays from the solved one.

    Raises:
        ConfigError: if the tolerances admit no gain
    """
    try:
        solved = solve_alpha_gain(spec, bounds)
    except BarrierError as e:
        raise ConfigError([f"gains.k: {e}"]) from e

    if configured == "auto":
        logger.info("%s: solved class-K gain k = %.6g", spec.name, solved)
        return solved

    gain = float(configured)
    if abs(gain - solved) > GAIN_MISMATCH_WARNING * solved:
        logger.warning(
            "%s: configured gain %.6g differs from solved %.6g by %.2f%%",
            spec.name,
            gain,
            solved,
            100.0 * abs(gain - solved) / solved,
        )
    return gain


def place_in_boundary_layer(
    spec: BarrierSpec, model, t: float, x: np.ndarray, depth: float
) -> np.ndarray:
    """
    Raise the approach speed of x until H1 = -depth * eps.

    Args:
        spec: lifted barrier
        model: model providing approach_direction
        t: time
        x: state with H1 below the target level
        depth: fraction of the layer depth eps, in (0, 1]

    Returns:
        The moved state
    """
    target = -depth * spec.epsilon
    direction = model.approach_direction(x)

    def gap(s: float) -> float:
        return eval_H(spec, model, t, x + s * direction) - target

    if gap(0.0) >= 0:
        raise ConfigError(
            [f"initial_layer_depth: state already has H1 >= {target:.6g}, cannot place it deeper"]
        )
    high = 1e-3
    while gap(high) < 0:
        high *= 2.0
        if high > 1e6:
            raise ConfigError(["initial_layer_depth: no approach speed reaches the layer"])
    s = brentq(gap, 0.0, high, xtol=1e-14, rtol=1e-14)
    return x + s * direction


def _check_initial_state(scenario: Scenario) -> None:
    controller = scenario.controller
    controller.reset()
    errors = []
    primary = controller.primary
    x0 = scenario.x0
    try:
        h = primary.constraint.value(scenario.t0, x0)
        if h > primary.d:
            errors.append(f"initial_state: h = {h:.6g} exceeds d = {primary.d:.6g}")
        for name in controller.monitored():
            value = eval_H(controller.barriers[name], scenario.model, scenario.t0, x0)
            if value > 0:
                errors.append(f"initial_state: outside the safe set of {name} ({name} = {value:.6g})")
    except (BarrierError, ValueError) as e:
        errors.append(f"initial_state: cannot evaluate barriers: {e}")
    if errors:
        raise ConfigError(errors)


def _initial_state(config: Dict[str, Any], spec: BarrierSpec, model) -> np.ndarray:
    x0 = np.array(config["initial_state"], dtype=float)
    depth = config.get("initial_layer_depth")
    if depth is not None:
        x0 = place_in_boundary_layer(spec, model, 0.0, x0, float(depth))
        logger.info("initial state moved into the boundary layer: %s", x0)
    return x0


def _finish(config: Dict[str, Any], name, model, controller, objective, x0, gain) -> Scenario:
    simulation = config["simulation"]
    primary = controller.primary
    policy = make_policy(
        simulation["policy"],
        seed=simulation["seed"],
        hold_interval=simulation["hold_interval"],
        target=primary,
    )
    scenario = Scenario(
        name=name,
        model=model,
        controller=controller,
        policy=policy,
        x0=x0,
        dt=float(simulation["dt"]),
        t_max=float(simulation["t_max"]),
        objective=objective,
        contact_tolerance=float(simulation["contact_tolerance"]),
        metadata={
            "scenario": name,
            "seed": simulation["seed"],
            "config_hash": config_hash(config),
            "gain": gain,
            "epsilon": primary.epsilon,
        },
    )
    _check_initial_state(scenario)
    return scenario


def build_ceres(config: Dict[str, Any]) -> Scenario:
    physical = config["physical"]
    tolerances = config["tolerances"]
    model = CeresModel(
        mu=float(physical["mu"]),
        rho=float(physical["rho"]),
        input_box=float(physical["u_bar"]),
        bounds=_bounds(physical),
    )
    try:
        spec = BarrierSpec.h1(
            CeresAltitude(model.rho),
            model.potential(),
            float(tolerances["gamma1"]),
            float(tolerances["gamma2"]),
            LinearClassK(1.0),
            l_h=float(tolerances["l_h"]),
        )
    except BarrierError as e:
        raise ConfigError([f"physical: {e}"]) from e
    gain = resolve_gain(spec, model.bounds, config["gains"]["k"])
    spec = dataclasses.replace(spec, alpha_w=LinearClassK(gain))

    x0 = _initial_state(config, spec, model)
    controller = LandingController(spec, model, step=float(config["simulation"]["dt"]))
    return _finish(config, "ceres-landing", model, controller, ContactType.LANDING, x0, gain)


def docking_barriers(
    physical: Dict[str, Any], tolerances: Dict[str, Any], gains: DockingControllerConfig
) -> DockingBarriers:
    delta = float(physical["delta"])
    l_h = float(tolerances["l_h"])
    return DockingBarriers(
        h1=BarrierSpec.h1(
            docking_axis_constraint(),
            LinearPotential(-gains.u_tilde1),
            float(tolerances["gamma1"]),
            float(tolerances["gamma2"]),
            LinearClassK(gains.k1),
            l_h=l_h,
            name="H1",
        ),
        h0_right=BarrierSpec.h0(
            right_bound_constraint(delta),
            LinearPotential(-gains.u_tilde0),
            LinearClassK(gains.k0),
            name="H0r",
        ),
        h0_left=BarrierSpec.h0(
            left_bound_constraint(delta, physical.get("left_bound_axis", "lateral")),
            LinearPotential(-gains.u_tilde0),
            LinearClassK(gains.k0),
            name="H0l",
        ),
        velocity=BarrierSpec.direct(
            VelocityInfNorm((2, 3), float(physical["v_max"])), LinearClassK(gains.kv), name="Hv"
        ),
    )


def build_docking(config: Dict[str, Any]) -> Scenario:
    physical = config["physical"]
    tolerances = config["tolerances"]
    gains = config["gains"]
    model = HcwModel(
        mean_motion=float(physical["mean_motion"]),
        input_box=float(physical["u_bar"]),
        bounds=_bounds(physical),
    )

    # Gain of H1 depends only on its potential and tolerances
    provisional = BarrierSpec.h1(
        docking_axis_constraint(),
        LinearPotential(-float(gains["u_tilde1"])),
        float(tolerances["gamma1"]),
        float(tolerances["gamma2"]),
        LinearClassK(1.0),
        l_h=float(tolerances["l_h"]),
    )
    k1 = resolve_gain(provisional, model.bounds, gains["k"])
    controller_config = DockingControllerConfig(
        k1=k1,
        k0=float(gains["k0"]),
        kv=float(gains["kv"]),
        kp=float(gains["kp"]),
        u_tilde1=float(gains["u_tilde1"]),
        u_tilde0=float(gains["u_tilde0"]),
    )
    specs = docking_barriers(physical, tolerances, controller_config)

    x0 = _initial_state(config, specs.h1, model)
    controller = DockingController(controller_config, specs, model)
    return _finish(config, "leo-docking", model, controller, ContactType.DOCKING, x0, k1)


def build_scenario(config: Dict[str, Any]) -> Scenario:
    """
    Validate a configuration and build its closed loop.

    Raises:
        ConfigError: invalid fields, infeasible tolerances or an initial
            state outside the safe sets
    """
    errors = validate_config(config)
    if errors:
        raise ConfigError(errors)
    scenario = config["scenario"]
    if scenario == "ceres-landing":
        return build_ceres(config)
    if scenario == "leo-docking":
        return build_docking(config)
    raise ConfigError([f"scenario: '{scenario}' is not a closed-loop run, use the portrait command"])


@dataclass
class PortraitSetup:
    spec: BarrierSpec
    model: DoubleIntegratorModel
    initial_states: Dict[str, np.ndarray]
    dt: float
    t_max: float
    h_min: Optional[float]
    samples: int

    def run(self) -> PortraitDataset:
        return run_phase_portrait(
            self.spec,
            self.model,
            self.initial_states,
            dt=self.dt,
            t_max=self.t_max,
            h_min=self.h_min,
            samples=self.samples,
        )


def build_portrait(config: Dict[str, Any]) -> PortraitSetup:
    """Docking-axis reduction with one start inside and one outside the layer."""
    errors = validate_config(config)
    if errors:
        raise ConfigError(errors)
    if config["scenario"] != "phase-portrait":
        raise ConfigError([f"scenario: expected phase-portrait, got '{config['scenario']}'"])

    physical = config["physical"]
    tolerances = config["tolerances"]
    gains = config["gains"]
    portrait = config["portrait"]
    model = DoubleIntegratorModel(input_box=float(physical["u_bar"]), bounds=_bounds(physical))
    spec = BarrierSpec.h1(
        LinearConstraint((1.0, 0.0), 0.0, name="h"),
        LinearPotential(-float(gains["u_tilde1"])),
        float(tolerances["gamma1"]),
        float(tolerances["gamma2"]),
        LinearClassK(1.0),
        l_h=float(tolerances["l_h"]),
    )
    gain = resolve_gain(spec, model.bounds, gains["k"])
    spec = dataclasses.replace(spec, alpha_w=LinearClassK(gain))

    inside = place_in_boundary_layer(
        spec, model, 0.0, np.array([float(portrait["start_h"]), 0.0]), float(portrait["inside_depth"])
    )
    outside = np.array(portrait["outside_state"], dtype=float)
    if eval_H(spec, model, 0.0, outside) >= -spec.epsilon:
        raise ConfigError(["portrait.outside_state: state lies inside the boundary layer"])

    return PortraitSetup(
        spec=spec,
        model=model,
        initial_states={"inside": inside, "outside": outside},
        dt=float(config["simulation"]["dt"]),
        t_max=float(portrait["t_max"]),
        h_min=portrait.get("h_min"),
        samples=int(portrait["samples"]),
    )
