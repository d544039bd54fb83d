#!/usr/bin/env python3
"""
Invariant suite behind the verify command: gain reproduction, contact-speed
cap, gradient consistency, solver oracles, integrator order, disturbance
bounds and short closed-loop runs.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from barrier import (
    BarrierSpec,
    DisturbanceBounds,
    LinearClassK,
    LinearPotential,
    evaluate_barrier,
    feasibility_check,
    solve_alpha_gain,
)
from config_manager import read_config, set_config_value
from dynamics import (
    CeresAltitude,
    CeresModel,
    HcwModel,
    docking_axis_constraint,
    make_policy,
    rk4_step,
)
from qp import QpInfeasibleError, QpProblem, kkt_residuals, solve_line_max, solve_min_norm_with_multipliers
from scenarios import build_scenario
from sim import MONITOR_TOLERANCE, Outcome, run_scenario

logger = logging.getLogger(__name__)

CERES_GAIN = 0.355
DOCKING_GAIN = 24.7
GAIN_TOLERANCE = 0.005


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def ceres_h1(gain: float = CERES_GAIN) -> Tuple[BarrierSpec, CeresModel]:
    model = CeresModel()
    spec = BarrierSpec.h1(CeresAltitude(model.rho), model.potential(), 0.1, 1.5, LinearClassK(gain))
    return spec, model


def docking_h1(gain: float = 25.0) -> Tuple[BarrierSpec, HcwModel]:
    model = HcwModel()
    spec = BarrierSpec.h1(
        docking_axis_constraint(), LinearPotential(-0.057), 0.07, 0.12, LinearClassK(gain)
    )
    return spec, model


def random_ceres_state(rng: np.random.Generator, altitude: Tuple[float, float]) -> np.ndarray:
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    radius = CeresModel().rho + rng.uniform(*altitude)
    return np.concatenate([radius * direction, rng.uniform(-3.0, 3.0, 3)])


def random_docking_state(rng: np.random.Generator, distance: Tuple[float, float]) -> np.ndarray:
    return np.array(
        [
            rng.uniform(-0.03, 0.03),
            -rng.uniform(*distance),
            rng.uniform(-0.1, 0.1),
            rng.uniform(-1.0, 1.0),
        ]
    )


def check_gain_reproduction() -> CheckResult:
    ceres, ceres_model = ceres_h1()
    docking, docking_model = docking_h1()
    k_ceres = solve_alpha_gain(ceres, ceres_model.bounds)
    k_docking = solve_alpha_gain(docking, docking_model.bounds)
    passed = (
        abs(k_ceres - CERES_GAIN) <= GAIN_TOLERANCE * CERES_GAIN
        and abs(k_docking - DOCKING_GAIN) <= GAIN_TOLERANCE * DOCKING_GAIN
    )
    return CheckResult("gain reproduction", passed, f"k_ceres={k_ceres:.5g} k_docking={k_docking:.5g}")


def check_feasibility() -> CheckResult:
    ceres, ceres_model = ceres_h1()
    docking, docking_model = docking_h1()
    edge = BarrierSpec.h1(
        docking_axis_constraint(), LinearPotential(-0.057), 0.07, 0.072, LinearClassK(25.0)
    )
    passed = (
        feasibility_check(ceres, ceres_model.bounds)
        and feasibility_check(docking, docking_model.bounds)
        and not feasibility_check(edge, docking_model.bounds)
    )
    return CheckResult("feasibility assumption", passed, "presets feasible, equality edge rejected")


def check_contact_speed_cap(samples: int, seed: int = 0) -> CheckResult:
    """States on h = 0 with H1 <= 0 never exceed the approach-speed cap."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    counted = 0
    for spec, model, draw in (
        (*ceres_h1(), lambda: random_ceres_state(rng, (0.0, 0.0))),
        (*docking_h1(), lambda: np.array(
            [rng.uniform(-0.03, 0.03), 0.0, rng.uniform(-0.2, 0.2), rng.uniform(-0.5, 0.5)]
        )),
    ):
        cap = math.sqrt(2.0 * spec.delta)
        for _ in range(samples):
            x = draw()
            evaluation = evaluate_barrier(spec, model, 0.0, x)
            if evaluation.value <= 0 and abs(evaluation.h) <= 1e-6:
                counted += 1
                worst = max(worst, evaluation.h_dot_w - cap)
    passed = counted > 0 and worst <= 1e-8
    return CheckResult("contact speed cap", passed, f"{counted} boundary states, worst excess {worst:.2e}")


def finite_difference_gradient(spec, model, t, x) -> np.ndarray:
    gradient = np.zeros(x.size)
    for i in range(x.size):
        step = 1e-4 * max(1.0, abs(x[i]))
        forward, backward = x.copy(), x.copy()
        forward[i] += step
        backward[i] -= step
        gradient[i] = (
            evaluate_barrier(spec, model, t, forward).value
            - evaluate_barrier(spec, model, t, backward).value
        ) / (2.0 * step)
    return gradient


def check_gradients(samples: int, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for spec, model, draw in (
        (*ceres_h1(), lambda: random_ceres_state(rng, (100.0, 50000.0))),
        (*docking_h1(), lambda: random_docking_state(rng, (1.0, 500.0))),
    ):
        for _ in range(samples):
            x = draw()
            analytic = evaluate_barrier(spec, model, 0.0, x).gradient
            numeric = finite_difference_gradient(spec, model, 0.0, x)
            worst = max(worst, np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic))
    return CheckResult("gradient consistency", worst < 1e-5, f"worst relative error {worst:.2e}")


def random_qp(rng: np.random.Generator, m: int) -> QpProblem:
    box = rng.uniform(0.5, 2.0)
    rows = []
    anchor = rng.uniform(-box, box, m)
    for _ in range(rng.integers(0, 5)):
        a = rng.standard_normal(m)
        # Keep a known interior point feasible
        rows.append((a, float(a @ anchor) + rng.uniform(0.0, 1.0)))
    return QpProblem(target=rng.uniform(-3.0 * box, 3.0 * box, m), box=box, halfspaces=rows)


def check_qp_kkt(samples: int, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(samples):
        problem = random_qp(rng, 2 + i % 2)
        try:
            solution = solve_min_norm_with_multipliers(problem)
        except QpInfeasibleError as e:
            return CheckResult("QP KKT residuals", False, f"feasible problem reported infeasible: {e}")
        worst = max(worst, *kkt_residuals(problem, solution))
    return CheckResult("QP KKT residuals", worst < 1e-8, f"worst residual {worst:.2e}")


def check_line_max(samples: int, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        d = rng.standard_normal(3)
        box = rng.uniform(0.1, 1.0)
        c = rng.uniform(-0.5, 2.0)
        u = solve_line_max(d, box, c)
        limit = box / np.max(np.abs(d))
        grid = np.linspace(-limit, limit, 20001)
        feasible = grid[(d @ d) * grid <= c]
        if feasible.size == 0:
            continue
        gap = float(u @ d) / float(d @ d) - feasible.max()
        worst = max(worst, abs(gap) if gap < 0 else max(gap - (grid[1] - grid[0]), 0.0))
        if np.max(np.abs(u)) > box + 1e-12 or float(d @ u) > c + 1e-12:
            return CheckResult("line max oracle", False, "returned input leaves the feasible set")
    return CheckResult("line max oracle", worst <= 1e-9, f"worst gap {worst:.2e}")


def circular_orbit_error(dt: float, duration: float, altitude: float = 20000.0) -> float:
    """Position error after integrating a circular Ceres orbit with u = w = 0."""
    model = CeresModel()
    radius = model.rho + altitude
    speed = math.sqrt(model.mu / radius)
    rate = speed / radius
    x = np.array([radius, 0.0, 0.0, 0.0, speed, 0.0])
    zero_u, zero_wx = np.zeros(3), np.zeros(6)
    steps = int(round(duration / dt))
    for k in range(steps):
        x = rk4_step(model, k * dt, x, zero_u, zero_u, zero_wx, dt)
    angle = rate * steps * dt
    exact = radius * np.array([math.cos(angle), math.sin(angle), 0.0])
    return float(np.linalg.norm(x[:3] - exact))


def check_rk4_order() -> CheckResult:
    coarse = circular_orbit_error(80.0, 8000.0)
    fine = circular_orbit_error(40.0, 8000.0)
    order = math.log2(coarse / fine)
    return CheckResult("RK4 order", order >= 3.8, f"observed order {order:.2f}")


def check_disturbance_bounds(samples: int, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    spec, model = docking_h1()
    policies = [make_policy(name, seed=seed, target=spec) for name in ("zero", "random", "adversarial", "helpful")]
    for _ in range(samples):
        x = random_docking_state(rng, (1.0, 500.0))
        t = rng.uniform(0.0, 1000.0)
        for policy in policies:
            w_u, w_x = policy.sample(spec, model, t, x)
            if (
                np.linalg.norm(w_u) > model.bounds.w_u_max + 1e-12
                or np.linalg.norm(w_x) > model.bounds.w_x_max + 1e-12
            ):
                return CheckResult("disturbance bounds", False, f"{policy.name} exceeded bounds at t={t:.2f}")
    return CheckResult("disturbance bounds", True, f"{samples * len(policies)} samples within bounds")


CERES_20KM = [476000.0 + 20000.0, 0.0, 0.0, 0.0, 15.0, 0.0]


def _short_run(
    preset: str,
    edits: List[Tuple[str, object]],
    label: Optional[str] = None,
    require_contact: bool = True,
) -> CheckResult:
    """
    One closed-loop run. Without require_contact a timeout passes as long
    as every monitored barrier stayed at or below zero.
    """
    config = read_config(preset)
    for path, value in edits:
        set_config_value(config, path, value)
    log, outcome = run_scenario(build_scenario(config))
    peak_input = float(np.max(np.abs(log.inputs)))
    peak_barrier = max(outcome.peak_values.values())
    box = float(config["physical"]["u_bar"])
    if require_contact:
        safe = outcome.success
    else:
        safe = outcome.success or (
            outcome.classification is Outcome.TIMEOUT and peak_barrier <= MONITOR_TOLERANCE
        )
    passed = safe and peak_input <= box
    detail = (
        f"{outcome.classification.value} t_f={outcome.t_f} "
        f"h_dot={outcome.terminal_h_dot} peak |u|={peak_input:.4g} peak H={peak_barrier:.3g}"
    )
    return CheckResult(f"closed loop {label or preset}", passed, detail)


def check_closed_loops() -> List[CheckResult]:
    return [
        _short_run(
            "ceres-landing",
            [("initial_state", CERES_20KM), ("simulation.t_max", 2000.0)],
            label="ceres-landing 20 km",
        ),
        _short_run(
            "ceres-landing",
            [
                ("initial_state", CERES_20KM),
                ("simulation.t_max", 2000.0),
                ("simulation.policy", "adversarial"),
            ],
            label="ceres-landing 20 km adversarial",
        ),
        # Covers the low, fast descent of the preset without running to contact
        _short_run(
            "ceres-landing",
            [("simulation.t_max", 1500.0)],
            label="ceres-landing first 1500 s",
            require_contact=False,
        ),
        _short_run("leo-docking-layer", [("simulation.policy", "adversarial")]),
    ]


def run_checks(samples: int = 200, seed: int = 0) -> List[CheckResult]:
    """
    Run the whole suite.

    Args:
        samples: sample count for the sampled checks
        seed: base seed

    Returns:
        One result per check
    """
    checks: List[Callable[[], object]] = [
        check_gain_reproduction,
        check_feasibility,
        lambda: check_contact_speed_cap(samples * 500, seed),
        lambda: check_gradients(samples * 5, seed),
        lambda: check_qp_kkt(samples * 50, seed),
        lambda: check_line_max(samples, seed),
        check_rk4_order,
        lambda: check_disturbance_bounds(samples, seed),
        check_closed_loops,
    ]
    results: List[CheckResult] = []
    for check in checks:
        outcome = check()
        if isinstance(outcome, list):
            results.extend(outcome)
        else:
            results.append(outcome)
    return results


def report_checks(results: List[CheckResult], verbosity: int = 1) -> Tuple[int, int]:
    """
    Print the pass/fail table.

    Returns:
        Tuple of (passed, failed)
    """
    passed = sum(1 for r in results if r.passed)
    failed = len(results) - passed
    if verbosity >= 1:
        print(f"Verification of {len(results)} checks:")
        for result in results:
            status = "✓" if result.passed else "✗"
            print(f"{status} {result.name}: {result.detail}")
        print(f"\nSummary: {passed} passed, {failed} failed")
    return passed, failed
