#!/usr/bin/env python3
"""
Closed-loop propagation with disturbance injection, contact refinement,
invariant monitoring, phase-portrait generation and log export.
"""

import enum
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from barrier import (
    CONTACT_TOLERANCE,
    BarrierEvaluation,
    BarrierSpec,
    ContactType,
    SetMembership,
    abssq,
    classify_contact,
    evaluate_barrier,
    margin_from_evaluation,
    membership_of_value,
)
from controller import ControlDecision, LandingController
from core import format_float, write_csv, write_json
from dynamics import make_policy, rk4_step, sample_disturbance

logger = logging.getLogger(__name__)

# Monitored barriers may not exceed this value
MONITOR_TOLERANCE = 1e-6

# Fraction of the layer depth tolerated below the layer before counting an exit
LAYER_EXIT_MARGIN = 0.05

W_FLOOR = 1e-9

PORTRAIT_POLICIES = ("helpful", "zero", "adversarial")


class IntegrationError(RuntimeError):
    """The propagated state became non-finite."""

    def __init__(self, t: float, x: np.ndarray):
        super().__init__(f"non-finite state at t={t:.6f}: {np.array2string(np.asarray(x))}")
        self.t = t
        self.x = np.asarray(x)


class Outcome(enum.Enum):
    LANDING = "landing"
    DOCKING = "docking"
    UNSAFE_CONTACT = "unsafe_contact"
    NO_CONTACT = "no_contact"
    TIMEOUT = "timeout"
    SAFETY_VIOLATION = "safety_violation"


_CONTACT_OUTCOMES = {
    ContactType.LANDING: Outcome.LANDING,
    ContactType.DOCKING: Outcome.DOCKING,
    ContactType.UNSAFE_CONTACT: Outcome.UNSAFE_CONTACT,
    ContactType.NO_CONTACT: Outcome.NO_CONTACT,
}


@dataclass(frozen=True)
class StepRecord:
    t: float
    x: np.ndarray
    u: np.ndarray
    w_u: np.ndarray
    w_x: np.ndarray
    h: float
    h_dot: float
    h_dot_w: float
    values: Dict[str, float]
    W: float
    margin: float
    membership: SetMembership


@dataclass
class TrajectoryLog:
    """Per-step history of one run."""

    scenario: str
    barrier_names: Tuple[str, ...]
    metadata: Dict[str, Any] = field(default_factory=dict)
    records: List[StepRecord] = field(default_factory=list)

    def append(self, record: StepRecord) -> None:
        if self.records and record.t <= self.records[-1].t:
            raise ValueError(f"log times must increase: {record.t} after {self.records[-1].t}")
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    @property
    def states(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    @property
    def inputs(self) -> np.ndarray:
        return np.array([r.u for r in self.records])

    def column(self, name: str) -> np.ndarray:
        """Barrier value series by name, or a scalar record attribute."""
        if name in self.barrier_names:
            return np.array([r.values[name] for r in self.records])
        return np.array([getattr(r, name) for r in self.records])

    def columns(self) -> List[str]:
        first = self.records[0]
        header = ["t"]
        header += [f"x{i}" for i in range(first.x.size)]
        header += [f"u{i}" for i in range(first.u.size)]
        header += [f"w_u{i}" for i in range(first.w_u.size)]
        header += [f"w_x{i}" for i in range(first.w_x.size)]
        header += ["h", "h_dot", "h_dot_w"]
        header += list(self.barrier_names)
        header += ["W", "cbf_margin", "membership"]
        return header

    def rows(self) -> List[List[str]]:
        rows = []
        for r in self.records:
            numbers = [r.t, *r.x, *r.u, *r.w_u, *r.w_x, r.h, r.h_dot, r.h_dot_w]
            numbers += [r.values[name] for name in self.barrier_names]
            numbers += [r.W, r.margin]
            rows.append([format_float(v) for v in numbers] + [r.membership.value])
        return rows

    def to_csv(self, path: str) -> None:
        write_csv(path, self.columns(), self.rows())


@dataclass
class SimOutcome:
    classification: Outcome
    t_f: Optional[float] = None
    terminal_h_dot: Optional[float] = None
    terminal_h_dot_disturbed: Optional[float] = None
    terminal_state: Optional[List[float]] = None
    peak_values: Dict[str, float] = field(default_factory=dict)
    peak_input: float = 0.0
    violations: List[Dict[str, Any]] = field(default_factory=list)
    min_W: float = float("inf")
    max_W: float = 0.0
    relaxation_events: int = 0
    layer_entry_time: Optional[float] = None
    layer_exits: int = 0
    steps: int = 0

    @property
    def success(self) -> bool:
        return (
            self.classification in (Outcome.LANDING, Outcome.DOCKING) and not self.violations
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "classification": self.classification.value,
            "success": self.success,
            "t_f": self.t_f,
            "terminal_h_dot": self.terminal_h_dot,
            "terminal_h_dot_disturbed": self.terminal_h_dot_disturbed,
            "terminal_state": self.terminal_state,
            "peak_values": dict(self.peak_values),
            "peak_input": self.peak_input,
            "violations": list(self.violations),
            "min_W": self.min_W,
            "max_W": self.max_W,
            "relaxation_events": self.relaxation_events,
            "layer_entry_time": self.layer_entry_time,
            "layer_exits": self.layer_exits,
            "steps": self.steps,
        }


@dataclass
class Scenario:
    """A ready-to-run closed loop."""

    name: str
    model: Any
    controller: Any
    policy: Any
    x0: np.ndarray
    dt: float
    t_max: float
    objective: ContactType = ContactType.DOCKING
    t0: float = 0.0
    contact_tolerance: float = CONTACT_TOLERANCE
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def epsilon(self) -> float:
        return self.controller.primary.epsilon


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HeldStep:
    """Input and disturbance held constant over one control step."""

    decision: ControlDecision
    w_u: np.ndarray
    w_x: np.ndarray

    def span(self, remaining: float) -> float:
        """How long to hold, at most the time left to the next sample."""
        hold = self.decision.hold
        if hold is None or hold >= remaining * (1.0 - 1e-9):
            return remaining
        return hold


def hold_step(
    model, controller, policy, t: float, x: np.ndarray, horizon: Optional[float] = None
) -> HeldStep:
    """Compute the input at (t, x) and draw the disturbance that goes with it."""
    primary = controller.primary
    decision = controller.compute(t, x, horizon)
    w_u, w_x = sample_disturbance(
        policy, primary, model, t, x, decision.evaluations[primary.name]
    )
    return HeldStep(decision, w_u, w_x)


def _check_finite(t: float, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise IntegrationError(t, x)


def integrate_step(
    model,
    controller,
    policy,
    t: float,
    x: np.ndarray,
    dt: float,
    held: Optional[HeldStep] = None,
) -> np.ndarray:
    """
    Advance from t to t + dt under zero-order hold with RK4.

    With held given, its input and disturbance are held for all of dt.
    Otherwise u and (w_u, w_x) are drawn at t and drawn again whenever the
    controller's hold time runs out before t + dt.

    Raises:
        IntegrationError: if a new state is not finite
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if held is not None:
        x_next = rk4_step(model, t, x, held.decision.u, held.w_u, held.w_x, dt)
        _check_finite(t + dt, x_next)
        return x_next

    tau, remaining = t, dt
    while remaining > 0:
        held = hold_step(model, controller, policy, tau, x, remaining)
        span = held.span(remaining)
        x = rk4_step(model, tau, x, held.decision.u, held.w_u, held.w_x, span)
        _check_finite(tau + span, x)
        if span == remaining:
            break
        tau += span
        remaining -= span
    return x


def detect_contact(
    h_of: Callable[[float, np.ndarray], float],
    propagate: Callable[[float], np.ndarray],
    t0: float,
    dt: float,
    tolerance: float = CONTACT_TOLERANCE,
    max_iterations: int = 200,
) -> Tuple[float, np.ndarray]:
    """
    Refine a sign change of h across [t0, t0 + dt] by bisection.

    Args:
        h_of: constraint evaluator h(t, x)
        propagate: state reached after a sub-step of the given length from t0
        t0: step start, where h < 0
        dt: step length, with h >= 0 at its end
        tolerance: accepted |h| at the event

    Returns:
        Tuple of (t_f, x_f)
    """
    lo, hi = 0.0, dt
    x_hi = propagate(hi)
    if abs(h_of(t0 + hi, x_hi)) <= tolerance:
        return t0 + hi, x_hi

    for _ in range(max_iterations):
        mid = 0.5 * (lo + hi)
        x_mid = propagate(mid)
        h_mid = h_of(t0 + mid, x_mid)
        if abs(h_mid) <= tolerance:
            return t0 + mid, x_mid
        if h_mid < 0:
            lo = mid
        else:
            hi, x_hi = mid, x_mid
        if hi - lo <= 1e-15 * max(1.0, abs(t0)):
            break

    logger.debug("contact bisection stopped at width %.3e", hi - lo)
    return t0 + hi, x_hi


# ---------------------------------------------------------------------------
# Closed loop
# ---------------------------------------------------------------------------

def _membership(spec: BarrierSpec, evaluation: BarrierEvaluation, epsilon: float) -> SetMembership:
    if evaluation.h > spec.d:
        return SetMembership.OUTSIDE
    return membership_of_value(evaluation.value, epsilon)


def _make_record(scenario, controller, t, x, u, w_u, w_x, evaluations) -> StepRecord:
    primary = controller.primary
    main = evaluations[primary.name]
    return StepRecord(
        t=t,
        x=np.array(x, dtype=float),
        u=np.array(u, dtype=float),
        w_u=np.array(w_u, dtype=float),
        w_x=np.array(w_x, dtype=float),
        h=main.h,
        h_dot=main.h_dot,
        h_dot_w=main.h_dot_w,
        values={name: evaluation.value for name, evaluation in evaluations.items()},
        W=main.w_margin,
        margin=margin_from_evaluation(primary, main, scenario.model, t, x, u),
        membership=_membership(primary, main, scenario.epsilon),
    )


class _RunMonitor:
    """Tracks safety, layer capture and W statistics over one run."""

    def __init__(self, epsilon: float):
        self.epsilon = epsilon
        self.violations: List[Dict[str, Any]] = []
        self.peaks: Dict[str, float] = {}
        self.peak_input = 0.0
        self.min_W = float("inf")
        self.max_W = 0.0
        self.layer_entry_time: Optional[float] = None
        self.layer_exits = 0
        self._below = False

    def observe(self, record: StepRecord, monitored: Sequence[str]) -> None:
        for name in monitored:
            value = record.values[name]
            self.peaks[name] = max(self.peaks.get(name, -np.inf), value)
            if value > MONITOR_TOLERANCE:
                self.violations.append({"t": record.t, "barrier": name, "value": value})
                logger.error("t=%.3f: %s = %.3e exceeds %.1e", record.t, name, value, MONITOR_TOLERANCE)

        self.peak_input = max(self.peak_input, float(np.max(np.abs(record.u))))
        self.min_W = min(self.min_W, record.W)
        self.max_W = max(self.max_W, record.W)

        main = record.values[monitored[0]]
        if self.layer_entry_time is None:
            if main >= -self.epsilon:
                self.layer_entry_time = record.t
            return
        below = main < -(1.0 + LAYER_EXIT_MARGIN) * self.epsilon
        if below and not self._below:
            self.layer_exits += 1
            logger.warning("t=%.3f: left the boundary layer (H = %.6g)", record.t, main)
        self._below = below


def run_scenario(scenario: Scenario) -> Tuple[TrajectoryLog, SimOutcome]:
    """
    Simulate until contact, timeout or a safety violation.

    The log has one record per input update. Controllers that hold their
    input for less than dt add records between the dt samples; steps counts
    the samples only.

    Returns:
        Tuple of (trajectory log, outcome)
    """
    model = scenario.model
    controller = scenario.controller
    policy = scenario.policy
    primary = controller.primary
    dt = scenario.dt
    if dt <= 0:
        raise ValueError("dt must be positive")

    controller.reset()
    policy.reset()

    log = TrajectoryLog(
        scenario=scenario.name,
        barrier_names=tuple(controller.barriers),
        metadata=dict(scenario.metadata, dt=dt, t_max=scenario.t_max, policy=policy.name),
    )
    monitor = _RunMonitor(scenario.epsilon)
    outcome = SimOutcome(classification=Outcome.TIMEOUT)

    t = scenario.t0
    x = np.array(scenario.x0, dtype=float)
    steps = 0
    while True:
        remaining = scenario.t0 + (steps + 1) * dt - t
        held = hold_step(model, controller, policy, t, x, remaining)
        decision, w_u, w_x = held.decision, held.w_u, held.w_x
        record = _make_record(scenario, controller, t, x, decision.u, w_u, w_x, decision.evaluations)
        log.append(record)
        monitor.observe(record, controller.monitored())

        if monitor.violations:
            outcome.classification = Outcome.SAFETY_VIOLATION
            break
        if t >= scenario.t_max - 1e-9:
            logger.info("%s: no contact before t_max = %.1f", scenario.name, scenario.t_max)
            break

        span = held.span(remaining)
        x_next = integrate_step(model, controller, policy, t, x, span, held)
        sample_reached = span == remaining
        if sample_reached:
            steps += 1

        if primary.constraint.value(t + span, x_next) >= -scenario.contact_tolerance:
            t_f, x_f = detect_contact(
                primary.constraint.value,
                lambda tau: rk4_step(model, t, x, decision.u, w_u, w_x, tau),
                t,
                span,
                scenario.contact_tolerance,
            )
            evaluations = {
                name: evaluate_barrier(spec, model, t_f, x_f)
                for name, spec in controller.barriers.items()
            }
            final = _make_record(scenario, controller, t_f, x_f, decision.u, w_u, w_x, evaluations)
            log.append(final)
            monitor.observe(final, controller.monitored())

            main = evaluations[primary.name]
            grad_h = primary.constraint.gradient(t_f, x_f)
            outcome.t_f = t_f
            outcome.terminal_h_dot = main.h_dot
            outcome.terminal_h_dot_disturbed = main.h_dot + float(grad_h @ w_x)
            outcome.terminal_state = [float(v) for v in x_f]
            contact = classify_contact(
                primary, t_f, x_f, main.h_dot, scenario.objective, scenario.contact_tolerance
            )
            outcome.classification = (
                Outcome.SAFETY_VIOLATION if monitor.violations else _CONTACT_OUTCOMES[contact]
            )
            break

        t = scenario.t0 + steps * dt if sample_reached else t + span
        x = x_next

    outcome.steps = steps
    outcome.peak_values = dict(monitor.peaks)
    outcome.peak_input = monitor.peak_input
    outcome.violations = monitor.violations
    outcome.min_W = monitor.min_W
    outcome.max_W = monitor.max_W
    outcome.relaxation_events = getattr(controller, "relaxation_events", 0)
    outcome.layer_entry_time = monitor.layer_entry_time
    outcome.layer_exits = monitor.layer_exits
    if outcome.min_W < W_FLOOR:
        logger.warning("%s: W fell to %.3e, below %.0e", scenario.name, outcome.min_W, W_FLOOR)

    logger.info(
        "%s: %s after %d steps (t_f=%s)",
        scenario.name,
        outcome.classification.value,
        steps,
        outcome.t_f,
    )
    return log, outcome


def write_run_outputs(
    log: TrajectoryLog, outcome: SimOutcome, directory: str, stem: Optional[str] = None
) -> Tuple[str, str]:
    """Write the step CSV and the JSON summary; returns both paths."""
    stem = stem or log.scenario
    csv_path = os.path.join(directory, f"{stem}.csv")
    json_path = os.path.join(directory, f"{stem}.json")
    log.to_csv(csv_path)
    write_json(json_path, {"metadata": log.metadata, "outcome": outcome.to_dict()})
    return csv_path, json_path


# ---------------------------------------------------------------------------
# Phase portrait
# ---------------------------------------------------------------------------

@dataclass
class PortraitTrajectory:
    label: str
    policy: str
    points: np.ndarray
    outcome: SimOutcome

    @property
    def name(self) -> str:
        return f"{self.label}_{self.policy}"


@dataclass
class PortraitDataset:
    epsilon: float
    trajectories: List[PortraitTrajectory]
    level_sets: Dict[float, np.ndarray]


def level_set_polyline(
    spec: BarrierSpec, level: float, h_min: float, samples: int = 200
) -> np.ndarray:
    """
    Points (h, h_dot_w) with H = level and h_min <= h <= 0.

    Solves Phi(h) = Phi(level) + abssq(h_dot_w) / 2 - delta for h along an
    even grid of abssq(h_dot_w).
    """
    potential = spec.potential
    base = potential.eval(level) - spec.delta
    q_low = 2.0 * (potential.eval(0.0) - base)
    q_high = 2.0 * (potential.eval(h_min) - base)
    if q_high < q_low:
        return np.zeros((0, 2))
    q = np.linspace(q_low, q_high, samples)
    speeds = np.sign(q) * np.sqrt(np.abs(q))
    heights = np.array([potential.inverse(base + 0.5 * abssq(s)) for s in speeds])
    return np.column_stack([heights, speeds])


def run_phase_portrait(
    spec: BarrierSpec,
    model,
    initial_states: Dict[str, np.ndarray],
    policies: Sequence[str] = PORTRAIT_POLICIES,
    dt: float = 0.02,
    t_max: float = 600.0,
    levels: Optional[Sequence[float]] = None,
    h_min: Optional[float] = None,
    samples: int = 200,
) -> PortraitDataset:
    """
    Trajectories in the (h, h_dot_w) plane under the equality-tracking law,
    one per initial state and policy, plus level sets of H1.

    Args:
        spec: H1 barrier on the reduced model
        model: docking-axis double integrator
        initial_states: labelled start states
        policies: disturbance policy names
        levels: H1 levels, default 0, -eps, -1.4 eps, -2 eps
        h_min: lower h limit for level sets, default the deepest start

    Returns:
        The portrait dataset
    """
    epsilon = spec.epsilon
    if levels is None:
        levels = (0.0, -epsilon, -1.4 * epsilon, -2.0 * epsilon)

    trajectories = []
    for label, state in initial_states.items():
        for policy_name in policies:
            scenario = Scenario(
                name=f"portrait-{label}-{policy_name}",
                model=model,
                controller=LandingController(spec, model, step=dt),
                policy=make_policy(policy_name, target=spec),
                x0=np.asarray(state, dtype=float),
                dt=dt,
                t_max=t_max,
                objective=ContactType.DOCKING,
            )
            log, outcome = run_scenario(scenario)
            points = np.column_stack(
                [log.times, log.column("h"), log.column("h_dot_w"), log.column(spec.name)]
            )
            trajectories.append(PortraitTrajectory(label, policy_name, points, outcome))

    if h_min is None:
        h_min = min(spec.constraint.value(0.0, np.asarray(s)) for s in initial_states.values())
    level_sets = {level: level_set_polyline(spec, level, h_min, samples) for level in levels}
    return PortraitDataset(epsilon=epsilon, trajectories=trajectories, level_sets=level_sets)


def write_portrait(dataset: PortraitDataset, directory: str) -> List[str]:
    """One CSV per trajectory and per level set; returns the written paths."""
    paths = []
    for trajectory in dataset.trajectories:
        path = os.path.join(directory, f"trajectory_{trajectory.name}.csv")
        rows = [[format_float(v) for v in point] for point in trajectory.points]
        write_csv(path, ["t", "h", "h_dot_w", "H1"], rows)
        paths.append(path)

    for index, (level, polyline) in enumerate(sorted(dataset.level_sets.items(), reverse=True)):
        path = os.path.join(directory, f"level_set_{index}.csv")
        rows = [[format_float(level), format_float(h), format_float(s)] for h, s in polyline]
        write_csv(path, ["level", "h", "h_dot_w"], rows)
        paths.append(path)
    return paths
