#!/usr/bin/env python3
"""
Closed-loop control laws built from robust CBF rows.

The landing law scales grad(H1) g as far as the CBF row and the input box
allow. The docking law projects a nominal input onto the CBF rows of H1,
the corridor bounds and the speed limit.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from barrier import BarrierError, BarrierEvaluation, BarrierSpec, eval_H, evaluate_barrier
from dynamics import SingularStateError, rk4_step, worst_case_disturbance
from qp import (
    DegenerateDirectionError,
    QpInfeasibleError,
    QpProblem,
    solve_line_max,
    solve_min_norm,
)

logger = logging.getLogger(__name__)

# Fraction of the current H1 that one held step may close under the worst-case disturbance
STEP_CONTRACTION = 0.5
STEP_SEARCH_ITERATIONS = 40

# Largest k W dt allowed for one held input before the step is split
STIFFNESS_LIMIT = 0.5
MAX_SUBSTEPS = 64


@dataclass(frozen=True)
class CbfRow:
    """The robust CBF condition of one barrier written as a . u <= b."""

    a: np.ndarray
    b: float
    source: str


@dataclass(frozen=True)
class ControlDecision:
    """Input chosen at one step together with the barrier data behind it."""

    u: np.ndarray
    evaluations: Dict[str, BarrierEvaluation]
    rows: Tuple[str, ...] = ()
    relaxed: Tuple[str, ...] = ()
    fallback: bool = False
    step_limited: bool = False
    hold: Optional[float] = None


def cbf_row(
    spec: BarrierSpec,
    model,
    t: float,
    x: np.ndarray,
    evaluation: Optional[BarrierEvaluation] = None,
) -> CbfRow:
    """Row a = grad(H) g, b = alpha(-H) W - W - d_t H - grad(H) f."""
    if evaluation is None:
        evaluation = evaluate_barrier(spec, model, t, x)
    W = evaluation.w_margin
    a = evaluation.gradient @ model.g(t, x)
    b = (
        spec.alpha_w(-evaluation.value) * W
        - W
        - evaluation.time_partial
        - evaluation.gradient @ model.f(t, x)
    )
    return CbfRow(a=np.atleast_1d(a), b=float(b), source=spec.name)


def landing_control(
    spec: BarrierSpec,
    model,
    t: float,
    x: np.ndarray,
    evaluation: Optional[BarrierEvaluation] = None,
) -> np.ndarray:
    """
    Largest admissible scaling of grad(H1) g.

    Holds the CBF condition with equality unless the input box saturates
    first. The result always lies in the box.

    Raises:
        DegenerateDirectionError: if grad(H1) g vanishes
    """
    row = cbf_row(spec, model, t, x, evaluation)
    u = solve_line_max(row.a, model.input_box, row.b)
    return np.clip(u, -model.input_box, model.input_box)


def substep_count(
    spec: BarrierSpec,
    evaluation: BarrierEvaluation,
    span: float,
    limit: float = STIFFNESS_LIMIT,
    max_substeps: int = MAX_SUBSTEPS,
) -> int:
    """
    Number of equal holds over span that keeps k W dt at or below limit,
    with k the slope of alpha_w through the layer.
    """
    slope = 2.0 / spec.epsilon
    stiffness = slope * evaluation.w_margin * span
    if not np.isfinite(stiffness):
        return max_substeps
    return int(min(max(np.ceil(stiffness / limit), 1), max_substeps))


def predicted_value(
    spec: BarrierSpec,
    model,
    t: float,
    x: np.ndarray,
    u: np.ndarray,
    dt: float,
    evaluation: Optional[BarrierEvaluation] = None,
) -> float:
    """
    H after holding u for dt under the worst-case disturbance at (t, x).

    Returns inf where the next state leaves the domain of H.
    """
    w_u, w_x = worst_case_disturbance(spec, model, t, x, evaluation)
    x_next = rk4_step(model, t, x, u, w_u, w_x, dt)
    try:
        value = eval_H(spec, model, t + dt, x_next)
    except (BarrierError, SingularStateError):
        return float("inf")
    return value if np.isfinite(value) else float("inf")


def limit_landing_step(
    spec: BarrierSpec,
    model,
    t: float,
    x: np.ndarray,
    u: np.ndarray,
    dt: float,
    evaluation: Optional[BarrierEvaluation] = None,
    contraction: float = STEP_CONTRACTION,
) -> Tuple[np.ndarray, bool]:
    """
    Shrink a line-max input so one held step keeps H at or below
    contraction * H(t, x) under the worst-case disturbance. Outside S1 the
    step only has to keep H from rising.

    The input stays on the grad(H) g line; the largest admissible scaling
    is found by bisection down to full braking at the box.

    Returns:
        Tuple of (input, whether it was reduced)
    """
    if evaluation is None:
        evaluation = evaluate_barrier(spec, model, t, x)
    value = evaluation.value
    target = contraction * value if value <= 0 else value
    if predicted_value(spec, model, t, x, u, dt, evaluation) <= target:
        return u, False

    direction = np.atleast_1d(evaluation.gradient @ model.g(t, x))
    reach = float(np.max(np.abs(direction)))
    if reach <= 1e-9:
        return u, False
    box = model.input_box

    def along(b: float) -> np.ndarray:
        return np.clip(b * direction, -box, box)

    low = -box / reach
    high = max(float(u @ direction) / float(direction @ direction), low)
    if predicted_value(spec, model, t, x, along(low), dt, evaluation) > target:
        level = logging.WARNING if value <= 0 else logging.DEBUG
        logger.log(
            level, "t=%.3f: no input keeps %s below %.6g next step, braking at the box", t, spec.name, target
        )
        return along(low), True

    for _ in range(STEP_SEARCH_ITERATIONS):
        middle = 0.5 * (low + high)
        if predicted_value(spec, model, t, x, along(middle), dt, evaluation) <= target:
            low = middle
        else:
            high = middle
    logger.debug("t=%.3f: step-ahead limit on %s, scale %.6g", t, spec.name, low)
    return along(low), True


@dataclass(frozen=True)
class DockingControllerConfig:
    k1: float = 25.0
    k0: float = 200.0
    kv: float = 20.0
    kp: float = 0.1
    u_tilde1: float = 0.057
    u_tilde0: float = 0.021

    def __post_init__(self):
        for name in ("k1", "k0", "kv", "kp", "u_tilde1", "u_tilde0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"docking controller {name} must be positive")


@dataclass(frozen=True)
class DockingBarriers:
    h1: BarrierSpec
    h0_right: BarrierSpec
    h0_left: BarrierSpec
    velocity: BarrierSpec

    def as_dict(self) -> Dict[str, BarrierSpec]:
        return {
            spec.name: spec for spec in (self.h1, self.h0_right, self.h0_left, self.velocity)
        }


def nominal_docking_control(
    spec: BarrierSpec,
    model,
    t: float,
    x: np.ndarray,
    k_p: float,
    evaluation: Optional[BarrierEvaluation] = None,
) -> np.ndarray:
    """
    Minimum-norm input meeting the H1 condition with equality, plus -k_p x1
    on the radial input.

    Raises:
        DegenerateDirectionError: if |grad(H1) g| <= 1e-9
    """
    row = cbf_row(spec, model, t, x, evaluation)
    norm_sq = float(row.a @ row.a)
    if np.sqrt(norm_sq) <= 1e-9:
        raise DegenerateDirectionError(f"{spec.name}: grad(H) g vanishes")
    u = row.b * row.a / norm_sq
    u[0] -= k_p * x[0]
    return u


def _lateral_only(k_p: float, x: np.ndarray, input_dim: int) -> np.ndarray:
    u = np.zeros(input_dim)
    u[0] = -k_p * x[0]
    return u


def _solve_docking(
    config: DockingControllerConfig,
    specs: DockingBarriers,
    model,
    t: float,
    x: np.ndarray,
    include_left: Optional[bool] = None,
) -> ControlDecision:
    evaluations = {
        name: evaluate_barrier(spec, model, t, x) for name, spec in specs.as_dict().items()
    }
    h1 = specs.h1
    if include_left is None:
        include_left = evaluations[specs.h0_left.name].value <= 0

    try:
        u_nom = nominal_docking_control(h1, model, t, x, config.kp, evaluations[h1.name])
    except DegenerateDirectionError:
        logger.warning("t=%.3f: H1 direction degenerate, nominal keeps lateral term only", t)
        u_nom = _lateral_only(config.kp, x, model.input_dim)

    rows = {
        spec.name: cbf_row(spec, model, t, x, evaluations[spec.name])
        for spec in (h1, specs.h0_right, specs.velocity)
    }
    if include_left:
        rows[specs.h0_left.name] = cbf_row(specs.h0_left, model, t, x, evaluations[specs.h0_left.name])

    # Relaxation order when infeasible; H1 stays
    drop_order = [specs.velocity.name, specs.h0_left.name, specs.h0_right.name]
    relaxed: List[str] = []
    while True:
        order = [h1.name, specs.h0_right.name, specs.h0_left.name, specs.velocity.name]
        kept = [name for name in order if name in rows]
        problem = QpProblem(
            target=u_nom,
            box=model.input_box,
            halfspaces=[(rows[name].a, rows[name].b) for name in kept],
        )
        try:
            u = solve_min_norm(problem)
            return ControlDecision(u, evaluations, tuple(kept), tuple(relaxed))
        except QpInfeasibleError as e:
            candidates = [name for name in drop_order if name in rows]
            if not candidates:
                break
            logger.warning("t=%.3f: QP infeasible (%s), dropping %s", t, e, candidates[0])
            relaxed.append(candidates[0])
            del rows[candidates[0]]

    logger.warning("t=%.3f: H1 infeasible with the box, applying line-max law", t)
    try:
        u = landing_control(h1, model, t, x, evaluations[h1.name])
    except DegenerateDirectionError:
        u = np.clip(u_nom, -model.input_box, model.input_box)
    return ControlDecision(u, evaluations, (h1.name,), tuple(relaxed), fallback=True)


def docking_control(
    config: DockingControllerConfig,
    specs: DockingBarriers,
    model,
    t: float,
    x: np.ndarray,
    include_left: Optional[bool] = None,
) -> np.ndarray:
    """
    Project the nominal docking input onto the active CBF rows and the box.

    H1, H0_r and H_v are always imposed; H0_l is added when H0_l(t, x) <= 0,
    or as given by include_left.

    Args:
        config: gains
        specs: the four docking barriers
        model: HCW model
        t: time
        x: state
        include_left: override for the H0_l activation test

    Returns:
        The input
    """
    return _solve_docking(config, specs, model, t, x, include_left).u


class LandingController:
    """
    Line-max law on a single lifted barrier.

    With a step length the input is held for step / n, n chosen by
    substep_count, and is limited so that holding it cannot carry H past
    contraction * H under the worst-case disturbance.
    """

    def __init__(
        self,
        spec: BarrierSpec,
        model,
        step: Optional[float] = None,
        contraction: float = STEP_CONTRACTION,
        max_substeps: int = MAX_SUBSTEPS,
    ):
        if step is not None and not step > 0:
            raise ValueError("step must be positive")
        if not 0.0 <= contraction < 1.0:
            raise ValueError("contraction must lie in [0, 1)")
        if max_substeps < 1:
            raise ValueError("max_substeps must be at least 1")
        self.spec = spec
        self.model = model
        self.step = step
        self.contraction = contraction
        self.max_substeps = max_substeps
        self.reset()

    @property
    def primary(self) -> BarrierSpec:
        return self.spec

    @property
    def barriers(self) -> Dict[str, BarrierSpec]:
        return {self.spec.name: self.spec}

    def monitored(self) -> Tuple[str, ...]:
        return (self.spec.name,)

    def reset(self) -> None:
        self.degenerate_steps = 0
        self.limited_steps = 0
        self.split_steps = 0

    def compute(self, t: float, x: np.ndarray, horizon: Optional[float] = None) -> ControlDecision:
        """
        Input at (t, x). Without a configured step the input carries no hold
        time. Otherwise horizon, the time left until the next sample the
        caller must land on, defaults to the step.
        """
        evaluation = evaluate_barrier(self.spec, self.model, t, x)
        evaluations = {self.spec.name: evaluation}
        try:
            u = landing_control(self.spec, self.model, t, x, evaluation)
        except DegenerateDirectionError:
            self.degenerate_steps += 1
            logger.warning("t=%.3f: grad(H) g vanishes, holding zero input", t)
            return ControlDecision(np.zeros(self.model.input_dim), evaluations, fallback=True)

        if self.step is None:
            return ControlDecision(u, evaluations, (self.spec.name,))
        span = horizon if horizon is not None else self.step

        n = substep_count(self.spec, evaluation, span, max_substeps=self.max_substeps)
        if n > 1:
            self.split_steps += 1
        hold = span / n
        u, limited = limit_landing_step(
            self.spec, self.model, t, x, u, hold, evaluation, self.contraction
        )
        self.limited_steps += int(limited)
        return ControlDecision(u, evaluations, (self.spec.name,), step_limited=limited, hold=hold)


class DockingController:
    """
    Docking QP controller with a latched left-bound row.

    Once H0_l <= 0 has been seen the left row stays in the QP for the rest
    of the run.
    """

    def __init__(self, config: DockingControllerConfig, specs: DockingBarriers, model):
        self.config = config
        self.specs = specs
        self.model = model
        self.reset()

    @property
    def primary(self) -> BarrierSpec:
        return self.specs.h1

    @property
    def barriers(self) -> Dict[str, BarrierSpec]:
        return self.specs.as_dict()

    def reset(self) -> None:
        self.left_latched = False
        self.relaxation_events = 0

    def monitored(self) -> Tuple[str, ...]:
        names = [self.specs.h1.name, self.specs.h0_right.name, self.specs.velocity.name]
        if self.left_latched:
            names.append(self.specs.h0_left.name)
        return tuple(names)

    def compute(self, t: float, x: np.ndarray, horizon: Optional[float] = None) -> ControlDecision:
        if not self.left_latched:
            left = evaluate_barrier(self.specs.h0_left, self.model, t, x)
            if left.value <= 0:
                self.left_latched = True
                logger.info("t=%.3f: left corridor bound engaged", t)

        decision = _solve_docking(
            self.config, self.specs, self.model, t, x, include_left=self.left_latched
        )
        if decision.relaxed or decision.fallback:
            self.relaxation_events += 1
        return decision
