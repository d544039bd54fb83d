#!/usr/bin/env python3
"""
Robust control barrier function mathematics.

Potential-field lifts H0/H1 of a relative-degree-two constraint h, their
gradients, the worst-case disturbance margin W, the robust CBF condition,
tolerance feasibility and the class-K gain that places the boundary layer
where contact speed stays inside [gamma1, gamma2].
"""

import enum
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

# Contact band for h = 0 detection, in h-units
CONTACT_TOLERANCE = 1e-6

# Relative-degree check on |grad(h) g|
RELATIVE_DEGREE_TOLERANCE = 1e-9


class BarrierError(ValueError):
    """Base class for barrier evaluation failures."""


class BarrierSpecError(BarrierError):
    """A BarrierSpec violates one of its construction invariants."""


class RelativeDegreeError(BarrierError):
    """The constraint output has relative degree lower than two."""


class InvertibilityError(BarrierError):
    """The potential inverse was requested outside its invertible range."""


class DegenerateGradientError(BarrierError):
    """phi(H) vanished, so grad(H) is undefined."""


class InfeasibleToleranceError(BarrierError):
    """gamma1/gamma2 cannot be met under the disturbance bounds."""


class BarrierKind(enum.Enum):
    H0 = "H0"
    H1 = "H1"
    DIRECT = "direct"


class SetMembership(enum.Enum):
    INTERIOR = "interior"
    BOUNDARY_LAYER = "boundary_layer"
    OUTSIDE = "outside"


class ContactType(enum.Enum):
    LANDING = "landing"
    DOCKING = "docking"
    UNSAFE_CONTACT = "unsafe_contact"
    NO_CONTACT = "no_contact"


def abssq(lam: float) -> float:
    """Signed square lam*|lam|; C1 with derivative 2|lam|."""
    return lam * abs(lam)


# ---------------------------------------------------------------------------
# Potential functions
# ---------------------------------------------------------------------------

class PotentialFunction(ABC):
    """Monotone-decreasing potential Phi with derivative phi and inverse."""

    @abstractmethod
    def eval(self, lam: float) -> float:
        ...

    @abstractmethod
    def deriv(self, lam: float) -> float:
        ...

    @abstractmethod
    def inverse(self, value: float) -> float:
        ...


@dataclass(frozen=True)
class LinearPotential(PotentialFunction):
    """Phi(lam) = slope * lam with a negative slope (constant braking authority)."""

    slope: float

    def __post_init__(self):
        if not (self.slope < 0 and math.isfinite(self.slope)):
            raise BarrierSpecError(f"linear potential slope must be negative, got {self.slope}")

    def eval(self, lam: float) -> float:
        return self.slope * lam

    def deriv(self, lam: float) -> float:
        return self.slope

    def inverse(self, value: float) -> float:
        if not math.isfinite(value):
            raise InvertibilityError(f"cannot invert non-finite potential value {value}")
        return value / self.slope


@dataclass(frozen=True)
class CeresGravityPotential(PotentialFunction):
    """
    Point-mass gravity plus net braking authority:
    Phi(lam) = mu / (rho - lam) + a * lam, with a = w_u_max - u_bar < 0.

    Phi is strictly decreasing for lam < peak = rho - sqrt(mu / -a); that
    half-line is the operating range and the inverse is taken on it.
    """

    mu: float
    rho: float
    a: float

    def __post_init__(self):
        if self.mu <= 0 or self.rho <= 0:
            raise BarrierSpecError("gravity potential needs mu > 0 and rho > 0")
        if self.a >= 0:
            raise BarrierSpecError(
                f"braking authority a = w_u_max - u_bar must be negative, got {self.a}"
            )

    @property
    def peak(self) -> float:
        """Upper end of the strictly decreasing range."""
        return self.rho - math.sqrt(self.mu / -self.a)

    def eval(self, lam: float) -> float:
        return self.mu / (self.rho - lam) + self.a * lam

    def deriv(self, lam: float) -> float:
        return self.mu / (self.rho - lam) ** 2 + self.a

    def inverse(self, value: float) -> float:
        peak = self.peak
        floor = self.eval(peak)
        if not math.isfinite(value) or value < floor:
            raise InvertibilityError(
                f"potential value {value} below invertible floor {floor}"
            )
        if value == floor:
            return peak

        # mu/(rho - lam) > 0, so Phi(lam) > a*lam and any lam <= value/a lies above the target
        lower = min(value / self.a, peak) - 1.0
        return brentq(
            lambda lam: self.eval(lam) - value,
            lower,
            peak,
            xtol=1e-12,
            maxiter=200,
        )


# ---------------------------------------------------------------------------
# Class-K functions and bounds
# ---------------------------------------------------------------------------

class ClassK(ABC):
    """Strictly increasing scalar map with alpha(0) = 0."""

    @abstractmethod
    def __call__(self, lam: float) -> float:
        ...

    @abstractmethod
    def inverse(self, value: float) -> float:
        ...


@dataclass(frozen=True)
class LinearClassK(ClassK):
    gain: float

    def __post_init__(self):
        if not (self.gain > 0 and math.isfinite(self.gain)):
            raise BarrierSpecError(f"class-K gain must be positive, got {self.gain}")

    def __call__(self, lam: float) -> float:
        return self.gain * lam

    def inverse(self, value: float) -> float:
        return value / self.gain


@dataclass(frozen=True)
class DisturbanceBounds:
    """Matched (w_u_max) and unmatched (w_x_max) 2-norm disturbance bounds."""

    w_u_max: float
    w_x_max: float

    def __post_init__(self):
        for name in ("w_u_max", "w_x_max"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise BarrierSpecError(f"{name} must be finite and nonnegative, got {value}")


# ---------------------------------------------------------------------------
# Barrier specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BarrierSpec:
    """
    A constraint h (h <= 0 is allowed) together with its CBF lift.

    H1 adds the docking margin delta = gamma2^2 / 2, H0 uses delta = 0 and
    DIRECT uses H = h for relative-degree-one constraints.
    """

    constraint: Any
    alpha_w: ClassK
    kind: BarrierKind = BarrierKind.H1
    potential: Optional[PotentialFunction] = None
    delta: float = 0.0
    gamma1: Optional[float] = None
    gamma2: Optional[float] = None
    l_h: float = 1.0
    name: str = "H1"

    def __post_init__(self):
        if self.kind is not BarrierKind.DIRECT and self.potential is None:
            raise BarrierSpecError(f"{self.name}: {self.kind.value} barrier needs a potential")
        if self.l_h <= 0:
            raise BarrierSpecError(f"{self.name}: l_h must be positive")
        if self.delta < 0:
            raise BarrierSpecError(f"{self.name}: delta must be nonnegative")

        if self.kind is BarrierKind.H1:
            if self.gamma1 is None or self.gamma2 is None:
                raise BarrierSpecError(f"{self.name}: H1 barrier needs gamma1 and gamma2")
            if not (0 < self.gamma1 < self.gamma2):
                raise BarrierSpecError(
                    f"{self.name}: need 0 < gamma1 < gamma2, got {self.gamma1}, {self.gamma2}"
                )
            if not math.isclose(self.delta, 0.5 * self.gamma2 ** 2, rel_tol=1e-12):
                raise BarrierSpecError(f"{self.name}: H1 requires delta = gamma2^2 / 2")
        elif self.delta != 0.0:
            raise BarrierSpecError(f"{self.name}: {self.kind.value} barrier requires delta = 0")

        if self.d < 0:
            raise BarrierSpecError(f"{self.name}: contact level d must be nonnegative")

    @classmethod
    def h1(cls, constraint, potential, gamma1, gamma2, alpha_w, l_h=1.0, name="H1"):
        return cls(
            constraint=constraint,
            alpha_w=alpha_w,
            kind=BarrierKind.H1,
            potential=potential,
            delta=0.5 * gamma2 ** 2,
            gamma1=gamma1,
            gamma2=gamma2,
            l_h=l_h,
            name=name,
        )

    @classmethod
    def h0(cls, constraint, potential, alpha_w, l_h=1.0, name="H0"):
        return cls(
            constraint=constraint,
            alpha_w=alpha_w,
            kind=BarrierKind.H0,
            potential=potential,
            l_h=l_h,
            name=name,
        )

    @classmethod
    def direct(cls, constraint, alpha_w, name="H"):
        return cls(constraint=constraint, alpha_w=alpha_w, kind=BarrierKind.DIRECT, name=name)

    @property
    def d(self) -> float:
        """Largest admissible h on S1: Phi^-1(Phi(0) - delta)."""
        if self.kind is BarrierKind.DIRECT or self.delta == 0.0:
            return 0.0
        return self.potential.inverse(self.potential.eval(0.0) - self.delta)

    @property
    def epsilon(self) -> float:
        """Boundary-layer depth alpha_w^-1(2)."""
        return self.alpha_w.inverse(2.0)


@dataclass(frozen=True)
class BarrierEvaluation:
    """Everything the controller and the logger need at one (t, x)."""

    h: float
    h_dot: float
    h_dot_w: float
    value: float
    gradient: np.ndarray
    time_partial: float
    w_margin: float


# ---------------------------------------------------------------------------
# Derivatives of h
# ---------------------------------------------------------------------------

def _time_varying(spec: BarrierSpec, model) -> bool:
    return bool(getattr(spec.constraint, "time_varying", False) or getattr(model, "time_varying", False))


def _masked(model, vector: np.ndarray) -> np.ndarray:
    return np.where(model.w_x_mask, vector, 0.0)


def _check_relative_degree(spec: BarrierSpec, model, t: float, x: np.ndarray, grad_h: np.ndarray):
    coupling = grad_h @ model.g(t, x)
    if np.linalg.norm(coupling) > RELATIVE_DEGREE_TOLERANCE:
        raise RelativeDegreeError(
            f"{spec.name}: |grad(h) g| = {np.linalg.norm(coupling):.3e}, expected relative degree 2"
        )


def h_dot(spec: BarrierSpec, model, t: float, x: np.ndarray) -> float:
    """Undisturbed rate dh/dt = d_t h + grad(h) f."""
    constraint = spec.constraint
    return constraint.time_partial(t, x) + constraint.gradient(t, x) @ model.f(t, x)


def h_dot_w(spec: BarrierSpec, model, t: float, x: np.ndarray) -> float:
    """
    Worst-case rate of h under the unmatched disturbance.

    The maximizer over |w_x| <= w_x_max is w_x aligned with the masked
    gradient, giving d_t h + grad(h) f + |grad(h)_masked| w_x_max.

    Raises:
        RelativeDegreeError: if grad(h) g does not vanish
    """
    grad_h = spec.constraint.gradient(t, x)
    _check_relative_degree(spec, model, t, x, grad_h)
    rate = spec.constraint.time_partial(t, x) + grad_h @ model.f(t, x)
    return rate + np.linalg.norm(_masked(model, grad_h)) * model.bounds.w_x_max


def _grad_h_dot_w(spec: BarrierSpec, model, t: float, x: np.ndarray) -> np.ndarray:
    constraint = spec.constraint
    grad_h = constraint.gradient(t, x)
    hess_h = constraint.hessian(t, x)
    gradient = hess_h @ model.f(t, x) + model.jacobian(t, x).T @ grad_h

    masked = _masked(model, grad_h)
    norm = np.linalg.norm(masked)
    if norm > 0 and model.bounds.w_x_max > 0:
        gradient = gradient + model.bounds.w_x_max * (hess_h @ masked) / norm
    return gradient


# ---------------------------------------------------------------------------
# H, grad(H), W and the CBF condition
# ---------------------------------------------------------------------------

def _lift_argument(spec: BarrierSpec, h: float, rate_w: float) -> float:
    return spec.potential.eval(h) - 0.5 * abssq(rate_w) + spec.delta


def _state_terms(spec: BarrierSpec, model, t: float, x: np.ndarray):
    """Return (h, h_dot, h_dot_w, H, grad(H)) without the time partial."""
    constraint = spec.constraint
    h = constraint.value(t, x)
    grad_h = constraint.gradient(t, x)

    if spec.kind is BarrierKind.DIRECT:
        rate = constraint.time_partial(t, x) + grad_h @ model.f(t, x)
        rate_w = rate + np.linalg.norm(_masked(model, grad_h)) * model.bounds.w_x_max
        return h, rate, rate_w, h, grad_h

    _check_relative_degree(spec, model, t, x, grad_h)
    rate = constraint.time_partial(t, x) + grad_h @ model.f(t, x)
    rate_w = rate + np.linalg.norm(_masked(model, grad_h)) * model.bounds.w_x_max

    value = spec.potential.inverse(_lift_argument(spec, h, rate_w))
    phi_value = spec.potential.deriv(value)
    if abs(phi_value) < 1e-12:
        raise DegenerateGradientError(f"{spec.name}: phi(H) = {phi_value:.3e} at H = {value}")

    gradient = (
        spec.potential.deriv(h) * grad_h - abs(rate_w) * _grad_h_dot_w(spec, model, t, x)
    ) / phi_value
    return h, rate, rate_w, value, gradient


def _lifted_value(spec: BarrierSpec, model, t: float, x: np.ndarray) -> float:
    return _state_terms(spec, model, t, x)[3]


def _time_partial(spec: BarrierSpec, model, t: float, x: np.ndarray) -> float:
    if not _time_varying(spec, model):
        return 0.0
    step = 1e-6 * max(1.0, abs(t))
    return (_lifted_value(spec, model, t + step, x) - _lifted_value(spec, model, t - step, x)) / (
        2.0 * step
    )


def _w_margin(model, t: float, x: np.ndarray, gradient: np.ndarray) -> float:
    bounds = model.bounds
    return (
        np.linalg.norm(gradient @ model.g(t, x)) * bounds.w_u_max
        + np.linalg.norm(gradient) * bounds.w_x_max
    )


def evaluate_barrier(spec: BarrierSpec, model, t: float, x: np.ndarray) -> BarrierEvaluation:
    """Evaluate h, its rates, H, grad(H), d_t H and W with one potential inversion."""
    h, rate, rate_w, value, gradient = _state_terms(spec, model, t, x)
    return BarrierEvaluation(
        h=h,
        h_dot=rate,
        h_dot_w=rate_w,
        value=value,
        gradient=gradient,
        time_partial=_time_partial(spec, model, t, x),
        w_margin=_w_margin(model, t, x, gradient),
    )


def eval_H(spec: BarrierSpec, model, t: float, x: np.ndarray) -> float:
    """
    Evaluate the lifted barrier
    H = Phi^-1(Phi(h) - abssq(h_dot_w) / 2 + delta).

    Raises:
        InvertibilityError: if the potential cannot be inverted at the argument
    """
    return _lifted_value(spec, model, t, x)


def grad_H(spec: BarrierSpec, model, t: float, x: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    Gradient of H by the chain rule,
    grad(H) = [phi(h) grad(h) - |h_dot_w| grad(h_dot_w)] / phi(H),
    together with the time partial d_t H.
    """
    gradient = _state_terms(spec, model, t, x)[4]
    return gradient, _time_partial(spec, model, t, x)


def eval_W(spec: BarrierSpec, model, t: float, x: np.ndarray) -> float:
    """Worst-case disturbance contribution |grad(H) g| w_u_max + |grad(H)| w_x_max."""
    gradient, _ = grad_H(spec, model, t, x)
    return _w_margin(model, t, x, gradient)


def margin_from_evaluation(
    spec: BarrierSpec, evaluation: BarrierEvaluation, model, t: float, x: np.ndarray, u: np.ndarray
) -> float:
    W = evaluation.w_margin
    drift = evaluation.time_partial + evaluation.gradient @ (model.f(t, x) + model.g(t, x) @ u)
    return spec.alpha_w(-evaluation.value) * W - W - drift


def cbf_margin(spec: BarrierSpec, model, t: float, x: np.ndarray, u: np.ndarray) -> float:
    """
    Slack of the robust CBF condition
    d_t H + grad(H)(f + g u) <= alpha_w(-H) W - W.

    Nonnegative iff u satisfies it.
    """
    evaluation = evaluate_barrier(spec, model, t, x)
    return margin_from_evaluation(spec, evaluation, model, t, x, np.asarray(u, dtype=float))


# ---------------------------------------------------------------------------
# Tolerance conditions
# ---------------------------------------------------------------------------

def feasibility_check(spec: BarrierSpec, bounds: DisturbanceBounds) -> bool:
    """True iff gamma2 > gamma1 + 2 l_h w_x_max."""
    if spec.gamma1 is None or spec.gamma2 is None:
        return False
    return spec.gamma2 > spec.gamma1 + 2.0 * spec.l_h * bounds.w_x_max


def boundary_layer_depth(spec: BarrierSpec, bounds: DisturbanceBounds) -> float:
    """
    Depth eps* of the layer that forces contact speed above gamma1:
    eps* = -Phi^-1(gamma2^2/2 + Phi(0) - (2 l_h w_x_max + gamma1)^2 / 2).

    Raises:
        InfeasibleToleranceError: if the feasibility assumption fails or eps* <= 0
    """
    if not feasibility_check(spec, bounds):
        raise InfeasibleToleranceError(
            f"{spec.name}: feasibility assumption violated "
            f"(gamma2 = {spec.gamma2} <= gamma1 + 2 l_h w_x_max = "
            f"{(spec.gamma1 or 0.0) + 2.0 * spec.l_h * bounds.w_x_max})"
        )

    floor_speed = 2.0 * spec.l_h * bounds.w_x_max + spec.gamma1
    argument = 0.5 * spec.gamma2 ** 2 + spec.potential.eval(0.0) - 0.5 * floor_speed ** 2
    try:
        depth = -spec.potential.inverse(argument)
    except (InvertibilityError, ValueError, RuntimeError) as e:
        raise InfeasibleToleranceError(f"{spec.name}: cannot solve for layer depth: {e}") from e

    if depth <= 0:
        raise InfeasibleToleranceError(f"{spec.name}: layer depth {depth} is not positive")
    return depth


def solve_alpha_gain(spec: BarrierSpec, bounds: DisturbanceBounds) -> float:
    """
    Linear class-K gain k with alpha_w^-1(2) = eps*, i.e. k = 2 / eps*.

    Args:
        spec: H1 barrier providing Phi, gamma1, gamma2 and l_h
        bounds: disturbance bounds of the model

    Returns:
        The gain k
    """
    depth = boundary_layer_depth(spec, bounds)
    gain = 2.0 / depth
    logger.debug("%s: layer depth %.6g, gain %.6g", spec.name, depth, gain)
    return gain


def contact_speed_cap(spec: BarrierSpec) -> float:
    """Largest h_dot_w at h = 0 inside S1: sqrt(2 delta)."""
    return math.sqrt(2.0 * spec.delta)


# ---------------------------------------------------------------------------
# Sets and contact
# ---------------------------------------------------------------------------

def set_membership(
    spec: BarrierSpec, model, t: float, x: np.ndarray, epsilon: Optional[float] = None
) -> SetMembership:
    """
    Classify (t, x) against S1 and its boundary layer -eps <= H <= 0.

    Args:
        epsilon: layer depth, defaults to alpha_w^-1(2)
    """
    if epsilon is None:
        epsilon = spec.epsilon
    h = spec.constraint.value(t, x)
    if h > spec.d:
        return SetMembership.OUTSIDE
    return membership_of_value(eval_H(spec, model, t, x), epsilon)


def membership_of_value(value: float, epsilon: float) -> SetMembership:
    if value > 0:
        return SetMembership.OUTSIDE
    if value >= -epsilon:
        return SetMembership.BOUNDARY_LAYER
    return SetMembership.INTERIOR


def classify_contact(
    spec: BarrierSpec,
    t_f: float,
    x_f: np.ndarray,
    h_dot_f: float,
    objective: ContactType = ContactType.DOCKING,
    tolerance: float = CONTACT_TOLERANCE,
) -> ContactType:
    """
    Label a contact event by its approach speed.

    Args:
        spec: H1 barrier with gamma1, gamma2
        t_f: contact time
        x_f: contact state
        h_dot_f: approach speed dh/dt at contact
        objective: LANDING accepts [0, gamma2]; DOCKING requires [gamma1, gamma2]
            and reports slower contacts as LANDING
        tolerance: band around h = 0 counted as contact

    Returns:
        The contact type
    """
    if abs(spec.constraint.value(t_f, x_f)) > tolerance or h_dot_f < 0:
        return ContactType.NO_CONTACT
    if h_dot_f > spec.gamma2:
        return ContactType.UNSAFE_CONTACT
    if objective is ContactType.DOCKING and h_dot_f >= spec.gamma1:
        return ContactType.DOCKING
    return ContactType.LANDING


def estimate_lipschitz(
    constraint, t: float, lower: np.ndarray, upper: np.ndarray, samples: int = 10000, seed: int = 0
) -> float:
    """Sampled supremum of |grad(h)| over the box [lower, upper]."""
    rng = np.random.default_rng(seed)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    points = rng.uniform(lower, upper, size=(samples, lower.size))
    return max(float(np.linalg.norm(constraint.gradient(t, point))) for point in points)
