#!/usr/bin/env python3
"""
Control-affine models x' = f(t, x) + g(t, x)(u + w_u) + w_x, the constraint
maps h used by the docking and landing scenarios, and disturbance policies.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from barrier import (
    BarrierEvaluation,
    BarrierSpec,
    CeresGravityPotential,
    DisturbanceBounds,
    evaluate_barrier,
)

logger = logging.getLogger(__name__)

# Ceres and low Earth orbit values
CERES_MU = 6.26325e10
CERES_RADIUS = 476000.0
HCW_MEAN_MOTION = 0.00113
HCW_LATERAL_TOLERANCE = 0.03
HCW_MAX_SPEED = 10.0


class SingularStateError(ValueError):
    """The state lies where a constraint map is not differentiable."""


# ---------------------------------------------------------------------------
# Constraint maps
# ---------------------------------------------------------------------------

class ConstraintMap(ABC):
    """Scalar output h(t, x) with first and second state derivatives."""

    time_varying = False

    @abstractmethod
    def value(self, t: float, x: np.ndarray) -> float:
        ...

    @abstractmethod
    def gradient(self, t: float, x: np.ndarray) -> np.ndarray:
        ...

    def hessian(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.zeros((len(x), len(x)))

    def time_partial(self, t: float, x: np.ndarray) -> float:
        return 0.0


@dataclass(frozen=True)
class CeresAltitude(ConstraintMap):
    """Negative altitude h = rho - |r| over x = (r, v)."""

    rho: float = CERES_RADIUS

    def _position(self, x: np.ndarray) -> Tuple[np.ndarray, float]:
        r = np.asarray(x[:3], dtype=float)
        radius = np.linalg.norm(r)
        if radius == 0.0:
            raise SingularStateError("altitude constraint undefined at r = 0")
        return r, radius

    def value(self, t, x):
        _, radius = self._position(x)
        return self.rho - radius

    def gradient(self, t, x):
        r, radius = self._position(x)
        return np.concatenate([-r / radius, np.zeros(3)])

    def hessian(self, t, x):
        r, radius = self._position(x)
        unit = r / radius
        hess = np.zeros((6, 6))
        hess[:3, :3] = -(np.eye(3) - np.outer(unit, unit)) / radius
        return hess


@dataclass(frozen=True)
class LinearConstraint(ConstraintMap):
    """h = c . x + offset."""

    coefficients: Tuple[float, ...]
    offset: float = 0.0
    name: str = "h"

    def value(self, t, x):
        return float(np.dot(self.coefficients, x)) + self.offset

    def gradient(self, t, x):
        return np.asarray(self.coefficients, dtype=float)


@dataclass(frozen=True)
class VelocityInfNorm(ConstraintMap):
    """
    h = |x[indices]|_inf - v_max.

    At ties the gradient selects the first maximizing index.
    """

    indices: Tuple[int, ...]
    v_max: float = HCW_MAX_SPEED

    def value(self, t, x):
        return float(np.max(np.abs(x[list(self.indices)]))) - self.v_max

    def gradient(self, t, x):
        speeds = x[list(self.indices)]
        pick = int(np.argmax(np.abs(speeds)))
        grad = np.zeros(len(x))
        index = self.indices[pick]
        grad[index] = 1.0 if speeds[pick] >= 0 else -1.0
        return grad


def ceres_h(t: float, x: np.ndarray, rho: float = CERES_RADIUS) -> Tuple[float, np.ndarray]:
    """
    Altitude constraint of the landing scenario.

    Returns:
        Tuple of (rho - |r|, gradient [-r/|r|, 0])
    """
    constraint = CeresAltitude(rho)
    return constraint.value(t, x), constraint.gradient(t, x)


def docking_axis_constraint() -> LinearConstraint:
    return LinearConstraint((0.0, 1.0, 0.0, 0.0), 0.0, name="h")


def right_bound_constraint(delta: float = HCW_LATERAL_TOLERANCE) -> LinearConstraint:
    return LinearConstraint((1.0, 0.0, 0.0, 0.0), -delta, name="h_r")


def left_bound_constraint(
    delta: float = HCW_LATERAL_TOLERANCE, axis: str = "lateral"
) -> LinearConstraint:
    """
    Left bound of the docking corridor.

    Args:
        delta: corridor half-width
        axis: "lateral" for -x1 - delta, "along_track" for -x2 - delta
    """
    if axis == "lateral":
        return LinearConstraint((-1.0, 0.0, 0.0, 0.0), -delta, name="h_l")
    if axis == "along_track":
        return LinearConstraint((0.0, -1.0, 0.0, 0.0), -delta, name="h_l")
    raise ValueError(f"unknown left bound axis '{axis}'")


def hcw_h_family(
    t: float,
    x: np.ndarray,
    delta: float = HCW_LATERAL_TOLERANCE,
    left_bound_axis: str = "along_track",
) -> Tuple[Tuple[float, np.ndarray], Tuple[float, np.ndarray], Tuple[float, np.ndarray]]:
    """
    Docking distance h = x2 and the corridor bounds h_r, h_l with their gradients.

    Returns:
        ((h, grad h), (h_r, grad h_r), (h_l, grad h_l))
    """
    maps = (
        docking_axis_constraint(),
        right_bound_constraint(delta),
        left_bound_constraint(delta, left_bound_axis),
    )
    return tuple((m.value(t, x), m.gradient(t, x)) for m in maps)


def velocity_constraint(t: float, x: np.ndarray, v_max: float = HCW_MAX_SPEED) -> float:
    """|(x1', x2')|_inf - v_max on the four-dimensional HCW state."""
    return VelocityInfNorm((2, 3), v_max).value(t, x)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

class ControlAffineModel(ABC):
    """
    x' = f(t, x) + g(t, x)(u + w_u) + w_x with |u|_inf <= input_box.

    Subclasses set state_dim, input_dim, input_box, bounds and w_x_mask.
    """

    state_dim: int
    input_dim: int
    input_box: float
    bounds: DisturbanceBounds
    time_varying = False

    @abstractmethod
    def f(self, t: float, x: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def jacobian(self, t: float, x: np.ndarray) -> np.ndarray:
        """State Jacobian of f."""

    @abstractmethod
    def g(self, t: float, x: np.ndarray) -> np.ndarray:
        ...

    @property
    @abstractmethod
    def w_x_mask(self) -> np.ndarray:
        ...

    @abstractmethod
    def approach_direction(self, x: np.ndarray) -> np.ndarray:
        """State direction that raises the approach speed toward h = 0."""

    def rate(
        self,
        t: float,
        x: np.ndarray,
        u: np.ndarray,
        w_u: Optional[np.ndarray] = None,
        w_x: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        matched = u if w_u is None else u + w_u
        rate = self.f(t, x) + self.g(t, x) @ matched
        if w_x is not None:
            rate = rate + w_x
        return rate


def _position_mask(n_position: int, n_state: int) -> np.ndarray:
    mask = np.zeros(n_state, dtype=bool)
    mask[:n_position] = True
    return mask


@dataclass(frozen=True)
class CeresModel(ControlAffineModel):
    """Point-mass gravity about a spherical, non-rotating Ceres; x = (r, v)."""

    mu: float = CERES_MU
    rho: float = CERES_RADIUS
    input_box: float = 0.5
    bounds: DisturbanceBounds = field(
        default_factory=lambda: DisturbanceBounds(w_u_max=0.025, w_x_max=0.01)
    )

    state_dim = 6
    input_dim = 3

    @property
    def w_x_mask(self):
        return _position_mask(3, 6)

    def f(self, t, x):
        r = x[:3]
        radius = np.linalg.norm(r)
        return np.concatenate([x[3:], -self.mu * r / radius ** 3])

    def jacobian(self, t, x):
        r = x[:3]
        radius = np.linalg.norm(r)
        jac = np.zeros((6, 6))
        jac[:3, 3:] = np.eye(3)
        jac[3:, :3] = -self.mu * (np.eye(3) / radius ** 3 - 3.0 * np.outer(r, r) / radius ** 5)
        return jac

    def g(self, t, x):
        return np.vstack([np.zeros((3, 3)), np.eye(3)])

    def approach_direction(self, x):
        r = x[:3]
        return np.concatenate([np.zeros(3), -r / np.linalg.norm(r)])

    def potential(self) -> CeresGravityPotential:
        """Gravity plus net braking authority w_u_max - input_box."""
        return CeresGravityPotential(self.mu, self.rho, self.bounds.w_u_max - self.input_box)

    def orbital_energy(self, x: np.ndarray) -> float:
        return 0.5 * float(x[3:] @ x[3:]) - self.mu / np.linalg.norm(x[:3])


@dataclass(frozen=True)
class HcwModel(ControlAffineModel):
    """
    Planar Hill-Clohessy-Wiltshire relative motion, x = (x1, x2, x1', x2')
    with x1 radial and x2 along-track.
    """

    mean_motion: float = HCW_MEAN_MOTION
    input_box: float = 0.082
    bounds: DisturbanceBounds = field(
        default_factory=lambda: DisturbanceBounds(w_u_max=0.002, w_x_max=0.001)
    )

    state_dim = 4
    input_dim = 2

    @property
    def w_x_mask(self):
        return _position_mask(2, 4)

    @property
    def drift_matrix(self) -> np.ndarray:
        n = self.mean_motion
        return np.array(
            [
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
                [3.0 * n ** 2, 0.0, 0.0, 2.0 * n],
                [0.0, 0.0, -2.0 * n, 0.0],
            ]
        )

    def f(self, t, x):
        return self.drift_matrix @ x

    def jacobian(self, t, x):
        return self.drift_matrix

    def g(self, t, x):
        return np.vstack([np.zeros((2, 2)), np.eye(2)])

    def approach_direction(self, x):
        return np.array([0.0, 0.0, 0.0, 1.0])


@dataclass(frozen=True)
class DoubleIntegratorModel(ControlAffineModel):
    """The docking axis alone: x = (x2, x2'), x2'' = u + w_u."""

    input_box: float = 0.082
    bounds: DisturbanceBounds = field(
        default_factory=lambda: DisturbanceBounds(w_u_max=0.002, w_x_max=0.001)
    )

    state_dim = 2
    input_dim = 1

    @property
    def w_x_mask(self):
        return _position_mask(1, 2)

    def f(self, t, x):
        return np.array([x[1], 0.0])

    def jacobian(self, t, x):
        return np.array([[0.0, 1.0], [0.0, 0.0]])

    def g(self, t, x):
        return np.array([[0.0], [1.0]])

    def approach_direction(self, x):
        return np.array([0.0, 1.0])


def rk4_step(model, t, x, u, w_u, w_x, dt) -> np.ndarray:
    """Classical Runge-Kutta step with u, w_u, w_x held over the step."""
    k1 = model.rate(t, x, u, w_u, w_x)
    k2 = model.rate(t + 0.5 * dt, x + 0.5 * dt * k1, u, w_u, w_x)
    k3 = model.rate(t + 0.5 * dt, x + 0.5 * dt * k2, u, w_u, w_x)
    k4 = model.rate(t + dt, x + dt * k3, u, w_u, w_x)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# Disturbance policies
# ---------------------------------------------------------------------------

def _clip_norm(vector: np.ndarray, bound: float) -> np.ndarray:
    norm = np.linalg.norm(vector)
    if norm > bound:
        return vector * (bound / norm)
    return vector


def uniform_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    """Uniform sample from the closed 2-norm ball of the given radius."""
    if dim == 0 or radius == 0.0:
        return np.zeros(dim)
    direction = rng.standard_normal(dim)
    norm = np.linalg.norm(direction)
    while norm == 0.0:
        direction = rng.standard_normal(dim)
        norm = np.linalg.norm(direction)
    scale = radius * rng.uniform() ** (1.0 / dim)
    return _clip_norm(direction / norm * scale, radius)


class DisturbancePolicy(ABC):
    """Generator of (w_u, w_x) realizations within the model bounds."""

    name = "policy"

    @abstractmethod
    def sample(
        self,
        spec: BarrierSpec,
        model: ControlAffineModel,
        t: float,
        x: np.ndarray,
        evaluation: Optional[BarrierEvaluation] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        ...

    def reset(self) -> None:
        pass


class ZeroDisturbance(DisturbancePolicy):
    name = "zero"

    def sample(self, spec, model, t, x, evaluation=None):
        return np.zeros(model.input_dim), np.zeros(model.state_dim)


class SeededRandomDisturbance(DisturbancePolicy):
    """
    Uniform on the norm balls, held constant for hold_interval seconds.

    w_x is drawn on the components selected by the model's w_x_mask.
    Owns its generator; use one instance per simulation.
    """

    name = "random"

    def __init__(self, seed: int, hold_interval: float = 1.0):
        if hold_interval <= 0:
            raise ValueError("hold_interval must be positive")
        self.seed = seed
        self.hold_interval = hold_interval
        self.reset()

    def reset(self) -> None:
        self._rng = np.random.default_rng(self.seed)
        self._slot: Optional[int] = None
        self._held: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def sample(self, spec, model, t, x, evaluation=None):
        slot = int(math.floor(t / self.hold_interval + 1e-9))
        if self._held is None or slot != self._slot:
            bounds = model.bounds
            w_u = uniform_ball(self._rng, model.input_dim, bounds.w_u_max)
            mask = model.w_x_mask
            w_x = np.zeros(model.state_dim)
            w_x[mask] = uniform_ball(self._rng, int(mask.sum()), bounds.w_x_max)
            self._slot = slot
            self._held = (w_u, w_x)
        w_u, w_x = self._held
        return w_u.copy(), w_x.copy()


def worst_case_disturbance(
    spec: BarrierSpec,
    model: ControlAffineModel,
    t: float,
    x: np.ndarray,
    evaluation: Optional[BarrierEvaluation] = None,
    sign: float = 1.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Full-magnitude (w_u, w_x) aligned with grad(H) g and the masked grad(H).

    With sign = 1 this maximizes grad(H)(g w_u + w_x) over the admissible
    disturbances; w_x only acts on the components in the model's w_x_mask.
    """
    if evaluation is None:
        evaluation = evaluate_barrier(spec, model, t, x)
    bounds = model.bounds
    gradient = evaluation.gradient
    coupling = gradient @ model.g(t, x)

    w_u = np.zeros(model.input_dim)
    coupling_norm = np.linalg.norm(coupling)
    if coupling_norm > 0:
        w_u = sign * bounds.w_u_max * coupling / coupling_norm

    w_x = np.zeros(model.state_dim)
    masked = np.where(model.w_x_mask, gradient, 0.0)
    masked_norm = np.linalg.norm(masked)
    if masked_norm > 0:
        w_x = sign * bounds.w_x_max * masked / masked_norm
    return w_u, w_x


class _GradientAlignedDisturbance(DisturbancePolicy):
    sign = 1.0

    def __init__(self, target: Optional[BarrierSpec] = None):
        self.target = target

    def sample(self, spec, model, t, x, evaluation=None):
        target = self.target or spec
        if target is not spec:
            evaluation = None
        return worst_case_disturbance(target, model, t, x, evaluation, self.sign)


class AdversarialDisturbance(_GradientAlignedDisturbance):
    """Maximizer of grad(H)(g w_u + w_x); bounded by W."""

    name = "adversarial"
    sign = 1.0


class HelpfulDisturbance(_GradientAlignedDisturbance):
    """Minimizer of grad(H)(g w_u + w_x)."""

    name = "helpful"
    sign = -1.0


def sample_disturbance(
    policy: DisturbancePolicy,
    spec: BarrierSpec,
    model: ControlAffineModel,
    t: float,
    x: np.ndarray,
    evaluation: Optional[BarrierEvaluation] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Draw one (w_u, w_x) pair from the policy at (t, x)."""
    return policy.sample(spec, model, t, x, evaluation)


def make_policy(
    name: str, seed: int = 0, hold_interval: float = 1.0, target: Optional[BarrierSpec] = None
) -> DisturbancePolicy:
    if name == "zero":
        return ZeroDisturbance()
    if name == "random":
        return SeededRandomDisturbance(seed, hold_interval)
    if name == "adversarial":
        return AdversarialDisturbance(target)
    if name == "helpful":
        return HelpfulDisturbance(target)
    raise ValueError(f"unknown disturbance policy '{name}'")
