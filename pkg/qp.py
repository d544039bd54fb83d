#!/usr/bin/env python3
"""
Small dense solvers for control selection.

solve_min_norm projects a target input onto {|u|_inf <= box} intersected
with halfspaces a_i . u <= b_i using the Goldfarb-Idnani dual active-set
method (identity Hessian). solve_line_max finds the largest scaling of a
direction that keeps one halfspace and the box satisfied.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Rows with a smaller covector norm are treated as constant checks 0 <= b
ZERO_ROW_NORM = 1e-12

FEASIBILITY_TOLERANCE = 1e-12

MAX_ITERATIONS = 200


class QpInfeasibleError(RuntimeError):
    """No input satisfies the box and every halfspace."""

    def __init__(self, message: str, violated: Sequence[int] = ()):
        super().__init__(message)
        self.violated = list(violated)


class DegenerateDirectionError(ValueError):
    """Line maximization along a (numerically) zero direction."""


@dataclass
class QpProblem:
    """min |u - target|^2 s.t. |u|_inf <= box and a . u <= b for (a, b) in halfspaces."""

    target: np.ndarray
    box: float
    halfspaces: List[Tuple[np.ndarray, float]] = field(default_factory=list)

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float)
        self.halfspaces = [(np.asarray(a, dtype=float), float(b)) for a, b in self.halfspaces]
        if self.box <= 0:
            raise ValueError(f"box bound must be positive, got {self.box}")

    def constraint_matrix(self) -> Tuple[np.ndarray, np.ndarray]:
        """All rows, user halfspaces first, then the box as +e_j, -e_j pairs."""
        m = self.target.size
        rows = [a for a, _ in self.halfspaces]
        rhs = [b for _, b in self.halfspaces]
        for j in range(m):
            unit = np.zeros(m)
            unit[j] = 1.0
            rows.extend([unit, -unit])
            rhs.extend([self.box, self.box])
        return np.array(rows).reshape(len(rows), m), np.array(rhs)


@dataclass(frozen=True)
class QpSolution:
    u: np.ndarray
    multipliers: np.ndarray
    active: Tuple[int, ...]
    iterations: int


def solve_min_norm_with_multipliers(problem: QpProblem) -> QpSolution:
    """
    Solve the projection and return the KKT multipliers (one per row of
    constraint_matrix) with u - target + sum(lambda_i a_i) = 0.

    Raises:
        QpInfeasibleError: the feasible set is empty
    """
    A, b = problem.constraint_matrix()
    target = problem.target
    n_rows = len(b)

    # Degenerate rows never enter the active set
    usable = np.ones(n_rows, dtype=bool)
    for i in range(len(problem.halfspaces)):
        if np.linalg.norm(A[i]) < ZERO_ROW_NORM:
            usable[i] = False
            if b[i] < -FEASIBILITY_TOLERANCE:
                raise QpInfeasibleError(
                    f"row {i} has a zero covector and negative bound {b[i]:.3e}", [i]
                )

    # Dual method in the form n_i . x >= c_i with n = -a, c = -b
    normals = -A
    bounds = -b
    tolerance = FEASIBILITY_TOLERANCE * (1.0 + np.abs(b))

    x = target.copy()
    active: List[int] = []
    duals = np.zeros(0)
    iterations = 0

    while True:
        slack = normals @ x - bounds
        slack[~usable] = np.inf
        violated = np.where(slack < -tolerance)[0]
        if violated.size == 0:
            break

        # Most violated row, lowest index on ties
        p = int(np.argmin(slack))
        partial = np.append(duals, 0.0)

        while True:
            iterations += 1
            if iterations > MAX_ITERATIONS:
                raise QpInfeasibleError(
                    f"active set did not settle after {MAX_ITERATIONS} iterations",
                    [int(i) for i in violated],
                )

            n_p = normals[p]
            if active:
                N = normals[active].T
                r = np.linalg.solve(N.T @ N, N.T @ n_p)
                z = n_p - N @ r
            else:
                r = np.zeros(0)
                z = n_p

            # Dual step length, keeping active multipliers nonnegative
            t1, drop = np.inf, -1
            for j, r_j in enumerate(r):
                if r_j > 1e-14:
                    ratio = partial[j] / r_j
                    if ratio < t1:
                        t1, drop = ratio, j

            # Primal step length, making row p active
            t2 = np.inf
            curvature = z @ n_p
            if np.linalg.norm(z) > 1e-12 and curvature > 1e-14:
                t2 = -(n_p @ x - bounds[p]) / curvature

            step = min(t1, t2)
            if not np.isfinite(step):
                violated_rows = [int(i) for i in np.argsort(slack) if slack[i] < -tolerance[i]]
                raise QpInfeasibleError(
                    f"constraints {violated_rows} cannot be satisfied together", violated_rows
                )

            if np.isfinite(t2):
                x = x + step * z
            partial[: len(active)] -= step * r
            partial[-1] += step

            if step == t2:
                active.append(p)
                duals = partial
                break

            # Drop a blocking constraint and retry with row p
            del active[drop]
            partial = np.delete(partial, drop)

    multipliers = np.zeros(n_rows)
    for index, value in zip(active, duals):
        multipliers[index] = max(value, 0.0)
    u = np.clip(x, -problem.box, problem.box)
    return QpSolution(u=u, multipliers=multipliers, active=tuple(sorted(active)), iterations=iterations)


def solve_min_norm(problem: QpProblem) -> np.ndarray:
    """
    Minimize |u - target|^2 over the box and halfspaces.

    Args:
        problem: projection problem

    Returns:
        The unique minimizer
    """
    return solve_min_norm_with_multipliers(problem).u


def kkt_residuals(problem: QpProblem, solution: QpSolution) -> Tuple[float, float, float, float]:
    """Stationarity, primal, dual and complementarity residuals."""
    A, b = problem.constraint_matrix()
    lam = solution.multipliers
    u = solution.u
    stationarity = float(np.linalg.norm(u - problem.target + A.T @ lam))
    primal = float(max(0.0, np.max(A @ u - b)))
    dual = float(max(0.0, -np.min(lam)))
    complementarity = float(np.max(np.abs(lam * (A @ u - b))))
    return stationarity, primal, dual, complementarity


def solve_line_max(direction: np.ndarray, input_box: float, constraint_rhs: float) -> np.ndarray:
    """
    Largest b with |b d|_inf <= input_box and (d . d) b <= c; returns d b.

    When the halfspace cannot be met inside the box the halfspace wins and
    b = c / |d|^2 is returned; callers clip.

    Raises:
        DegenerateDirectionError: if |d| < 1e-9
    """
    d = np.asarray(direction, dtype=float)
    norm_sq = float(d @ d)
    if np.sqrt(norm_sq) < 1e-9:
        raise DegenerateDirectionError(f"line direction has norm {np.sqrt(norm_sq):.3e}")

    box_scale = input_box / float(np.max(np.abs(d)))
    row_scale = constraint_rhs / norm_sq
    if row_scale >= -box_scale:
        return d * min(box_scale, row_scale)

    logger.debug(
        "line max: halfspace needs scale %.6g beyond box scale %.6g", row_scale, -box_scale
    )
    return d * row_scale
