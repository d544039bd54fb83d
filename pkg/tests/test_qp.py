#!/usr/bin/env python3

import itertools

import numpy as np
import pytest

from qp import (
    DegenerateDirectionError,
    QpInfeasibleError,
    QpProblem,
    kkt_residuals,
    solve_line_max,
    solve_min_norm,
    solve_min_norm_with_multipliers,
)


def random_feasible_problem(rng, dim, box=1.0):
    anchor = rng.uniform(-0.5 * box, 0.5 * box, dim)
    halfspaces = []
    for _ in range(rng.integers(1, 4)):
        a = rng.standard_normal(dim)
        halfspaces.append((a, float(a @ anchor + rng.uniform(0.0, 0.5))))
    return QpProblem(target=2.0 * rng.standard_normal(dim), box=box, halfspaces=halfspaces)


def grid_optimum(problem, step):
    axis = np.arange(-problem.box, problem.box + step / 2, step)
    points = np.array(list(itertools.product(axis, repeat=problem.target.size)))
    feasible = np.ones(len(points), dtype=bool)
    for a, b in problem.halfspaces:
        feasible &= points @ a <= b
    candidates = points[feasible]
    if candidates.size == 0:
        return None
    return float(np.min(np.sum((candidates - problem.target) ** 2, axis=1)))


class TestSolveMinNorm:
    """Tests for the box-and-halfspace projection."""

    def test_inside_box_is_identity(self):
        u = solve_min_norm(QpProblem(target=np.array([0.3, -0.2]), box=1.0))
        assert np.array_equal(u, [0.3, -0.2])

    def test_box_clamp(self):
        u = solve_min_norm(QpProblem(target=np.array([2.0, 0.0]), box=1.0))
        assert np.allclose(u, [1.0, 0.0], atol=1e-12)

    def test_single_halfspace(self):
        problem = QpProblem(
            target=np.array([1.0, 1.0]), box=1.0, halfspaces=[(np.array([1.0, 1.0]), 1.0)]
        )
        solution = solve_min_norm_with_multipliers(problem)
        assert np.allclose(solution.u, [0.5, 0.5], atol=1e-12)
        assert solution.multipliers[0] == pytest.approx(0.5)
        assert solution.active == (0,)

    def test_halfspace_and_box_together(self):
        problem = QpProblem(
            target=np.array([3.0, 0.0]), box=1.0, halfspaces=[(np.array([1.0, -1.0]), 0.0)]
        )
        u = solve_min_norm(problem)
        assert np.allclose(u, [1.0, 1.0], atol=1e-12)

    def test_random_problems_pass_kkt(self, rng):
        for _ in range(500):
            problem = random_feasible_problem(rng, int(rng.integers(2, 4)))
            solution = solve_min_norm_with_multipliers(problem)
            for residual in kkt_residuals(problem, solution):
                assert residual < 1e-8
            assert np.max(np.abs(solution.u)) <= problem.box

    def test_matches_grid_optimum_in_two_dimensions(self, rng):
        for _ in range(200):
            problem = random_feasible_problem(rng, 2)
            best = grid_optimum(problem, 0.01)
            u = solve_min_norm(problem)
            assert np.sum((u - problem.target) ** 2) <= best + 1e-9

    def test_matches_grid_optimum_in_three_dimensions(self, rng):
        for _ in range(30):
            problem = random_feasible_problem(rng, 3)
            best = grid_optimum(problem, 0.05)
            u = solve_min_norm(problem)
            assert np.sum((u - problem.target) ** 2) <= best + 1e-9

    def test_idempotent(self, rng):
        for _ in range(100):
            problem = random_feasible_problem(rng, 2)
            u = solve_min_norm(problem)
            again = solve_min_norm(QpProblem(target=u, box=problem.box, halfspaces=problem.halfspaces))
            assert np.allclose(again, u, atol=1e-10)

    def test_deterministic(self, rng):
        problem = random_feasible_problem(rng, 3)
        first = solve_min_norm(problem)
        second = solve_min_norm(QpProblem(problem.target.copy(), problem.box, list(problem.halfspaces)))
        assert first.tobytes() == second.tobytes()

    def test_infeasible(self):
        problem = QpProblem(target=np.zeros(2), box=1.0, halfspaces=[(np.array([1.0, 0.0]), -2.0)])
        with pytest.raises(QpInfeasibleError) as excinfo:
            solve_min_norm(problem)
        assert excinfo.value.violated

    def test_zero_row_with_negative_bound(self):
        problem = QpProblem(target=np.zeros(2), box=1.0, halfspaces=[(np.zeros(2), -1e-3)])
        with pytest.raises(QpInfeasibleError) as excinfo:
            solve_min_norm(problem)
        assert excinfo.value.violated == [0]

    def test_zero_row_with_nonnegative_bound_is_ignored(self):
        problem = QpProblem(target=np.array([0.2, 0.4]), box=1.0, halfspaces=[(np.zeros(2), 0.0)])
        assert np.array_equal(solve_min_norm(problem), [0.2, 0.4])

    def test_rejects_nonpositive_box(self):
        with pytest.raises(ValueError):
            QpProblem(target=np.zeros(2), box=0.0)


class TestSolveLineMax:
    """Tests for the largest admissible scaling along a direction."""

    def test_box_binds(self):
        u = solve_line_max(np.array([1.0, 0.0, 0.0]), 0.5, 100.0)
        assert np.allclose(u, [0.5, 0.0, 0.0])

    def test_row_binds(self):
        u = solve_line_max(np.array([1.0, 0.0, 0.0]), 0.5, 0.1)
        assert np.allclose(u, [0.1, 0.0, 0.0])

    def test_row_wins_beyond_box(self):
        u = solve_line_max(np.array([1.0, 0.0, 0.0]), 0.5, -1.0)
        assert np.allclose(u, [-1.0, 0.0, 0.0])

    def test_degenerate_direction(self):
        with pytest.raises(DegenerateDirectionError):
            solve_line_max(np.zeros(3), 0.5, 1.0)

    def test_matches_scan(self, rng):
        box = 0.5
        for _ in range(100):
            d = rng.standard_normal(3)
            c = rng.uniform(-1.0, 1.0)
            norm_sq = float(d @ d)
            limit = 10.0 * box / np.max(np.abs(d))
            scan, step = np.linspace(-limit, limit, 200001, retstep=True)
            feasible = scan[(np.abs(scan) * np.max(np.abs(d)) <= box) & (norm_sq * scan <= c)]
            u = solve_line_max(d, box, c)
            b = float(u @ d) / norm_sq
            if feasible.size == 0:
                assert b == pytest.approx(c / norm_sq)
                continue
            assert np.max(np.abs(u)) <= box + 1e-12
            assert norm_sq * b <= c + 1e-12
            assert feasible.max() <= b + 1e-12
            assert b - feasible.max() <= step + 1e-12
