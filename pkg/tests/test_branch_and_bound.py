import itertools
import math
import time
import unittest

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from fdiflow.branch_and_bound import BranchAndBound
from fdiflow.simplex import BoundedSimplex, SimplexOutcome


def relaxation(cost, matrix, relations, rhs):
    def solve(lower, upper):
        return BoundedSimplex(cost, matrix, relations, rhs, lower, upper).solve()
    return solve


def enumerate_binaries(cost, matrix, rhs, lower, upper, binaries):
    """Fixes every 0/1 assignment and solves the remaining LP with HiGHS."""
    best = math.inf
    for assignment in itertools.product((0.0, 1.0), repeat=len(binaries)):
        bounds = list(zip(lower, upper))
        for column, value in zip(binaries, assignment):
            bounds[column] = (value, value)
        result = linprog(cost, A_ub=matrix, b_ub=rhs, bounds=bounds,
                         method="highs")
        if result.status == 0:
            best = min(best, result.fun)
    return best


def highs_milp(cost, matrix, rhs, lower, upper, binaries):
    integrality = np.zeros(cost.size)
    integrality[binaries] = 1
    result = milp(cost, constraints=LinearConstraint(matrix, -np.inf, rhs),
                  bounds=Bounds(lower, upper), integrality=integrality)
    return result.fun if result.status == 0 else math.inf


def node_outcome(status, x, objective):
    return SimplexOutcome(status=status, x=np.asarray(x, dtype=float),
                          duals=np.zeros(0), reduced_costs=np.zeros(len(x)),
                          objective=objective, iterations=1)


class TestBranchAndBound(unittest.TestCase):
    def test_knapsack(self) -> None:
        values = np.array([10.0, 13.0, 7.0, 8.0])
        weights = np.array([[5.0, 6.0, 3.0, 4.0]])
        search = BranchAndBound(relaxation(-values, weights, ["<="], np.array([10.0])),
                                np.zeros(4), np.ones(4), [0, 1, 2, 3])
        outcome = search.solve()
        self.assertEqual(outcome.status, "optimal")
        self.assertAlmostEqual(outcome.objective, -21.0)
        np.testing.assert_allclose(outcome.x, [0.0, 1.0, 0.0, 1.0])
        self.assertLessEqual(outcome.gap, 1e-6)

    def test_infeasible_root(self) -> None:
        search = BranchAndBound(
            relaxation(np.array([1.0]), np.array([[1.0]]), [">="], np.array([2.0])),
            np.zeros(1), np.ones(1), [0])
        self.assertEqual(search.solve().status, "infeasible")

    def test_infeasible_integer_problem(self) -> None:
        # 0.4 <= x <= 0.6 has no binary solution
        search = BranchAndBound(
            relaxation(np.array([1.0]), np.array([[1.0], [1.0]]), [">=", "<="],
                       np.array([0.4, 0.6])),
            np.zeros(1), np.ones(1), [0])
        outcome = search.solve()
        self.assertEqual(outcome.status, "infeasible")
        self.assertIsNone(outcome.x)

    def test_node_limit(self) -> None:
        rng = np.random.default_rng(1)
        values = rng.uniform(1.0, 2.0, size=12)
        weights = rng.uniform(1.0, 2.0, size=(1, 12))
        search = BranchAndBound(
            relaxation(-values, weights, ["<="], np.array([weights.sum() / 2.0])),
            np.zeros(12), np.ones(12), list(range(12)), node_limit=3)
        outcome = search.solve()
        self.assertEqual(outcome.status, "node-limit")
        self.assertLessEqual(outcome.nodes, 5)

    def test_random_milps_match_enumeration(self) -> None:
        rng = np.random.default_rng(99)
        started = time.monotonic()
        for _ in range(100):
            n_bin = int(rng.integers(1, 7))
            n_cont = int(rng.integers(1, 9))
            n = n_bin + n_cont
            m = int(rng.integers(1, 6))
            lower = np.concatenate([np.zeros(n_bin),
                                    rng.uniform(-2.0, 0.0, size=n_cont)])
            upper = np.concatenate([np.ones(n_bin),
                                    rng.uniform(0.5, 3.0, size=n_cont)])
            point = np.concatenate([rng.integers(0, 2, size=n_bin).astype(float),
                                    rng.uniform(lower[n_bin:], upper[n_bin:])])
            matrix = rng.normal(size=(m, n))
            rhs = matrix @ point + rng.uniform(0.0, 0.5, size=m)
            cost = rng.normal(size=n)
            binaries = list(range(n_bin))

            search = BranchAndBound(relaxation(cost, matrix, ["<="] * m, rhs),
                                    lower, upper, binaries)
            outcome = search.solve()
            expected = enumerate_binaries(cost, matrix, rhs, lower, upper,
                                          binaries)
            self.assertEqual(outcome.status, "optimal")
            self.assertAlmostEqual(outcome.objective, expected, delta=1e-6)
            np.testing.assert_array_equal(
                outcome.x[binaries], np.round(outcome.x[binaries]))
        self.assertLess(time.monotonic() - started, 60.0)

    def test_wide_random_milps_match_highs(self) -> None:
        rng = np.random.default_rng(2024)
        started = time.monotonic()
        for n_bin in range(7, 13):
            n_cont = int(rng.integers(1, 5))
            n = n_bin + n_cont
            m = int(rng.integers(2, 6))
            lower = np.concatenate([np.zeros(n_bin),
                                    rng.uniform(-2.0, 0.0, size=n_cont)])
            upper = np.concatenate([np.ones(n_bin),
                                    rng.uniform(0.5, 3.0, size=n_cont)])
            point = np.concatenate([rng.integers(0, 2, size=n_bin).astype(float),
                                    rng.uniform(lower[n_bin:], upper[n_bin:])])
            matrix = rng.normal(size=(m, n))
            rhs = matrix @ point + rng.uniform(0.0, 0.5, size=m)
            cost = rng.normal(size=n)
            binaries = list(range(n_bin))

            search = BranchAndBound(relaxation(cost, matrix, ["<="] * m, rhs),
                                    lower, upper, binaries)
            outcome = search.solve()
            expected = highs_milp(cost, matrix, rhs, lower, upper, binaries)
            self.assertEqual(outcome.status, "optimal")
            self.assertAlmostEqual(outcome.objective, expected, delta=1e-6)
            self.assertLessEqual(outcome.bound, outcome.objective + 1e-9)
        self.assertLess(time.monotonic() - started, 60.0)

    def test_twelve_binaries_match_enumeration(self) -> None:
        rng = np.random.default_rng(12)
        lower = np.concatenate([np.zeros(12), [-1.0]])
        upper = np.concatenate([np.ones(12), [2.0]])
        point = np.concatenate([rng.integers(0, 2, size=12).astype(float), [0.5]])
        matrix = rng.normal(size=(3, 13))
        rhs = matrix @ point + 0.2
        cost = rng.normal(size=13)
        binaries = list(range(12))
        outcome = BranchAndBound(relaxation(cost, matrix, ["<="] * 3, rhs),
                                 lower, upper, binaries).solve()
        self.assertAlmostEqual(
            outcome.objective,
            enumerate_binaries(cost, matrix, rhs, lower, upper, binaries),
            delta=1e-6)

    def test_iteration_limited_children_keep_parent_bound(self) -> None:
        def stalled(lower, upper):
            if lower[0] == upper[0]:
                return node_outcome("iteration-limit", [lower[0]], math.nan)
            return node_outcome("optimal", [0.5], -2.0)

        outcome = BranchAndBound(stalled, np.zeros(1), np.ones(1), [0]).solve()
        self.assertEqual(outcome.status, "iteration-limit")
        self.assertIsNone(outcome.x)
        self.assertEqual(outcome.bound, -2.0)

    def test_iteration_limited_sibling_caps_bound(self) -> None:
        def half_stalled(lower, upper):
            if lower[0] == upper[0] == 0.0:
                return node_outcome("iteration-limit", [0.0], math.nan)
            if lower[0] == upper[0] == 1.0:
                return node_outcome("optimal", [1.0], -1.0)
            return node_outcome("optimal", [0.5], -3.0)

        outcome = BranchAndBound(half_stalled, np.zeros(1), np.ones(1),
                                 [0]).solve()
        self.assertEqual(outcome.status, "iteration-limit")
        self.assertEqual(outcome.objective, -1.0)
        self.assertEqual(outcome.bound, -3.0)
        self.assertEqual(outcome.gap, 2.0)


if __name__ == '__main__':
    unittest.main()
