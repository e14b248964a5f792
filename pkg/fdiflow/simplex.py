"""Two-phase bounded-variable primal simplex on dense data.

The engine solves ``min cost . x`` subject to ``A x (<=, =, >=) b`` and
``lower <= x <= upper``. Every row receives a slack ``s`` with ``A x + s = b``;
the relation of the row is encoded in the bounds of its slack. Rows whose
starting residual cannot be absorbed by the slack get an artificial column,
driven to zero in phase one.
"""
import logging
from dataclasses import dataclass
from typing import List

import numpy as np

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-9
OPTIMALITY_TOLERANCE = 1e-9
FEASIBILITY_TOLERANCE = 1e-7
DEGENERATE_STEP = 1e-12
REFACTOR_EVERY = 64
DEFAULT_ITERATION_LIMIT = 100000

RELATIONS = ("<=", "=", ">=")


@dataclass
class SimplexOutcome:
    """Raw result of a minimization. ``duals`` are d(objective)/d(rhs) per
    row and ``reduced_costs`` belong to the structural columns."""
    status: str
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    iterations: int


class BoundedSimplex:
    """Revised primal simplex with an explicit basis inverse.

    Methods
    -------
    solve
        Runs phase one (when artificials are present) and phase two, and
        returns a SimplexOutcome.

    Pricing is Dantzig's largest reduced cost. After ``2 (m + n)``
    consecutive degenerate pivots the smallest-index rule takes over until
    the next step of positive length. The basis inverse is updated by
    product-form pivots and recomputed from scratch every ``REFACTOR_EVERY``
    pivots.
    """

    def __init__(self, cost: np.ndarray, matrix: np.ndarray, relations: List[str],
                 rhs: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                 iteration_limit: int = DEFAULT_ITERATION_LIMIT) -> None:
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        m, n = matrix.shape if matrix.size else (len(rhs), len(cost))
        if matrix.size == 0:
            matrix = np.zeros((m, n))
        for relation in relations:
            if relation not in RELATIONS:
                raise ValueError(f"Unknown row relation '{relation}'.")

        self.__m: int = m
        self.__n: int = n
        self.__cost: np.ndarray = np.asarray(cost, dtype=float)
        self.__rhs: np.ndarray = np.asarray(rhs, dtype=float)
        self.__iteration_limit: int = iteration_limit
        self.__iterations: int = 0

        slack_lower = np.array([-np.inf if r == ">=" else 0.0 for r in relations])
        slack_upper = np.array([np.inf if r == "<=" else 0.0 for r in relations])

        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        start = np.where(np.isfinite(lower), lower,
                         np.where(np.isfinite(upper), upper, 0.0))
        residual = self.__rhs - matrix @ start if m else np.zeros(0)

        basis = []
        slack_value = np.zeros(m)
        artificial_rows, artificial_signs, artificial_values = [], [], []
        for i in range(m):
            if slack_lower[i] - FEASIBILITY_TOLERANCE <= residual[i] <= \
                    slack_upper[i] + FEASIBILITY_TOLERANCE:
                slack_value[i] = min(max(residual[i], slack_lower[i]),
                                     slack_upper[i])
                basis.append(n + i)
            else:
                slack_value[i] = min(max(residual[i], slack_lower[i]),
                                     slack_upper[i])
                rest = residual[i] - slack_value[i]
                artificial_rows.append(i)
                artificial_signs.append(1.0 if rest >= 0.0 else -1.0)
                artificial_values.append(abs(rest))
                basis.append(n + m + len(artificial_rows) - 1)

        k = len(artificial_rows)
        artificial = np.zeros((m, k))
        for col, (row, sign) in enumerate(zip(artificial_rows, artificial_signs)):
            artificial[row, col] = sign

        self.__matrix: np.ndarray = np.hstack([matrix, np.eye(m), artificial])
        self.__n_artificial: int = k
        self.__lower: np.ndarray = np.concatenate([lower, slack_lower, np.zeros(k)])
        self.__upper: np.ndarray = np.concatenate(
            [upper, slack_upper, np.full(k, np.inf)])
        self.__x: np.ndarray = np.concatenate(
            [start, slack_value, np.asarray(artificial_values, dtype=float)])
        self.__basis: List[int] = basis
        self.__is_basic: np.ndarray = np.zeros(self.__matrix.shape[1], dtype=bool)
        self.__is_basic[basis] = True
        self.__basis_inverse: np.ndarray = np.eye(m)
        self.__pivots_since_refactor: int = 0
        self.__refactor()

    def __refactor(self) -> None:
        if self.__m == 0:
            return
        self.__basis_inverse = np.linalg.inv(self.__matrix[:, self.__basis])
        nonbasic = np.where(self.__is_basic, 0.0, self.__x)
        self.__x[self.__basis] = self.__basis_inverse @ (
            self.__rhs - self.__matrix @ nonbasic)
        self.__pivots_since_refactor = 0

    def __duals(self, cost: np.ndarray) -> np.ndarray:
        if self.__m == 0:
            return np.zeros(0)
        return self.__basis_inverse.T @ cost[self.__basis]

    def __entering(self, reduced: np.ndarray, bland: bool) -> int:
        room_up = self.__upper - self.__x > DEGENERATE_STEP
        room_down = self.__x - self.__lower > DEGENERATE_STEP
        eligible = ~self.__is_basic & (
            ((reduced < -OPTIMALITY_TOLERANCE) & room_up) |
            ((reduced > OPTIMALITY_TOLERANCE) & room_down))
        candidates = np.flatnonzero(eligible)
        if candidates.size == 0:
            return -1
        if bland:
            return int(candidates[0])
        return int(candidates[np.argmax(np.abs(reduced[candidates]))])

    def __ratio_test(self, alpha: np.ndarray, direction: float, entering: int,
                     bland: bool):
        """Returns (step, leaving position) with position -1 for a bound flip
        of the entering variable and None when the step is unbounded."""
        flip = self.__upper[entering] - self.__lower[entering]
        if self.__m == 0:
            return (flip, -1) if np.isfinite(flip) else (np.inf, None)

        rate = -direction * alpha
        basic = self.__basis
        values = self.__x[basic]
        lower = self.__lower[basic]
        upper = self.__upper[basic]

        steps = np.full(self.__m, np.inf)
        falling = rate < -PIVOT_TOLERANCE
        rising = rate > PIVOT_TOLERANCE
        with np.errstate(invalid="ignore", divide="ignore"):
            steps[falling] = (values[falling] - lower[falling]) / -rate[falling]
            steps[rising] = (upper[rising] - values[rising]) / rate[rising]
        steps = np.maximum(steps, 0.0)

        best = float(np.min(steps))
        if not np.isfinite(best) and not np.isfinite(flip):
            return np.inf, None
        if flip <= best:
            return flip, -1

        ties = np.flatnonzero(steps <= best + DEGENERATE_STEP)
        if bland:
            position = int(ties[np.argmin(np.asarray(basic)[ties])])
        else:
            position = int(ties[np.argmax(np.abs(alpha[ties]))])
        return best, position

    def __pivot(self, position: int, entering: int, alpha: np.ndarray) -> None:
        inverse = self.__basis_inverse
        pivot_row = inverse[position] / alpha[position]
        inverse -= np.outer(alpha, pivot_row)
        inverse[position] = pivot_row

        leaving = self.__basis[position]
        self.__is_basic[leaving] = False
        self.__is_basic[entering] = True
        self.__basis[position] = entering

        self.__pivots_since_refactor += 1
        if self.__pivots_since_refactor >= REFACTOR_EVERY:
            self.__refactor()

    def __run(self, cost: np.ndarray, phase: int) -> str:
        threshold = 2 * (self.__m + self.__n)
        degenerate = 0
        bland = False
        first_artificial = self.__n + self.__m

        while True:
            if self.__iterations >= self.__iteration_limit:
                return "iteration-limit"

            duals = self.__duals(cost)
            reduced = cost - duals @ self.__matrix if self.__m else cost.copy()
            entering = self.__entering(reduced, bland)
            if entering < 0:
                return "optimal"

            self.__iterations += 1
            direction = 1.0 if reduced[entering] < 0.0 else -1.0
            alpha = self.__basis_inverse @ self.__matrix[:, entering] \
                if self.__m else np.zeros(0)
            step, position = self.__ratio_test(alpha, direction, entering, bland)
            if position is None:
                return "unbounded"

            self.__x[entering] += direction * step
            if self.__m:
                self.__x[self.__basis] -= direction * step * alpha

            if position >= 0:
                leaving = self.__basis[position]
                # snap the leaving variable onto the bound it reached
                if -direction * alpha[position] < 0.0:
                    self.__x[leaving] = self.__lower[leaving]
                else:
                    self.__x[leaving] = self.__upper[leaving]
                self.__pivot(position, entering, alpha)
                if phase == 1 and leaving >= first_artificial:
                    self.__upper[leaving] = 0.0
                    self.__x[leaving] = 0.0
            else:
                bound = self.__upper if direction > 0 else self.__lower
                self.__x[entering] = bound[entering]

            if step <= DEGENERATE_STEP:
                degenerate += 1
                if not bland and degenerate >= threshold:
                    logger.debug("Switching to smallest-index pricing after %d "
                                 "degenerate pivots.", degenerate)
                    bland = True
            else:
                degenerate = 0
                bland = False

    def __outcome(self, status: str, cost: np.ndarray) -> SimplexOutcome:
        self.__refactor()
        x = self.__x[:self.__n].copy()
        duals = self.__duals(cost)
        reduced = (cost - duals @ self.__matrix)[:self.__n] if self.__m \
            else cost[:self.__n].copy()
        return SimplexOutcome(status=status, x=x, duals=duals,
                              reduced_costs=reduced,
                              objective=float(self.__cost @ x),
                              iterations=self.__iterations)

    def solve(self) -> SimplexOutcome:
        """Runs both phases.

        Return
        ------
        SimplexOutcome
            Status is one of 'optimal', 'infeasible', 'unbounded' or
            'iteration-limit'.
        """
        n_total = self.__matrix.shape[1]
        phase_two_cost = np.zeros(n_total)
        phase_two_cost[:self.__n] = self.__cost

        if self.__n_artificial:
            phase_one_cost = np.zeros(n_total)
            phase_one_cost[self.__n + self.__m:] = 1.0
            status = self.__run(phase_one_cost, phase=1)
            if status == "iteration-limit":
                return self.__outcome(status, phase_two_cost)
            self.__refactor()
            infeasibility = float(self.__x[self.__n + self.__m:].sum())
            scale = max(1.0, float(np.max(np.abs(self.__rhs), initial=0.0)))
            if infeasibility > FEASIBILITY_TOLERANCE * scale:
                logger.debug("Phase one ended with infeasibility %.3e.",
                             infeasibility)
                return self.__outcome("infeasible", phase_two_cost)
            self.__lower[self.__n + self.__m:] = 0.0
            self.__upper[self.__n + self.__m:] = 0.0

        status = self.__run(phase_two_cost, phase=2)
        return self.__outcome(status, phase_two_cost)
