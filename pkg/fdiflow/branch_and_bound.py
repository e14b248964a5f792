import heapq
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .simplex import SimplexOutcome

logger = logging.getLogger(__name__)

INTEGRALITY_TOLERANCE = 1e-6

Relaxation = Callable[[np.ndarray, np.ndarray], SimplexOutcome]


@dataclass
class BranchAndBoundOutcome:
    """Minimization result. ``bound`` is the best proven lower bound and
    ``objective`` the incumbent value (``inf`` when no incumbent exists)."""
    status: str
    x: Optional[np.ndarray]
    objective: float
    bound: float
    nodes: int
    iterations: int

    @property
    def gap(self) -> float:
        if not math.isfinite(self.objective) or not math.isfinite(self.bound):
            return math.inf
        return max(self.objective - self.bound, 0.0)


class BranchAndBound:
    """Best-first branch and bound over binary columns.

    Each node solves its LP relaxation from scratch with tightened column
    bounds. Open nodes are ordered by (relaxation bound, node id), which
    keeps the search deterministic. The branching column is the most
    fractional binary, the lowest column id winning ties.

    Methods
    -------
    solve
        Explores the tree until the gap closes or a limit is reached.
    """

    def __init__(self, relaxation: Relaxation, lower: np.ndarray,
                 upper: np.ndarray, binaries: List[int],
                 gap_tolerance: float = 1e-6, node_limit: int = 100000,
                 time_limit: float = math.inf) -> None:
        self.__relaxation: Relaxation = relaxation
        self.__lower: np.ndarray = np.asarray(lower, dtype=float)
        self.__upper: np.ndarray = np.asarray(upper, dtype=float)
        self.__binaries: np.ndarray = np.array(sorted(binaries), dtype=int)
        self.__gap_tolerance: float = gap_tolerance
        self.__node_limit: int = node_limit
        self.__time_limit: float = time_limit

    def __branching_column(self, x: np.ndarray) -> int:
        if self.__binaries.size == 0:
            return -1
        values = x[self.__binaries]
        distance = np.minimum(values - np.floor(values), np.ceil(values) - values)
        if np.max(distance) <= INTEGRALITY_TOLERANCE:
            return -1
        return int(self.__binaries[np.argmax(distance)])

    def solve(self) -> BranchAndBoundOutcome:
        started = time.monotonic()
        iterations = 0
        nodes = 0
        incumbent_x: Optional[np.ndarray] = None
        incumbent = math.inf
        hit_iteration_limit = False
        # parent bounds of children whose relaxation hit the iteration limit
        unexplored = math.inf

        root = self.__relaxation(self.__lower, self.__upper)
        nodes += 1
        iterations += root.iterations
        if root.status != "optimal":
            return BranchAndBoundOutcome(status=root.status, x=None,
                                         objective=math.inf,
                                         bound=-math.inf, nodes=nodes,
                                         iterations=iterations)

        heap = [(root.objective, 0, self.__lower, self.__upper, root.x)]
        next_id = 1
        status = "optimal"

        while heap:
            bound = heap[0][0]
            if bound >= incumbent - self.__gap_tolerance:
                break
            if nodes >= self.__node_limit:
                status = "node-limit"
                break
            if time.monotonic() - started > self.__time_limit:
                status = "time-limit"
                break

            bound, _, lower, upper, x = heapq.heappop(heap)
            column = self.__branching_column(x)
            if column < 0:
                if bound < incumbent:
                    incumbent, incumbent_x = bound, x
                    logger.debug("New incumbent %.10g after %d nodes.",
                                 incumbent, nodes)
                continue

            for value in (0.0, 1.0):
                child_lower, child_upper = lower.copy(), upper.copy()
                child_lower[column] = child_upper[column] = value
                child = self.__relaxation(child_lower, child_upper)
                nodes += 1
                iterations += child.iterations
                if child.status == "iteration-limit":
                    hit_iteration_limit = True
                    unexplored = min(unexplored, bound)
                    continue
                if child.status != "optimal" or \
                        child.objective >= incumbent - self.__gap_tolerance:
                    continue
                heapq.heappush(heap, (child.objective, next_id, child_lower,
                                      child_upper, child.x))
                next_id += 1

        best_open = heap[0][0] if heap else math.inf
        proven = min(best_open, incumbent, unexplored)
        if status == "optimal" and hit_iteration_limit:
            status = "iteration-limit"
        if incumbent_x is None:
            if status == "optimal":
                status = "infeasible"
            return BranchAndBoundOutcome(status=status, x=None,
                                         objective=math.inf, bound=proven,
                                         nodes=nodes, iterations=iterations)

        x = incumbent_x.copy()
        x[self.__binaries] = np.round(x[self.__binaries])
        logger.debug("Branch and bound: %s, %d nodes, objective %.10g, "
                     "bound %.10g.", status, nodes, incumbent, proven)
        return BranchAndBoundOutcome(status=status, x=x, objective=incumbent,
                                     bound=proven, nodes=nodes,
                                     iterations=iterations)
