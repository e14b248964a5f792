import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, IO, List, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .branch_and_bound import BranchAndBound
from .exceptions import BackendError
from .simplex import RELATIONS, BoundedSimplex

logger = logging.getLogger(__name__)

STATUSES = ("optimal", "infeasible", "unbounded", "iteration-limit",
            "node-limit", "time-limit")
SENSES = ("min", "max")


class LinearProgram:
    """Solver-neutral linear program.

    Methods
    -------
    add_variable
        Appends a column with bounds and an objective coefficient and returns
        its id.
    add_constraint
        Appends a row given as {column id: coefficient}, a relation and a
        right-hand side, and returns its id.
    set_objective
        Replaces the objective coefficients, sense and constant offset.
    """

    def __init__(self, sense: str = "min", name: str = "lp") -> None:
        if sense not in SENSES:
            raise ValueError(f"Objective sense must be one of {SENSES}.")
        self.__name: str = name
        self.__sense: str = sense
        self.__offset: float = 0.0
        self.__names: List[str] = []
        self.__lower: List[float] = []
        self.__upper: List[float] = []
        self.__cost: List[float] = []
        self.__rows: List[Dict[int, float]] = []
        self.__relations: List[str] = []
        self.__rhs: List[float] = []
        self.__row_names: List[str] = []
        self.__columns: Dict[str, int] = {}

    def get_name(self) -> str:
        return self.__name

    def add_variable(self, name: str = None, lower: float = 0.0,
                     upper: float = math.inf, cost: float = 0.0) -> int:
        if math.isnan(lower) or math.isnan(upper) or lower > upper:
            raise ValueError(f"Invalid bounds [{lower}, {upper}] for variable "
                             f"'{name}'.")
        column = len(self.__names)
        name = name or f"x{column}"
        if name in self.__columns:
            raise ValueError(f"Variable '{name}' already exists.")
        self.__names.append(name)
        self.__columns[name] = column
        self.__lower.append(float(lower))
        self.__upper.append(float(upper))
        self.__cost.append(float(cost))
        return column

    def add_constraint(self, coefficients: Dict[int, float], relation: str,
                       rhs: float, name: str = None) -> int:
        if relation not in RELATIONS:
            raise ValueError(f"Row relation must be one of {RELATIONS}.")
        if not math.isfinite(rhs):
            raise ValueError(f"Right-hand side of row '{name}' is not finite.")
        for column in coefficients:
            if not 0 <= column < len(self.__names):
                raise ValueError(f"Row '{name}' references unknown column "
                                 f"{column}.")
        row = len(self.__rows)
        self.__rows.append({int(k): float(v) for k, v in coefficients.items()
                            if v != 0.0})
        self.__relations.append(relation)
        self.__rhs.append(float(rhs))
        self.__row_names.append(name or f"r{row}")
        return row

    def set_objective(self, coefficients: Dict[int, float], sense: str = None,
                      offset: float = 0.0) -> None:
        if sense is not None:
            if sense not in SENSES:
                raise ValueError(f"Objective sense must be one of {SENSES}.")
            self.__sense = sense
        self.__cost = [0.0] * len(self.__names)
        for column, value in coefficients.items():
            self.__cost[column] = float(value)
        self.__offset = float(offset)

    def set_bounds(self, column: int, lower: float, upper: float) -> None:
        if lower > upper:
            raise ValueError(f"Invalid bounds [{lower}, {upper}].")
        self.__lower[column] = float(lower)
        self.__upper[column] = float(upper)

    def column(self, name: str) -> int:
        return self.__columns[name]

    def n_variables(self) -> int:
        return len(self.__names)

    def n_constraints(self) -> int:
        return len(self.__rows)

    def get_sense(self) -> str:
        return self.__sense

    def get_offset(self) -> float:
        return self.__offset

    def get_variable_names(self) -> List[str]:
        return list(self.__names)

    def get_row_names(self) -> List[str]:
        return list(self.__row_names)

    def get_cost(self) -> np.ndarray:
        return np.array(self.__cost, dtype=float)

    def get_lower(self) -> np.ndarray:
        return np.array(self.__lower, dtype=float)

    def get_upper(self) -> np.ndarray:
        return np.array(self.__upper, dtype=float)

    def get_relations(self) -> List[str]:
        return list(self.__relations)

    def get_rhs(self) -> np.ndarray:
        return np.array(self.__rhs, dtype=float)

    def get_row(self, row: int) -> Dict[int, float]:
        return dict(self.__rows[row])

    def get_matrix(self) -> sp.csr_matrix:
        rows, cols, values = [], [], []
        for i, entries in enumerate(self.__rows):
            for j, value in entries.items():
                rows.append(i)
                cols.append(j)
                values.append(value)
        return sp.csr_matrix((values, (rows, cols)),
                             shape=(len(self.__rows), len(self.__names)))

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.get_cost() @ x) + self.__offset

    def residual(self, x: np.ndarray) -> float:
        """Largest violation of a row or a column bound at ``x``."""
        activity = self.get_matrix() @ x
        rhs = self.get_rhs()
        worst = 0.0
        for value, relation, target in zip(activity, self.__relations, rhs):
            if relation == "<=":
                worst = max(worst, value - target)
            elif relation == ">=":
                worst = max(worst, target - value)
            else:
                worst = max(worst, abs(value - target))
        worst = max(worst, float(np.max(self.get_lower() - x, initial=0.0)),
                    float(np.max(x - self.get_upper(), initial=0.0)))
        return worst


class MilpProgram:
    """A LinearProgram together with the ids of its binary columns."""

    def __init__(self, base: LinearProgram, binary_vars: Sequence[int]) -> None:
        lower, upper = base.get_lower(), base.get_upper()
        for column in binary_vars:
            if not 0 <= column < base.n_variables():
                raise ValueError(f"Binary column {column} does not exist.")
            if lower[column] not in (0.0, 1.0) or upper[column] not in (0.0, 1.0):
                raise ValueError(
                    f"Binary column '{base.get_variable_names()[column]}' must "
                    f"have bounds within [0, 1], got [{lower[column]}, "
                    f"{upper[column]}].")
        self.__base: LinearProgram = base
        self.__binary_vars: List[int] = sorted(set(int(c) for c in binary_vars))

    def get_base(self) -> LinearProgram:
        return self.__base

    def get_binary_vars(self) -> List[int]:
        return list(self.__binary_vars)

    def n_binaries(self) -> int:
        return len(self.__binary_vars)


@dataclass
class SolverConfig:
    """Limits shared by the backends.

    ``gap_tolerance`` closes the native search once incumbent minus bound
    is at most this value (absolute). HiGHS only accepts a relative gap, so
    the scipy backend passes it as ``mip_rel_gap``; attack objectives are
    normalized to O(1) values where the two agree in scale.
    """
    gap_tolerance: float = 1e-6
    node_limit: int = 100000
    time_limit: float = math.inf
    iteration_limit: int = 100000


@dataclass
class SolveResult:
    """Outcome of a solve in the sense stated by the program.

    ``duals`` and ``reduced_costs`` (LP only) are derivatives of the optimal
    objective with respect to the row right-hand sides and the column values.
    ``bound`` and ``nodes`` are filled for MILPs.
    """
    status: str
    x: Optional[np.ndarray] = None
    objective: float = math.nan
    duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    bound: float = math.nan
    nodes: int = 0
    iterations: int = 0
    backend: str = "native"
    solve_ms: float = 0.0
    info: Dict[str, str] = field(default_factory=dict)

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def gap(self) -> float:
        if math.isnan(self.bound) or math.isnan(self.objective):
            return math.inf
        return abs(self.objective - self.bound)


def _signed(value: float, sense: str) -> float:
    return -value if sense == "max" else value


class NativeBackend:
    """The bundled simplex and branch-and-bound engines."""

    name = "native"

    def solve_lp(self, lp: LinearProgram, config: SolverConfig) -> SolveResult:
        outcome = self.__relax(lp, lp.get_matrix().toarray(), lp.get_lower(),
                               lp.get_upper(), config)
        sense = lp.get_sense()
        if outcome.status != "optimal":
            return SolveResult(status=outcome.status,
                               iterations=outcome.iterations, backend=self.name)
        return SolveResult(status="optimal", x=outcome.x,
                           objective=_signed(outcome.objective, sense) +
                           lp.get_offset(),
                           duals=-outcome.duals if sense == "max" else outcome.duals,
                           reduced_costs=-outcome.reduced_costs
                           if sense == "max" else outcome.reduced_costs,
                           iterations=outcome.iterations, backend=self.name)

    def solve_milp(self, program: MilpProgram, config: SolverConfig) -> SolveResult:
        lp = program.get_base()
        sense = lp.get_sense()
        dense = lp.get_matrix().toarray()
        search = BranchAndBound(
            lambda lower, upper: self.__relax(lp, dense, lower, upper, config),
            lp.get_lower(), lp.get_upper(), program.get_binary_vars(),
            gap_tolerance=config.gap_tolerance, node_limit=config.node_limit,
            time_limit=config.time_limit)
        outcome = search.solve()
        objective = math.nan if outcome.x is None else \
            _signed(outcome.objective, sense) + lp.get_offset()
        bound = _signed(outcome.bound, sense) + lp.get_offset() \
            if math.isfinite(outcome.bound) else math.nan
        return SolveResult(status=outcome.status, x=outcome.x,
                           objective=objective, bound=bound,
                           nodes=outcome.nodes, iterations=outcome.iterations,
                           backend=self.name)

    @staticmethod
    def __relax(lp: LinearProgram, dense: np.ndarray, lower: np.ndarray,
                upper: np.ndarray, config: SolverConfig):
        cost = lp.get_cost()
        if lp.get_sense() == "max":
            cost = -cost
        engine = BoundedSimplex(cost, dense,
                                lp.get_relations(), lp.get_rhs(), lower, upper,
                                iteration_limit=config.iteration_limit)
        return engine.solve()


class ScipyBackend:
    """Adapter routing solves through HiGHS via scipy.optimize."""

    name = "scipy-highs"

    @staticmethod
    def __split(lp: LinearProgram):
        matrix = lp.get_matrix()
        relations = lp.get_relations()
        rhs = lp.get_rhs()
        upper_rows = [i for i, r in enumerate(relations) if r != "="]
        equal_rows = [i for i, r in enumerate(relations) if r == "="]
        flip = np.array([-1.0 if relations[i] == ">=" else 1.0 for i in upper_rows])
        a_ub = sp.diags(flip, 0) @ matrix[upper_rows] if upper_rows else None
        b_ub = flip * rhs[upper_rows] if upper_rows else None
        a_eq = matrix[equal_rows] if equal_rows else None
        b_eq = rhs[equal_rows] if equal_rows else None
        return a_ub, b_ub, a_eq, b_eq, upper_rows, equal_rows, flip

    def solve_lp(self, lp: LinearProgram, config: SolverConfig) -> SolveResult:
        sense = lp.get_sense()
        cost = -lp.get_cost() if sense == "max" else lp.get_cost()
        a_ub, b_ub, a_eq, b_eq, upper_rows, equal_rows, flip = self.__split(lp)
        bounds = list(zip(np.where(np.isfinite(lp.get_lower()), lp.get_lower(), None),
                          np.where(np.isfinite(lp.get_upper()), lp.get_upper(), None)))
        res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                      bounds=bounds, method="highs",
                      options={"maxiter": config.iteration_limit})
        status = {0: "optimal", 1: "iteration-limit", 2: "infeasible",
                  3: "unbounded"}.get(res.status)
        if status is None:
            raise BackendError(self.name, res.message)
        if status != "optimal":
            return SolveResult(status=status, backend=self.name,
                               info={"message": res.message})

        duals = np.zeros(lp.n_constraints())
        if upper_rows:
            duals[upper_rows] = flip * res.ineqlin.marginals
        if equal_rows:
            duals[equal_rows] = res.eqlin.marginals
        reduced = res.lower.marginals + res.upper.marginals
        if sense == "max":
            duals, reduced = -duals, -reduced
        return SolveResult(status="optimal", x=np.asarray(res.x),
                           objective=_signed(float(res.fun), sense) +
                           lp.get_offset(),
                           duals=duals, reduced_costs=reduced,
                           iterations=int(res.nit), backend=self.name)

    def solve_milp(self, program: MilpProgram, config: SolverConfig) -> SolveResult:
        lp = program.get_base()
        sense = lp.get_sense()
        cost = -lp.get_cost() if sense == "max" else lp.get_cost()
        relations = lp.get_relations()
        rhs = lp.get_rhs()
        row_lower = np.array([-np.inf if r == "<=" else b
                              for r, b in zip(relations, rhs)])
        row_upper = np.array([np.inf if r == ">=" else b
                              for r, b in zip(relations, rhs)])
        integrality = np.zeros(lp.n_variables())
        integrality[program.get_binary_vars()] = 1
        # relative in HiGHS, absolute in the native search
        options = {"disp": False, "mip_rel_gap": config.gap_tolerance,
                   "node_limit": config.node_limit}
        if math.isfinite(config.time_limit):
            options["time_limit"] = config.time_limit
        constraints = LinearConstraint(lp.get_matrix(), row_lower, row_upper) \
            if lp.n_constraints() else None
        res = milp(cost, integrality=integrality,
                   bounds=Bounds(lp.get_lower(), lp.get_upper()),
                   constraints=constraints, options=options)

        if res.status == 0:
            status = "optimal"
        elif res.status == 1:
            status = "time-limit" if "time" in res.message.lower() else "node-limit"
        elif res.status == 2:
            status = "infeasible"
        elif res.status == 3:
            status = "unbounded"
        else:
            raise BackendError(self.name, res.message)

        x = None if res.x is None else np.asarray(res.x)
        if x is not None:
            binaries = program.get_binary_vars()
            x[binaries] = np.round(x[binaries])
        objective = math.nan if res.fun is None else \
            _signed(float(res.fun), sense) + lp.get_offset()
        dual_bound = getattr(res, "mip_dual_bound", None)
        bound = math.nan if dual_bound is None or not math.isfinite(dual_bound) \
            else _signed(float(dual_bound), sense) + lp.get_offset()
        return SolveResult(status=status, x=x, objective=objective, bound=bound,
                           nodes=int(getattr(res, "mip_node_count", 0) or 0),
                           backend=self.name, info={"message": res.message})


class _GuardedBackend:
    """Wraps an external adapter so contract violations become BackendError."""

    def __init__(self, adapter) -> None:
        self.__adapter = adapter
        self.name: str = adapter.name

    def __check(self, result, n_variables: int) -> SolveResult:
        if not isinstance(result, SolveResult):
            raise BackendError(self.name, "solve must return a SolveResult, got "
                               f"{type(result).__name__}.")
        if result.status not in STATUSES:
            raise BackendError(self.name, f"unknown status '{result.status}'.")
        if result.is_optimal and (result.x is None or
                                  np.shape(result.x) != (n_variables,)):
            raise BackendError(self.name, "optimal result must carry a primal "
                               f"vector of length {n_variables}.")
        return result

    def solve_lp(self, lp: LinearProgram, config: SolverConfig) -> SolveResult:
        try:
            result = self.__adapter.solve_lp(lp, config)
        except BackendError:
            raise
        except Exception as error:
            raise BackendError(self.name, f"solve_lp failed: {error}") from error
        return self.__check(result, lp.n_variables())

    def solve_milp(self, program: MilpProgram, config: SolverConfig) -> SolveResult:
        try:
            result = self.__adapter.solve_milp(program, config)
        except BackendError:
            raise
        except Exception as error:
            raise BackendError(self.name, f"solve_milp failed: {error}") from error
        return self.__check(result, program.get_base().n_variables())


_NATIVE = NativeBackend()
_backend = _NATIVE


def register_external_backend(adapter) -> None:
    """Routes every later solve through ``adapter``.

    The adapter needs a ``name`` attribute and ``solve_lp(lp, config)`` and
    ``solve_milp(milp, config)`` methods returning SolveResult objects.
    """
    global _backend
    name = getattr(adapter, "name", None)
    if not isinstance(name, str) or not name:
        raise BackendError(repr(adapter), "adapter must define a non-empty "
                           "'name' attribute.")
    for method in ("solve_lp", "solve_milp"):
        if not callable(getattr(adapter, method, None)):
            raise BackendError(name, f"adapter does not implement '{method}'.")
    _backend = _GuardedBackend(adapter)
    logger.info("Registered external solver backend '%s'.", name)


def reset_backend() -> None:
    """Restores the native engine."""
    global _backend
    _backend = _NATIVE


def get_backend():
    return _backend


def backend_by_name(name: str):
    """Resolves a backend name used in sweep configuration files."""
    if name == "native":
        return _NATIVE
    if name in ("scipy", "highs", ScipyBackend.name):
        return ScipyBackend()
    raise ValueError(f"Unknown solver backend '{name}'; expected 'native' or "
                     "'scipy'.")


def solve_lp(lp: LinearProgram, config: SolverConfig = None) -> SolveResult:
    """Solves a linear program with the active backend.

    Parameters
    ----------
    lp : LinearProgram
    config : SolverConfig, optional

    Return
    ------
    SolveResult
        Infeasibility, unboundedness and limits are statuses, not exceptions.
    """
    started = time.perf_counter()
    result = _backend.solve_lp(lp, config or SolverConfig())
    result.solve_ms = 1000.0 * (time.perf_counter() - started)
    return result


def solve_milp(program: MilpProgram, config: SolverConfig = None) -> SolveResult:
    """Solves a mixed-integer program with the active backend.

    Parameters
    ----------
    program : MilpProgram
    config : SolverConfig, optional
        Gap tolerance (absolute), node, time and LP iteration limits.

    Return
    ------
    SolveResult
    """
    started = time.perf_counter()
    result = _backend.solve_milp(program, config or SolverConfig())
    result.solve_ms = 1000.0 * (time.perf_counter() - started)
    return result


# -----------------------------------------------------------------------------
# Fixed-form MPS export.
# -----------------------------------------------------------------------------
def _mps_number(value: float) -> str:
    for digits in range(12, 0, -1):
        text = f"{value:.{digits}g}"
        if len(text) <= 12:
            return text
    return f"{value:.1e}"


def _mps_line(code: str, first: str, second: str = "", value: float = None,
              third: str = "", other: float = None) -> str:
    line = f" {code:<2} {first:<8}  {second:<8}"
    if value is not None:
        line += f"  {_mps_number(value):>12}"
    if third:
        line += f"   {third:<8}  {_mps_number(other):>12}"
    return line.rstrip()


def _mps_marker(tag: str) -> str:
    return _mps_line("", "MARKER", "'MARKER'").ljust(39) + f"'{tag}'"


def write_mps(program: Union[LinearProgram, MilpProgram], stream: IO[str]) -> None:
    """Writes ``program`` in fixed-form MPS. Rows are named R<i> and columns
    C<j> so every name fits the eight-character fields."""
    if isinstance(program, MilpProgram):
        lp, binaries = program.get_base(), set(program.get_binary_vars())
    else:
        lp, binaries = program, set()

    codes = {"<=": "L", "=": "E", ">=": "G"}
    lines = [f"NAME          {lp.get_name()[:8]}"]
    if lp.get_sense() == "max":
        lines += ["OBJSENSE", "    MAX"]
    lines.append("ROWS")
    lines.append(_mps_line("N", "COST"))
    for i, relation in enumerate(lp.get_relations()):
        lines.append(_mps_line(codes[relation], f"R{i}"))

    columns = lp.get_matrix().tocsc()
    cost = lp.get_cost()
    lines.append("COLUMNS")
    in_marker = False
    for j in range(lp.n_variables()):
        if (j in binaries) != in_marker:
            in_marker = not in_marker
            tag = "INTORG" if in_marker else "INTEND"
            lines.append(_mps_marker(tag))
        entries = []
        if cost[j] != 0.0:
            entries.append(("COST", cost[j]))
        start, end = columns.indptr[j], columns.indptr[j + 1]
        entries += [(f"R{i}", v) for i, v in
                    zip(columns.indices[start:end], columns.data[start:end])]
        if not entries:
            entries.append(("COST", 0.0))
        for name, value in entries:
            lines.append(_mps_line("", f"C{j}", name, value))
    if in_marker:
        lines.append(_mps_marker("INTEND"))

    lines.append("RHS")
    if lp.get_offset() != 0.0:
        lines.append(_mps_line("", "RHS", "COST", -lp.get_offset()))
    for i, value in enumerate(lp.get_rhs()):
        if value != 0.0:
            lines.append(_mps_line("", "RHS", f"R{i}", value))

    lines.append("BOUNDS")
    for j, (lower, upper) in enumerate(zip(lp.get_lower(), lp.get_upper())):
        name = f"C{j}"
        if j in binaries and lower == 0.0 and upper == 1.0:
            lines.append(_mps_line("BV", "BND", name))
        elif lower == upper:
            lines.append(_mps_line("FX", "BND", name, lower))
        elif math.isinf(lower) and math.isinf(upper):
            lines.append(_mps_line("FR", "BND", name))
        else:
            if math.isinf(lower):
                lines.append(_mps_line("MI", "BND", name))
            elif lower != 0.0:
                lines.append(_mps_line("LO", "BND", name, lower))
            if not math.isinf(upper):
                lines.append(_mps_line("UP", "BND", name, upper))
    lines.append("ENDATA")
    stream.write("\n".join(lines) + "\n")
