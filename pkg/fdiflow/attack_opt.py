"""Worst-case line-flow attacks: the single-level KKT/big-M formulation of
the attacker/operator problem, its reduced variants and the LP bounds.

The attacker chooses the state perturbation c; the operator answers with a
DCOPF on the cyber loads. Replacing the DCOPF by its KKT conditions and
linearizing complementarity with binaries gives a MILP. Three ways of
solving it are provided:

* ``algorithm1`` keeps the thermal rows of critical lines only and re-adds
  any line the answer overloads (exact).
* ``algorithm2`` additionally keeps only the marginal generators and fixes
  the rest at the baseline dispatch (lower bound).
* ``algorithm3`` drops the operator altogether and bounds the flow with an
  LP (upper bound, plus a lower bound from the true DCOPF response).
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Set, Tuple

import numpy as np

from .attack_model import (AttackReport, AttackVector, check_attack,
                           load_bus_ids)
from .case_io import GridCase
from .dcopf import (CRITICAL_LOADING, DispatchSolution, baseline_dcopf,
                    critical_lines, generator_ptdf, marginal_generators,
                    post_attack_dcopf, ptdf_rows)
from .exceptions import InfeasibleRedispatchError, ReductionError
from .network import InjectionModel, physical_flows
from .solver import (LinearProgram, MilpProgram, SolveResult, SolverConfig,
                     solve_lp, solve_milp)

logger = logging.getLogger(__name__)

DEFAULT_SIGMA = 1e-4
DEFAULT_LOAD_SHIFT = 0.1
ITERATION_CAP = 20
OVERFLOW_TOLERANCE = 1e-6
DISPATCH_TOLERANCE = 1e-5
COST_TOLERANCE = 1e-8
SATURATION = 0.99
MAX_ESCALATIONS = 3


@dataclass(frozen=True)
class BigMPolicy:
    """Big-M constants of the complementarity rows.

    Thermal rows use ``2 Pmax_k + max|PTDF_k| * total load``, generator rows
    ``max(2 (Pmax_g - Pmin_g), 1)`` and dual caps ``dual``; costs are
    normalized by the largest absolute cost first, so ``dual`` is relative to
    a unit cost. ``scale`` multiplies every constant.
    """
    dual: float = 1e3
    scale: float = 1.0

    def thermal(self, rating: float, ptdf_row: np.ndarray,
                total_load: float) -> float:
        return self.scale * (2.0 * rating +
                             float(np.max(np.abs(ptdf_row))) * total_load)

    def generator(self, p_min: float, p_max: float) -> float:
        return self.scale * max(2.0 * (p_max - p_min), 1.0)

    def dual_cap(self) -> float:
        return self.scale * self.dual

    def escalated(self) -> "BigMPolicy":
        return replace(self, scale=10.0 * self.scale)


@dataclass(frozen=True)
class AttackProblemSpec:
    """Parameters of one attack instance.

    ``flow_sign`` orients the target flow: +1 maximizes the flow in the
    branch direction, -1 against it. When None it is taken from the sign of
    the baseline flow.
    """
    target_line: int
    n1: float
    load_shift: float = DEFAULT_LOAD_SHIFT
    sigma: float = DEFAULT_SIGMA
    flow_sign: Optional[int] = None
    big_m: BigMPolicy = field(default_factory=BigMPolicy)
    critical_threshold: float = CRITICAL_LOADING
    max_iterations: int = ITERATION_CAP
    max_escalations: int = MAX_ESCALATIONS
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        if not math.isfinite(self.n1) or self.n1 < 0.0:
            raise ValueError("'n1' must be a non-negative number.")
        if not 0.0 < self.load_shift < 1.0:
            raise ValueError("'load_shift' must lie in the open interval (0, 1).")
        if not self.sigma > 0.0:
            raise ValueError("'sigma' must be positive.")
        if self.flow_sign not in (None, 1, -1):
            raise ValueError("'flow_sign' must be +1, -1 or None.")
        if self.big_m.dual <= 0.0 or self.big_m.scale <= 0.0:
            raise ValueError("Big-M constants must be positive.")
        if self.max_iterations < 1:
            raise ValueError("'max_iterations' must be at least 1.")


@dataclass
class ReductionState:
    """Retained lines (branch ids, Q) and generators (positions, R)."""
    critical: Set[int]
    marginal: Set[int]
    line_iterations: int = 0
    generator_iterations: int = 0

    def n_binaries(self) -> int:
        return 2 * len(self.critical) + 2 * len(self.marginal)

    def add_lines(self, ids) -> None:
        self.critical |= set(ids)

    def add_generators(self, positions) -> None:
        self.marginal |= set(positions)


@dataclass
class AttackResult:
    """Outcome of one method on one (target, N1) instance.

    ``objective`` is the oriented physical target flow in per-unit (absent
    when the method produced no bound). For the LP bounds ``upper_bound``
    holds the relaxation value and ``objective`` the lower bound.
    """
    method: str
    target_line: int
    n1: float
    status: str
    objective: Optional[float] = None
    upper_bound: Optional[float] = None
    rating: float = math.nan
    c: Optional[AttackVector] = None
    binaries_initial: int = 0
    binaries_final: int = 0
    iterations: int = 0
    solve_ms: float = 0.0
    converged: bool = False
    dispatch: Optional[np.ndarray] = None

    @property
    def overflow_ratio(self) -> Optional[float]:
        if self.objective is None or not self.rating > 0.0:
            return None
        return self.objective / self.rating


@dataclass
class AttackFormulation:
    """MILP of one reduction state and the column ids needed to read it."""
    program: MilpProgram
    load_positions: List[int]
    c_cols: List[int]
    s_cols: List[int]
    generator_cols: Dict[int, int]
    flow_col: int
    line_flow_cols: Dict[int, int]
    lambda_col: int
    dual_caps: Dict[int, float]
    fixed_dispatch: np.ndarray
    flow_sign: int
    thermal_dual_cols: Dict[int, Tuple[int, int]] = field(default_factory=dict)
    generator_dual_cols: Dict[int, Tuple[int, int]] = field(default_factory=dict)
    cost_scale: float = 1.0

    def attack_state(self, x: np.ndarray, n_buses: int) -> np.ndarray:
        c = np.zeros(n_buses)
        c[self.load_positions] = x[self.c_cols]
        return c

    def dispatch(self, x: np.ndarray) -> np.ndarray:
        dispatch = self.fixed_dispatch.copy()
        for g, col in self.generator_cols.items():
            dispatch[g] = x[col]
        return dispatch

    def saturated_duals(self, x: np.ndarray) -> List[int]:
        return [col for col, cap in self.dual_caps.items()
                if x[col] >= SATURATION * cap]

    def operator_solution(self, x: np.ndarray, case: GridCase,
                          model: InjectionModel) -> DispatchSolution:
        """The operator's dispatch and duals at a MILP point, on the cyber
        loads and in the units of the case costs.

        Rows absent from the reduced program carry zero duals, so the KKT
        residuals are only meaningful for the unreduced program.
        """
        c = self.attack_state(x, case.n_buses())
        dispatch = self.dispatch(x)
        loads = case.get_loads() - model.get_h_inj() @ c
        f_plus, f_minus = np.zeros(case.n_branches()), np.zeros(case.n_branches())
        for k, (plus, minus) in self.thermal_dual_cols.items():
            f_plus[k], f_minus[k] = x[plus], x[minus]
        alpha_plus = np.zeros(case.n_generators())
        alpha_minus = np.zeros(case.n_generators())
        for g, (plus, minus) in self.generator_dual_cols.items():
            alpha_plus[g], alpha_minus[g] = x[plus], x[minus]
        costs = np.array([g.cost_linear for g in case.get_generators()])
        scale = self.cost_scale
        return DispatchSolution(
            dispatch=dispatch, cost=float(costs @ dispatch),
            lam=scale * float(x[self.lambda_col]),
            f_plus=scale * f_plus, f_minus=scale * f_minus,
            alpha_plus=scale * alpha_plus, alpha_minus=scale * alpha_minus,
            flows=_cyber_flows(case, model, dispatch, c), loads=loads)


def _oriented(case: GridCase, model: InjectionModel, spec: AttackProblemSpec,
              baseline: Optional[DispatchSolution]
              ) -> Tuple[AttackProblemSpec, DispatchSolution]:
    model.branch_index(spec.target_line)
    if baseline is None:
        baseline = baseline_dcopf(case, model, spec.solver)
    if spec.flow_sign is None:
        flow = baseline.flows[model.branch_index(spec.target_line)]
        spec = replace(spec, flow_sign=1 if flow >= 0.0 else -1)
    return spec, baseline


def _cost_scale(case: GridCase) -> float:
    costs = np.array([g.cost_linear for g in case.get_generators()])
    largest = float(np.max(np.abs(costs), initial=0.0))
    return largest if largest > 0.0 else 1.0


def _normalized_costs(case: GridCase) -> np.ndarray:
    costs = np.array([g.cost_linear for g in case.get_generators()])
    return costs / _cost_scale(case)


def build_attack_milp(case: GridCase, model: InjectionModel,
                      spec: AttackProblemSpec, state: ReductionState,
                      baseline: DispatchSolution = None) -> AttackFormulation:
    """Assembles the single-level attack MILP for a reduction state.

    Generators outside ``state.marginal`` are fixed at the baseline dispatch
    and thermal rows exist only for lines in ``state.critical``. The program
    has ``2 |Q| + 2 |R|`` binaries.

    Parameters
    ----------
    case : GridCase
    model : InjectionModel
    spec : AttackProblemSpec
    state : ReductionState
    baseline : DispatchSolution, optional
        Baseline DCOPF; solved when omitted.

    Return
    ------
    AttackFormulation
        ``program`` is the MilpProgram; the other fields map its columns.
    """
    if not state.critical or not state.marginal:
        raise ReductionError("The reduced attack MILP needs at least one "
                             "retained line and one retained generator.")
    spec, baseline = _oriented(case, model, spec, baseline)

    gens = case.get_generators()
    branches = case.get_branches()
    loads = case.get_loads()
    total_load = float(np.abs(loads).sum())
    h_inj = model.get_h_inj().tocsr()
    bus_index = {bus.id: i for i, bus in enumerate(case.get_buses())}
    load_positions = [bus_index[b] for b in load_bus_ids(case)]
    lines = sorted(model.branch_index(k) for k in state.critical)
    retained = sorted(state.marginal)
    if retained[0] < 0 or retained[-1] >= len(gens):
        raise ReductionError(f"Generator positions {retained} are out of range.")
    fixed = [g for g in range(len(gens)) if g not in state.marginal]
    costs = _normalized_costs(case)
    policy = spec.big_m

    target = model.branch_index(spec.target_line)
    target_row = ptdf_rows(model, [target])[0]
    line_rows = ptdf_rows(model, lines)
    gen_sensitivity = generator_ptdf(model, [target] + lines)
    target_gen, line_gen = gen_sensitivity[0], gen_sensitivity[1:]
    fixed_dispatch = baseline.dispatch.copy()

    lp = LinearProgram(sense="max", name="fdi_attack")
    n1 = spec.n1
    c_cols = [lp.add_variable(f"c_{case.get_buses()[i].id}", -n1, n1)
              for i in load_positions]
    s_cols = [lp.add_variable(f"s_{case.get_buses()[i].id}", 0.0, n1)
              for i in load_positions]
    gen_cols = {g: lp.add_variable(f"P_G{g}", gens[g].p_min, gens[g].p_max)
                for g in retained}
    flow_col = lp.add_variable("P_target", -math.inf, math.inf)
    flow_cols = {k: lp.add_variable(f"f_{branches[k].id}", -branches[k].rating,
                                    branches[k].rating)
                 for k in lines}
    lambda_col = lp.add_variable("lambda", -math.inf, math.inf)
    f_plus = {k: lp.add_variable(f"F_plus_{branches[k].id}") for k in lines}
    f_minus = {k: lp.add_variable(f"F_minus_{branches[k].id}") for k in lines}
    a_plus = {g: lp.add_variable(f"alpha_plus_{g}") for g in retained}
    a_minus = {g: lp.add_variable(f"alpha_minus_{g}") for g in retained}
    d_f_plus = {k: lp.add_variable(f"d_F_plus_{branches[k].id}", 0.0, 1.0)
                for k in lines}
    d_f_minus = {k: lp.add_variable(f"d_F_minus_{branches[k].id}", 0.0, 1.0)
                 for k in lines}
    d_a_plus = {g: lp.add_variable(f"d_alpha_plus_{g}", 0.0, 1.0)
                for g in retained}
    d_a_minus = {g: lp.add_variable(f"d_alpha_minus_{g}", 0.0, 1.0)
                 for g in retained}

    # objective: oriented target flow minus the l1 penalty
    objective = {flow_col: float(spec.flow_sign)}
    objective.update({col: -spec.sigma for col in s_cols})
    lp.set_objective(objective, sense="max")

    # physical flow of the target line under the (partly fixed) dispatch
    fixed_part = float(sum(target_gen[g] * fixed_dispatch[g] for g in fixed))
    row = {flow_col: 1.0}
    row.update({gen_cols[g]: -target_gen[g] for g in retained})
    lp.add_constraint(row, "=", fixed_part - float(target_row @ loads),
                      name="target_flow")

    # load-shift box on every bus the perturbation can reach
    sub = h_inj[:, load_positions].tocsr()
    for i in range(case.n_buses()):
        start, end = sub.indptr[i], sub.indptr[i + 1]
        if start == end:
            continue
        row = {c_cols[j]: v for j, v in zip(sub.indices[start:end],
                                            sub.data[start:end])}
        limit = spec.load_shift * abs(loads[i])
        if limit == 0.0:
            lp.add_constraint(row, "=", 0.0, name=f"shift_{i}")
        else:
            lp.add_constraint(row, "<=", limit, name=f"shift_max_{i}")
            lp.add_constraint(row, ">=", -limit, name=f"shift_min_{i}")

    # l1 budget through s >= |c|
    for c_col, s_col in zip(c_cols, s_cols):
        lp.add_constraint({c_col: 1.0, s_col: -1.0}, "<=", 0.0)
        lp.add_constraint({c_col: -1.0, s_col: -1.0}, "<=", 0.0)
    if s_cols:
        lp.add_constraint({col: 1.0 for col in s_cols}, "<=", n1, name="l1_budget")

    # operator: balance and retained thermal rows on the cyber loads
    lp.add_constraint({gen_cols[g]: 1.0 for g in retained}, "=",
                      float(loads.sum() - sum(fixed_dispatch[g] for g in fixed)),
                      name="balance")
    for row_index, k in enumerate(lines):
        shift = h_inj @ line_rows[row_index]
        row = {flow_cols[k]: 1.0}
        row.update({gen_cols[g]: -line_gen[row_index][g] for g in retained})
        for j, col in zip(load_positions, c_cols):
            if shift[j] != 0.0:
                row[col] = row.get(col, 0.0) - float(shift[j])
        constant = float(sum(line_gen[row_index][g] * fixed_dispatch[g]
                             for g in fixed)) - float(line_rows[row_index] @ loads)
        lp.add_constraint(row, "=", constant, name=f"flow_{branches[k].id}")

    # stationarity of the operator's Lagrangian
    for g in retained:
        row = {lambda_col: 1.0, a_plus[g]: 1.0, a_minus[g]: -1.0}
        for row_index, k in enumerate(lines):
            weight = float(line_gen[row_index][g])
            if weight != 0.0:
                row[f_plus[k]] = weight
                row[f_minus[k]] = -weight
        lp.add_constraint(row, "=", -float(costs[g]), name=f"stationarity_{g}")

    # complementarity through big-M rows
    caps: Dict[int, float] = {}
    dual_cap = policy.dual_cap()
    for row_index, k in enumerate(lines):
        rating = branches[k].rating
        m_row = policy.thermal(rating, line_rows[row_index], total_load)
        if not (math.isfinite(m_row) and m_row > 0.0):
            raise ReductionError(f"No valid big-M for line {branches[k].id}.")
        lp.add_constraint({f_plus[k]: 1.0, d_f_plus[k]: -dual_cap}, "<=", 0.0)
        lp.add_constraint({flow_cols[k]: -1.0, d_f_plus[k]: m_row}, "<=",
                          m_row - rating)
        lp.add_constraint({f_minus[k]: 1.0, d_f_minus[k]: -dual_cap}, "<=", 0.0)
        lp.add_constraint({flow_cols[k]: 1.0, d_f_minus[k]: m_row}, "<=",
                          m_row - rating)
        caps[f_plus[k]] = caps[f_minus[k]] = dual_cap
    for g in retained:
        gen = gens[g]
        m_row = policy.generator(gen.p_min, gen.p_max)
        lp.add_constraint({a_plus[g]: 1.0, d_a_plus[g]: -dual_cap}, "<=", 0.0)
        lp.add_constraint({gen_cols[g]: -1.0, d_a_plus[g]: m_row}, "<=",
                          m_row - gen.p_max)
        lp.add_constraint({a_minus[g]: 1.0, d_a_minus[g]: -dual_cap}, "<=", 0.0)
        lp.add_constraint({gen_cols[g]: 1.0, d_a_minus[g]: m_row}, "<=",
                          m_row + gen.p_min)
        caps[a_plus[g]] = caps[a_minus[g]] = dual_cap

    binaries = list(d_f_plus.values()) + list(d_f_minus.values()) + \
        list(d_a_plus.values()) + list(d_a_minus.values())
    program = MilpProgram(lp, binaries)
    logger.debug("Attack MILP on line %d: %d columns, %d rows, %d binaries.",
                 spec.target_line, lp.n_variables(), lp.n_constraints(),
                 program.n_binaries())
    return AttackFormulation(program=program, load_positions=load_positions,
                             c_cols=c_cols, s_cols=s_cols,
                             generator_cols=gen_cols, flow_col=flow_col,
                             line_flow_cols=flow_cols, lambda_col=lambda_col,
                             dual_caps=caps, fixed_dispatch=fixed_dispatch,
                             flow_sign=spec.flow_sign,
                             thermal_dual_cols={k: (f_plus[k], f_minus[k])
                                                for k in lines},
                             generator_dual_cols={g: (a_plus[g], a_minus[g])
                                                  for g in retained},
                             cost_scale=_cost_scale(case))


def _solve_reduced(case: GridCase, model: InjectionModel,
                   spec: AttackProblemSpec, state: ReductionState,
                   baseline: DispatchSolution
                   ) -> Tuple[SolveResult, AttackFormulation, float]:
    """Solves the reduced MILP, raising every M tenfold while an optimal
    dual sits at its cap or the program is infeasible.

    c = 0 with the baseline dispatch and duals is always a KKT point, so an
    infeasible program means the dual caps cut it off.
    """
    policy = spec.big_m
    elapsed = 0.0
    for escalation in range(spec.max_escalations + 1):
        formulation = build_attack_milp(case, model, replace(spec, big_m=policy),
                                        state, baseline)
        result = solve_milp(formulation.program, spec.solver)
        elapsed += result.solve_ms
        if result.status == "infeasible" and escalation < spec.max_escalations:
            logger.info("Attack MILP infeasible with dual cap %g; re-solving "
                        "with M x10.", policy.dual_cap())
            policy = policy.escalated()
            continue
        if result.x is None:
            break
        saturated = formulation.saturated_duals(result.x)
        if not saturated:
            break
        if escalation == spec.max_escalations:
            logger.warning("Big-M still saturated on %d dual(s) after %d "
                           "escalations (line %d, N1 = %g).", len(saturated),
                           escalation, spec.target_line, spec.n1)
            break
        logger.info("Big-M saturated on %d dual(s); re-solving with M x10.",
                    len(saturated))
        policy = policy.escalated()
    return result, formulation, elapsed


def _cyber_flows(case: GridCase, model: InjectionModel, dispatch: np.ndarray,
                 c: np.ndarray) -> np.ndarray:
    cyber = case.get_loads() - model.get_h_inj() @ c
    return model.branch_flows(model.get_gen_incidence() @ dispatch - cyber)


def _overloaded(case: GridCase, model: InjectionModel, flows: np.ndarray,
                retained: Set[int]) -> List[int]:
    ratings = case.get_ratings()
    return [branch.id for branch, flow, rating in
            zip(case.get_branches(), flows, ratings)
            if branch.id not in retained and
            abs(flow) > rating + OVERFLOW_TOLERANCE]


def initial_state(case: GridCase, model: InjectionModel, spec: AttackProblemSpec,
                  baseline: DispatchSolution,
                  reduce_generators: bool) -> ReductionState:
    """Critical lines (plus the target) and, when ``reduce_generators`` is
    set, the marginal generators of the baseline dispatch."""
    lines = set(critical_lines(case, baseline, spec.critical_threshold))
    lines.add(spec.target_line)
    if not reduce_generators:
        return ReductionState(critical=lines,
                              marginal=set(range(case.n_generators())))
    marginal = set(marginal_generators(case, baseline))
    if not marginal:
        gens = case.get_generators()
        widest = max(range(len(gens)), key=lambda g: (gens[g].p_max - gens[g].p_min, -g))
        logger.info("No marginal generator in the baseline; retaining "
                    "generator %d.", widest)
        marginal = {widest}
    return ReductionState(critical=lines, marginal=marginal)


def _result(method: str, case: GridCase, model: InjectionModel,
            spec: AttackProblemSpec, status: str, **values) -> AttackResult:
    rating = case.get_branches()[model.branch_index(spec.target_line)].rating
    return AttackResult(method=method, target_line=spec.target_line, n1=spec.n1,
                        status=status, rating=rating, **values)


def _vector(spec: AttackProblemSpec, c: np.ndarray) -> AttackVector:
    return AttackVector(c, spec.n1, spec.load_shift)


def solve_original(case: GridCase, model: InjectionModel, spec: AttackProblemSpec,
                   baseline: DispatchSolution = None) -> AttackResult:
    """Solves the unreduced MILP: every line and every generator retained."""
    spec, baseline = _oriented(case, model, spec, baseline)
    state = ReductionState(critical={b.id for b in case.get_branches()},
                           marginal=set(range(case.n_generators())))
    binaries = state.n_binaries()
    result, formulation, elapsed = _solve_reduced(case, model, spec, state,
                                                  baseline)
    if result.x is None:
        return _result("original", case, model, spec, result.status,
                       binaries_initial=binaries, binaries_final=binaries,
                       iterations=1, solve_ms=elapsed)
    x = result.x
    return _result("original", case, model, spec, result.status,
                   objective=spec.flow_sign * float(x[formulation.flow_col]),
                   c=_vector(spec, formulation.attack_state(x, case.n_buses())),
                   binaries_initial=binaries, binaries_final=binaries,
                   iterations=1, solve_ms=elapsed,
                   converged=result.is_optimal,
                   dispatch=formulation.dispatch(x))


def algorithm1(case: GridCase, model: InjectionModel, spec: AttackProblemSpec,
               baseline: DispatchSolution = None) -> AttackResult:
    """Exact solution by line reduction.

    Starts from the lines loaded above the critical threshold in the
    baseline, solves the reduced MILP and re-adds every line the attacked
    dispatch overloads in the cyber view, until none is left.

    Return
    ------
    AttackResult
        ``converged`` is False when the iteration cap stopped the loop.
    """
    spec, baseline = _oriented(case, model, spec, baseline)
    state = initial_state(case, model, spec, baseline, reduce_generators=False)
    initial = state.n_binaries()
    elapsed = 0.0

    for iteration in range(1, spec.max_iterations + 1):
        state.line_iterations = iteration
        result, formulation, ms = _solve_reduced(case, model, spec, state,
                                                 baseline)
        elapsed += ms
        if result.x is None or not result.is_optimal:
            return _result("A1", case, model, spec, result.status,
                           binaries_initial=initial,
                           binaries_final=state.n_binaries(),
                           iterations=iteration, solve_ms=elapsed)
        x = result.x
        c = formulation.attack_state(x, case.n_buses())
        dispatch = formulation.dispatch(x)
        violated = _overloaded(case, model, _cyber_flows(case, model, dispatch, c),
                               state.critical)
        logger.debug("A1 line %d, N1 = %g, iteration %d: |Q| = %d, %d new "
                     "overloaded line(s).", spec.target_line, spec.n1, iteration,
                     len(state.critical), len(violated))
        if not violated:
            return _result("A1", case, model, spec, "optimal",
                           objective=spec.flow_sign * float(x[formulation.flow_col]),
                           c=_vector(spec, c), binaries_initial=initial,
                           binaries_final=state.n_binaries(),
                           iterations=iteration, solve_ms=elapsed,
                           converged=True, dispatch=dispatch)
        state.add_lines(violated)

    logger.warning("A1 reached the iteration cap on line %d (N1 = %g).",
                   spec.target_line, spec.n1)
    return _result("A1", case, model, spec, "iteration-cap",
                   objective=spec.flow_sign * float(x[formulation.flow_col]),
                   c=_vector(spec, c), binaries_initial=initial,
                   binaries_final=state.n_binaries(),
                   iterations=spec.max_iterations, solve_ms=elapsed,
                   dispatch=dispatch)


def _dispatch_cost(case: GridCase, dispatch: np.ndarray) -> float:
    return float(sum(g.cost_linear * p for g, p in
                     zip(case.get_generators(), dispatch)))


def algorithm2(case: GridCase, model: InjectionModel, spec: AttackProblemSpec,
               baseline: DispatchSolution = None) -> AttackResult:
    """Lower bound by line and generator reduction.

    Only marginal generators stay free. Each answer is checked against the
    real post-attack DCOPF: generators dispatched differently join the
    retained set, then overloaded lines join as in ``algorithm1``. The
    reported value is the physical target flow under the real response, a
    feasible attack and hence a lower bound.
    """
    spec, baseline = _oriented(case, model, spec, baseline)
    state = initial_state(case, model, spec, baseline, reduce_generators=True)
    initial = state.n_binaries()
    elapsed = 0.0
    loads = case.get_loads()
    target = model.branch_index(spec.target_line)

    for iteration in range(1, spec.max_iterations + 1):
        result, formulation, ms = _solve_reduced(case, model, spec, state,
                                                 baseline)
        elapsed += ms
        if result.x is None or not result.is_optimal:
            return _result("A2", case, model, spec, result.status,
                           binaries_initial=initial,
                           binaries_final=state.n_binaries(),
                           iterations=iteration, solve_ms=elapsed)
        x = result.x
        c = formulation.attack_state(x, case.n_buses())
        dispatch = formulation.dispatch(x)
        try:
            response = post_attack_dcopf(case, model, c, spec.solver)
        except InfeasibleRedispatchError:
            return _result("A2", case, model, spec, "infeasible-redispatch",
                           c=_vector(spec, c), binaries_initial=initial,
                           binaries_final=state.n_binaries(),
                           iterations=iteration, solve_ms=elapsed)

        differing = [g for g in range(case.n_generators())
                     if abs(dispatch[g] - response.dispatch[g]) > DISPATCH_TOLERANCE]
        same_cost = abs(_dispatch_cost(case, dispatch) -
                        _dispatch_cost(case, response.dispatch)) <= COST_TOLERANCE
        grown = [g for g in differing if g not in state.marginal]
        if differing and not same_cost and grown:
            state.generator_iterations += 1
            state.add_generators(grown)
            logger.debug("A2 line %d, N1 = %g, iteration %d: %d generator(s) "
                         "added.", spec.target_line, spec.n1, iteration, len(grown))
            continue

        violated = _overloaded(case, model, _cyber_flows(case, model, dispatch, c),
                               state.critical)
        if violated:
            state.line_iterations += 1
            state.add_lines(violated)
            logger.debug("A2 line %d, N1 = %g, iteration %d: %d line(s) added.",
                         spec.target_line, spec.n1, iteration, len(violated))
            continue

        flow = physical_flows(model, response.dispatch, loads)[target]
        return _result("A2", case, model, spec, "optimal",
                       objective=spec.flow_sign * float(flow),
                       c=_vector(spec, c), binaries_initial=initial,
                       binaries_final=state.n_binaries(), iterations=iteration,
                       solve_ms=elapsed, converged=True,
                       dispatch=response.dispatch)

    logger.warning("A2 reached the iteration cap on line %d (N1 = %g).",
                   spec.target_line, spec.n1)
    flow = physical_flows(model, response.dispatch, loads)[target]
    return _result("A2", case, model, spec, "iteration-cap",
                   objective=spec.flow_sign * float(flow),
                   c=_vector(spec, c), binaries_initial=initial,
                   binaries_final=state.n_binaries(),
                   iterations=spec.max_iterations, solve_ms=elapsed,
                   dispatch=response.dispatch)


def build_bound_lp(case: GridCase, model: InjectionModel,
                   spec: AttackProblemSpec) -> Tuple[LinearProgram, List[int], List[int]]:
    """LP maximizing the oriented cyber-flow relief -PTDF_l H_inj c on the
    target line under the load-shift and l1 constraints only."""
    if spec.flow_sign is None:
        raise ValueError("'flow_sign' must be resolved before building the LP.")
    loads = case.get_loads()
    h_inj = model.get_h_inj().tocsr()
    bus_index = {bus.id: i for i, bus in enumerate(case.get_buses())}
    load_positions = [bus_index[b] for b in load_bus_ids(case)]
    target_row = ptdf_rows(model, [model.branch_index(spec.target_line)])[0]
    relief = -spec.flow_sign * (h_inj @ target_row)

    lp = LinearProgram(sense="max", name="flow_bound")
    c_cols = [lp.add_variable(f"c_{case.get_buses()[i].id}", -spec.n1, spec.n1)
              for i in load_positions]
    s_cols = [lp.add_variable(f"s_{case.get_buses()[i].id}", 0.0, spec.n1)
              for i in load_positions]
    lp.set_objective({col: float(relief[i])
                      for i, col in zip(load_positions, c_cols)}, sense="max")

    sub = h_inj[:, load_positions].tocsr()
    for i in range(case.n_buses()):
        start, end = sub.indptr[i], sub.indptr[i + 1]
        if start == end:
            continue
        row = {c_cols[j]: v for j, v in zip(sub.indices[start:end],
                                            sub.data[start:end])}
        limit = spec.load_shift * abs(loads[i])
        if limit == 0.0:
            lp.add_constraint(row, "=", 0.0, name=f"shift_{i}")
        else:
            lp.add_constraint(row, "<=", limit, name=f"shift_max_{i}")
            lp.add_constraint(row, ">=", -limit, name=f"shift_min_{i}")
    for c_col, s_col in zip(c_cols, s_cols):
        lp.add_constraint({c_col: 1.0, s_col: -1.0}, "<=", 0.0)
        lp.add_constraint({c_col: -1.0, s_col: -1.0}, "<=", 0.0)
    if s_cols:
        lp.add_constraint({col: 1.0 for col in s_cols}, "<=", spec.n1,
                          name="l1_budget")
    return lp, load_positions, c_cols


def algorithm3(case: GridCase, model: InjectionModel, spec: AttackProblemSpec,
               baseline: DispatchSolution = None) -> AttackResult:
    """Upper and lower bounds without modelling the operator.

    The upper bound is the rating plus the largest relief the attack can
    create on the cyber limit of the target. The lower bound is the physical
    target flow under the post-attack DCOPF for that attack; it is absent if
    the DCOPF is infeasible.

    Return
    ------
    AttackResult
        ``upper_bound`` carries the upper bound and ``objective`` the lower.
    """
    spec, baseline = _oriented(case, model, spec, baseline)
    target = model.branch_index(spec.target_line)
    rating = case.get_branches()[target].rating
    lp, load_positions, c_cols = build_bound_lp(case, model, spec)
    result = solve_lp(lp, spec.solver)
    if not result.is_optimal:
        return _result("A3", case, model, spec, result.status,
                       solve_ms=result.solve_ms, iterations=1)

    c = np.zeros(case.n_buses())
    c[load_positions] = result.x[c_cols]
    upper = rating + float(result.objective)
    try:
        response = post_attack_dcopf(case, model, c, spec.solver)
    except InfeasibleRedispatchError:
        return _result("A3", case, model, spec, "infeasible-redispatch",
                       upper_bound=upper, c=_vector(spec, c),
                       solve_ms=result.solve_ms, iterations=1)
    flow = physical_flows(model, response.dispatch, case.get_loads())[target]
    return _result("A3", case, model, spec, "optimal",
                   objective=spec.flow_sign * float(flow), upper_bound=upper,
                   c=_vector(spec, c), solve_ms=result.solve_ms,
                   iterations=1, converged=True, dispatch=response.dispatch)


@dataclass
class AttackVerification:
    """Consequences of an attack: the operator's redispatch, the flows the
    network really carries and the target overflow ratio."""
    target_line: int
    physical_flow: float
    overflow_ratio: float
    physical_flows: np.ndarray
    cyber_flows: np.ndarray
    dispatch: np.ndarray
    checks: AttackReport
    solution: DispatchSolution


def verify_attack(case: GridCase, model: InjectionModel, spec: AttackProblemSpec,
                  c) -> AttackVerification:
    """Replays an attack vector against the real operator.

    Raises InfeasibleRedispatchError when the post-attack DCOPF fails.
    """
    vector = c if isinstance(c, AttackVector) else \
        AttackVector(np.asarray(c, dtype=float), spec.n1, spec.load_shift)
    checks = check_attack(vector, case, model)
    if not checks.passed:
        logger.warning("Attack vector violates its constraints: %s",
                       "; ".join(checks.violations))
    solution = post_attack_dcopf(case, model, vector, spec.solver)
    flows = physical_flows(model, solution.dispatch, case.get_loads())
    target = model.branch_index(spec.target_line)
    rating = case.get_branches()[target].rating
    return AttackVerification(target_line=spec.target_line,
                              physical_flow=float(flows[target]),
                              overflow_ratio=abs(float(flows[target])) / rating,
                              physical_flows=flows, cyber_flows=solution.flows,
                              dispatch=solution.dispatch, checks=checks,
                              solution=solution)
