import json
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .case_io import GridCase
from .element import LABEL_WIDTH, banner
from .exceptions import DimensionMismatchError, InfeasibleRedispatchError
from .network import InjectionModel, physical_flows
from .solver import LinearProgram, SolveResult, SolverConfig, solve_lp

logger = logging.getLogger(__name__)

CRITICAL_LOADING = 0.9
MARGINAL_TOLERANCE = 1e-6


def ptdf_rows(model: InjectionModel, positions: Sequence[int] = None) -> np.ndarray:
    """PTDF rows of the given branch positions (all branches by default)."""
    if positions is None:
        positions = range(model.n_branches())
    positions = list(positions)
    if model.is_dense():
        return model.get_ptdf()[positions]
    if not positions:
        return np.zeros((0, model.n_buses()))
    return np.vstack([model.get_ptdf_row(k) for k in positions])


def generator_ptdf(model: InjectionModel, positions: Sequence[int] = None) -> np.ndarray:
    """Sensitivity of branch flows to generator outputs, PTDF G_B."""
    rows = ptdf_rows(model, positions)
    return np.asarray(model.get_gen_incidence().T @ rows.T).T


@dataclass
class DispatchSolution:
    """Optimal DCOPF dispatch with its dual variables.

    ``flows`` are the flows seen by the operator, i.e. computed on the loads
    the dispatch was solved for. ``lam`` is the price of the balance row;
    ``f_plus``/``f_minus`` belong to the upper/lower thermal rows and
    ``alpha_plus``/``alpha_minus`` to the upper/lower generator limits. All
    inequality duals are nonnegative and satisfy

        cost_g + lam + sum_k PTDF_kg (f_plus_k - f_minus_k)
               + alpha_plus_g - alpha_minus_g = 0.
    """
    dispatch: np.ndarray
    cost: float
    lam: float
    f_plus: np.ndarray
    f_minus: np.ndarray
    alpha_plus: np.ndarray
    alpha_minus: np.ndarray
    flows: np.ndarray
    loads: np.ndarray

    def stationarity_residual(self, case: GridCase, model: InjectionModel) -> float:
        costs = np.array([g.cost_linear for g in case.get_generators()])
        gradient = costs + self.lam + \
            generator_ptdf(model).T @ (self.f_plus - self.f_minus) + \
            self.alpha_plus - self.alpha_minus
        return float(np.max(np.abs(gradient), initial=0.0))

    def complementarity_residual(self, case: GridCase) -> float:
        ratings = case.get_ratings()
        gens = case.get_generators()
        p_min = np.array([g.p_min for g in gens])
        p_max = np.array([g.p_max for g in gens])
        products = np.concatenate([
            self.f_plus * (ratings - self.flows),
            self.f_minus * (ratings + self.flows),
            self.alpha_plus * (p_max - self.dispatch),
            self.alpha_minus * (self.dispatch - p_min)])
        return float(np.max(np.abs(products), initial=0.0))

    def residuals(self, case: GridCase, model: InjectionModel) -> Dict[str, float]:
        """Primal, dual and complementarity residuals of the solution."""
        gens = case.get_generators()
        p_min = np.array([g.p_min for g in gens])
        p_max = np.array([g.p_max for g in gens])
        duals = np.concatenate([self.f_plus, self.f_minus, self.alpha_plus,
                                self.alpha_minus])
        return {
            "balance": abs(float(self.dispatch.sum() - self.loads.sum())),
            "generator_limits": float(max(np.max(p_min - self.dispatch, initial=0.0),
                                          np.max(self.dispatch - p_max, initial=0.0))),
            "thermal_limits": float(np.max(np.abs(self.flows) - case.get_ratings(),
                                           initial=0.0)),
            "dual_sign": float(np.max(-duals, initial=0.0)),
            "stationarity": self.stationarity_residual(case, model),
            "complementarity": self.complementarity_residual(case),
        }

    def to_json(self) -> str:
        document = {"dispatch": self.dispatch.tolist(), "cost": self.cost,
                    "lambda": self.lam, "F_plus": self.f_plus.tolist(),
                    "F_minus": self.f_minus.tolist(),
                    "alpha_plus": self.alpha_plus.tolist(),
                    "alpha_minus": self.alpha_minus.tolist(),
                    "flows": self.flows.tolist(), "loads": self.loads.tolist()}
        return json.dumps(document, indent=2)

    def __str__(self) -> str:
        binding = int(np.count_nonzero(self.f_plus + self.f_minus > 1e-9))
        rows = [("COST", f"{self.cost:.6f}"),
                ("LAMBDA", f"{self.lam:.6f}"),
                ("TOTAL DISPATCH", f"{self.dispatch.sum():.6f} pu"),
                ("BINDING THERMAL ROWS", binding),
                (None, ""),
                (None, "GENERATOR".ljust(LABEL_WIDTH) + "OUTPUT (pu)")]
        rows.extend((None, f"G{g}".ljust(LABEL_WIDTH) + f"{value:.6f}")
                    for g, value in enumerate(self.dispatch))
        return banner("DCOPF DISPATCH", rows)

    def get_info(self) -> None:
        print(self.__str__())


def build_dcopf(case: GridCase, model: InjectionModel,
                loads: np.ndarray) -> LinearProgram:
    """Builds the PTDF-form DCOPF for the given bus loads.

    Parameters
    ----------
    case : GridCase
    model : InjectionModel
    loads : numpy.ndarray
        Per-unit bus loads (length n_b), actual or as seen by the operator.

    Return
    ------
    LinearProgram
        Columns are the generator outputs. Row 0 is the balance equality,
        rows 1..n_br the upper thermal rows and the next n_br rows the lower
        thermal rows, both in branch order.
    """
    loads = np.asarray(loads, dtype=float)
    if loads.shape != (case.n_buses(),):
        raise DimensionMismatchError(
            f"Loads have shape {loads.shape}, expected ({case.n_buses()},).")

    lp = LinearProgram(sense="min", name="dcopf")
    gens = case.get_generators()
    for g, gen in enumerate(gens):
        lp.add_variable(f"P_G{g}", gen.p_min, gen.p_max, gen.cost_linear)
    lp.set_objective({g: gen.cost_linear for g, gen in enumerate(gens)},
                     offset=sum(gen.cost_constant for gen in gens))

    lp.add_constraint({g: 1.0 for g in range(len(gens))}, "=",
                      float(loads.sum()), name="balance")

    rows = ptdf_rows(model)
    sensitivity = generator_ptdf(model)
    shifted = rows @ loads
    for k, branch in enumerate(case.get_branches()):
        lp.add_constraint(dict(enumerate(sensitivity[k])), "<=",
                          branch.rating + shifted[k], name=f"flow_max_{branch.id}")
    for k, branch in enumerate(case.get_branches()):
        lp.add_constraint(dict(enumerate(sensitivity[k])), ">=",
                          -branch.rating + shifted[k], name=f"flow_min_{branch.id}")
    return lp


def _dispatch_solution(case: GridCase, model: InjectionModel, loads: np.ndarray,
                       result: SolveResult) -> DispatchSolution:
    n_br = case.n_branches()
    duals = result.duals
    reduced = result.reduced_costs
    dispatch = np.asarray(result.x, dtype=float)
    injection = model.get_gen_incidence() @ dispatch - loads
    return DispatchSolution(
        dispatch=dispatch, cost=float(result.objective),
        lam=float(-duals[0]),
        f_plus=np.maximum(-duals[1:1 + n_br], 0.0),
        f_minus=np.maximum(duals[1 + n_br:1 + 2 * n_br], 0.0),
        alpha_plus=np.maximum(-reduced, 0.0),
        alpha_minus=np.maximum(reduced, 0.0),
        flows=model.branch_flows(injection), loads=loads.copy())


def solve_dcopf(case: GridCase, model: InjectionModel, loads: np.ndarray,
                config: SolverConfig = None) -> DispatchSolution:
    """Solves the DCOPF on ``loads``; raises InfeasibleRedispatchError when no
    optimal dispatch exists."""
    loads = np.asarray(loads, dtype=float)
    result = solve_lp(build_dcopf(case, model, loads), config)
    if not result.is_optimal:
        raise InfeasibleRedispatchError(
            f"DCOPF of '{case.get_name()}' ended with status '{result.status}'.",
            status=result.status)
    return _dispatch_solution(case, model, loads, result)


def baseline_dcopf(case: GridCase, model: InjectionModel,
                   config: SolverConfig = None) -> DispatchSolution:
    return solve_dcopf(case, model, case.get_loads(), config)


def post_attack_dcopf(case: GridCase, model: InjectionModel, c,
                      config: SolverConfig = None) -> DispatchSolution:
    """DCOPF the operator runs on the cyber loads P_D - H_inj c.

    Parameters
    ----------
    case : GridCase
    model : InjectionModel
    c : AttackVector or numpy.ndarray
        State perturbation of the attack.

    Return
    ------
    DispatchSolution
        Flows are cyber flows; use ``physical_flows(model, dispatch,
        case.get_loads())`` for what the network actually carries.
    """
    vector = c.get_c() if hasattr(c, "get_c") else np.asarray(c, dtype=float)
    if vector.shape != (case.n_buses(),):
        raise DimensionMismatchError(
            f"Attack vector has shape {vector.shape}, expected "
            f"({case.n_buses()},).")
    loads = case.get_loads() - model.get_h_inj() @ vector
    try:
        return solve_dcopf(case, model, loads, config)
    except InfeasibleRedispatchError as error:
        logger.warning("Post-attack DCOPF failed: %s", error)
        raise


def dispatch_physical_flows(case: GridCase, model: InjectionModel,
                            solution: DispatchSolution) -> np.ndarray:
    """Flows the dispatch produces on the true loads."""
    return physical_flows(model, solution.dispatch, case.get_loads())


def critical_lines(case: GridCase, solution: DispatchSolution,
                   threshold: float = CRITICAL_LOADING) -> List[int]:
    """Ids of branches loaded strictly above ``threshold`` of their rating."""
    ratings = case.get_ratings()
    return [branch.id for branch, flow, rating in
            zip(case.get_branches(), solution.flows, ratings)
            if abs(flow) > threshold * rating]


def marginal_generators(case: GridCase, solution: DispatchSolution,
                        tolerance: float = MARGINAL_TOLERANCE) -> List[int]:
    """Positions of generators strictly between their limits."""
    return [g for g, (gen, value) in
            enumerate(zip(case.get_generators(), solution.dispatch))
            if gen.p_min + tolerance < value < gen.p_max - tolerance]
