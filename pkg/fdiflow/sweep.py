import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from typing import Dict, List, Tuple

from tqdm.auto import tqdm

from .attack_model import build_subgraph
from .attack_opt import (AttackProblemSpec, AttackResult, algorithm1,
                         algorithm2, algorithm3, solve_original)
from .case_io import GridCase, load_case
from .config import SweepConfig
from .dcopf import DispatchSolution, baseline_dcopf, critical_lines
from .exceptions import ConfigError, FdiflowError
from .network import InjectionModel, build_injection_model
from .report import BoundsReport, emit_plot_data
from .solver import (SolverConfig, backend_by_name, register_external_backend,
                     reset_backend)
from .state_estimation import (apply_attack, bad_data_test,
                               simulate_measurements, wls_estimate)

logger = logging.getLogger(__name__)

METHODS = {"original": solve_original, "A1": algorithm1,
           "A2": algorithm2, "A3": algorithm3}
REPORT_CSV = "report.csv"
REPORT_JSON = "report.json"

# -----------------------------------------------------------------------------
# Worker state, set once per process by _initialize.
# -----------------------------------------------------------------------------
_case: GridCase = None
_model: InjectionModel = None
_baseline: DispatchSolution = None
_config: SweepConfig = None


def _activate_backend(name: str) -> None:
    if name == "native":
        reset_backend()
    else:
        register_external_backend(backend_by_name(name))


def _initialize(case: GridCase, config: SweepConfig) -> None:
    global _case, _model, _baseline, _config
    _activate_backend(config.backend)
    _case = case
    _config = config
    _model = build_injection_model(case)
    _baseline = baseline_dcopf(case, _model, _solver_config(config))


def _solver_config(config: SweepConfig) -> SolverConfig:
    return SolverConfig(gap_tolerance=config.gap_tolerance,
                        node_limit=config.node_limit,
                        time_limit=config.time_limit)


def _annotations(result: AttackResult) -> dict:
    """Attacker subgraph size and bad-data verdict of the attacked
    measurements for results that carry an attack vector."""
    if result.c is None or result.c.l0() == 0:
        return {"subgraph_buses": 0, "subgraph_branches": 0,
                "bad_data_passed": None}
    subgraph = build_subgraph(result.c, _case, _model)
    buses, branches = subgraph.size()
    measurements = simulate_measurements(_model, _baseline.dispatch,
                                         _case.get_loads(), _config.noise_stddev,
                                         _config.seed)
    attacked = apply_attack(measurements, result.c)
    verdict = bad_data_test(wls_estimate(attacked), attacked, _config.alpha)
    return {"subgraph_buses": buses, "subgraph_branches": branches,
            "bad_data_passed": bool(verdict.passed),
            "bad_data_objective": verdict.objective}


def _failed(method: str, target: int, n1: float, error: Exception) -> AttackResult:
    rating = _case.get_branches()[_model.branch_index(target)].rating
    logger.warning("%s failed on line %d (N1 = %g): %s", method, target, n1, error)
    return AttackResult(method=method, target_line=target, n1=n1,
                        status="error", rating=rating)


def run_instance(target: int, n1: float) -> List[Tuple[AttackResult, dict]]:
    """Runs every configured method on one (target, N1) instance."""
    spec = AttackProblemSpec(target_line=target, n1=n1,
                             load_shift=_config.load_shift,
                             sigma=_config.sigma,
                             critical_threshold=_config.critical_threshold,
                             solver=_solver_config(_config))
    outcome = []
    for method in _config.algorithms:
        try:
            result = METHODS[method](_case, _model, spec, _baseline)
            annotations = _annotations(result)
        except FdiflowError as error:
            result, annotations = _failed(method, target, n1, error), {}
        logger.info("Line %d, N1 = %g, %s: status %s, objective %s, "
                    "%d iteration(s).", target, n1, method, result.status,
                    result.objective, result.iterations)
        outcome.append((result, annotations))
    return outcome


def sweep_targets(case: GridCase, config: SweepConfig,
                  baseline: DispatchSolution) -> List[int]:
    """Target line ids: the baseline critical lines or the configured list."""
    if config.targets == "critical":
        targets = critical_lines(case, baseline, config.critical_threshold)
        logger.info("Detected %d critical line(s): %s", len(targets), targets)
        return targets
    known = {branch.id for branch in case.get_branches()}
    unknown = [t for t in config.targets if t not in known]
    if unknown:
        raise ConfigError(f"Unknown target line id(s) {unknown}.",
                          {"sweep.targets": str(unknown)})
    return sorted(set(config.targets))


def run_sweep(config: SweepConfig) -> BoundsReport:
    """Runs the configured methods on every (target, N1) instance and writes
    the CSV and JSON reports (and plot data) to the output directory.

    Parameters
    ----------
    config : SweepConfig

    Return
    ------
    BoundsReport
    """
    config.validate()
    case = load_case(config.case_path, default_rating=config.default_rating)
    _initialize(case, config)
    targets = sweep_targets(case, config, _baseline)
    instances = sorted((target, n1) for target in targets
                       for n1 in config.n1_grid())
    logger.info("Sweeping %d instance(s) with %s on %d worker(s).",
                len(instances), ", ".join(config.algorithms), config.parallelism)

    report = BoundsReport(case.get_name(), [bus.id for bus in case.get_buses()])
    outcomes: Dict[Tuple[int, float], list] = {}
    if config.parallelism == 1 or len(instances) <= 1:
        for target, n1 in tqdm(instances, desc="Progress: ", ascii=True,
                               colour="green"):
            outcomes[(target, n1)] = run_instance(target, n1)
    else:
        with ProcessPoolExecutor(max_workers=config.parallelism,
                                 initializer=_initialize,
                                 initargs=(case, config)) as executor:
            futures = {executor.submit(run_instance, target, n1): (target, n1)
                       for target, n1 in instances}
            for future in tqdm(as_completed(futures), total=len(futures),
                               desc="Progress: ", ascii=True, colour="green"):
                outcomes[futures[future]] = future.result()

    for key in instances:
        for result, annotations in outcomes[key]:
            report.add(result, **annotations)

    os.makedirs(config.output_dir, exist_ok=True)
    report.to_csv(os.path.join(config.output_dir, REPORT_CSV),
                  record_timings=config.record_timings)
    report.to_json(os.path.join(config.output_dir, REPORT_JSON))
    if config.plot_data:
        emit_plot_data(report, config.output_dir)
    violations = report.check_bounds()
    for violation in violations:
        logger.warning("Bound ordering violated: %s", violation)
    return report
