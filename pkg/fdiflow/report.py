import json
import logging
import os
from typing import Dict, List, Optional, Tuple

import matplotlib.pyplot as plt
import pandas as pd

from .attack_opt import AttackResult
from .element import banner

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["target_line", "n1", "method", "status", "objective_pu",
               "overflow_ratio", "binaries_initial", "binaries_final",
               "iterations", "solve_ms"]
PLOT_COLUMNS = ["n1", "A1", "A2", "A3_lb", "A3_ub", "pmax"]
METHOD_ORDER = ["original", "A1", "A2", "A3_lb", "A3_ub"]
BOUND_TOLERANCE = 1e-6
FLOAT_FORMAT = "%.10g"


class BoundsReport:
    """Results of an assessment sweep, one AttackResult per
    (target line, N1, method).

    Methods
    -------
    add
        Stores a result (replacing an earlier one for the same key).
    to_frame
        One row per (target, N1, method) with the LP bounds split into the
        'A3_lb' and 'A3_ub' methods.
    check_bounds
        Lists violations of the ordering A2 <= A1, A3_lb <= A1 <= A3_ub.
    to_csv, to_json
        Serialize the report.
    """

    def __init__(self, case_name: str = "", bus_ids: List[int] = None) -> None:
        self.__case_name: str = case_name
        self.__bus_ids: List[int] = list(bus_ids or [])
        self.__results: Dict[Tuple[int, float, str], AttackResult] = {}
        self.__annotations: Dict[Tuple[int, float, str], dict] = {}

    def get_case_name(self) -> str:
        return self.__case_name

    def add(self, result: AttackResult, **annotations) -> None:
        key = (result.target_line, result.n1, result.method)
        self.__results[key] = result
        if annotations:
            self.__annotations[key] = annotations

    def get(self, target: int, n1: float, method: str) -> Optional[AttackResult]:
        return self.__results.get((target, n1, method))

    def get_results(self) -> List[AttackResult]:
        return [self.__results[key] for key in sorted(
            self.__results, key=lambda k: (k[0], k[1], METHOD_ORDER.index(
                "A3_lb" if k[2] == "A3" else k[2])))]

    def targets(self) -> List[int]:
        return sorted({key[0] for key in self.__results})

    def budgets(self, target: int = None) -> List[float]:
        return sorted({key[1] for key in self.__results
                       if target is None or key[0] == target})

    def __len__(self) -> int:
        return len(self.__results)

    def value(self, target: int, n1: float, method: str) -> Optional[float]:
        """Reported bound of a method name, 'A3_lb' and 'A3_ub' included."""
        if method in ("A3_lb", "A3_ub"):
            result = self.get(target, n1, "A3")
            if result is None:
                return None
            return result.objective if method == "A3_lb" else result.upper_bound
        result = self.get(target, n1, method)
        return None if result is None else result.objective

    def __rows(self, result: AttackResult, record_timings: bool) -> List[dict]:
        timing = round(result.solve_ms, 3) if record_timings else None
        base = {"target_line": result.target_line, "n1": result.n1,
                "status": result.status,
                "binaries_initial": result.binaries_initial,
                "binaries_final": result.binaries_final,
                "iterations": result.iterations, "solve_ms": timing}

        def ratio(value):
            if value is None or not result.rating > 0.0:
                return None
            return value / result.rating

        if result.method != "A3":
            return [{**base, "method": result.method,
                     "objective_pu": result.objective,
                     "overflow_ratio": ratio(result.objective)}]
        return [{**base, "method": "A3_lb", "objective_pu": result.objective,
                 "overflow_ratio": ratio(result.objective)},
                {**base, "method": "A3_ub", "objective_pu": result.upper_bound,
                 "overflow_ratio": ratio(result.upper_bound)}]

    def to_frame(self, record_timings: bool = False) -> pd.DataFrame:
        rows = []
        for result in self.get_results():
            rows.extend(self.__rows(result, record_timings))
        return pd.DataFrame(rows, columns=CSV_COLUMNS)

    def to_csv(self, path: str, record_timings: bool = False) -> None:
        """Writes the CSV report. Timings are left empty unless
        ``record_timings`` is set, so reruns produce identical files."""
        self.to_frame(record_timings).to_csv(path, index=False,
                                             float_format=FLOAT_FORMAT)

    def to_json(self, path: str = None) -> str:
        records = []
        for result in self.get_results():
            key = (result.target_line, result.n1, result.method)
            c = None
            if result.c is not None:
                values = result.c.get_c()
                ids = self.__bus_ids or list(range(1, values.size + 1))
                c = {str(bus): float(v) for bus, v in zip(ids, values) if v != 0.0}
            records.append({
                "target_line": result.target_line, "n1": result.n1,
                "method": result.method, "status": result.status,
                "objective_pu": result.objective,
                "upper_bound_pu": result.upper_bound,
                "rating_pu": result.rating,
                "converged": result.converged,
                "binaries_initial": result.binaries_initial,
                "binaries_final": result.binaries_final,
                "iterations": result.iterations,
                "c": c,
                "dispatch": None if result.dispatch is None
                else [float(p) for p in result.dispatch],
                **self.__annotations.get(key, {})})
        text = json.dumps({"case": self.__case_name, "results": records},
                          indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as handle:
                handle.write(text)
        return text

    def check_bounds(self, tolerance: float = BOUND_TOLERANCE) -> List[str]:
        """Returns a description of every broken bound ordering."""
        violations = []
        for target, n1 in sorted({(k[0], k[1]) for k in self.__results}):
            reference = self.get(target, n1, "A1") or \
                self.get(target, n1, "original")
            exact = reference.objective \
                if reference is not None and reference.converged else None
            lower2 = self.value(target, n1, "A2")
            lower3 = self.value(target, n1, "A3_lb")
            upper3 = self.value(target, n1, "A3_ub")
            if exact is not None and lower2 is not None and \
                    lower2 > exact + tolerance:
                violations.append(f"line {target}, N1 {n1}: A2 {lower2:.8g} "
                                  f"exceeds A1 {exact:.8g}")
            if exact is not None and lower3 is not None and \
                    lower3 > exact + tolerance:
                violations.append(f"line {target}, N1 {n1}: A3_lb {lower3:.8g} "
                                  f"exceeds A1 {exact:.8g}")
            if exact is not None and upper3 is not None and \
                    exact > upper3 + 2 * tolerance:
                violations.append(f"line {target}, N1 {n1}: A1 {exact:.8g} "
                                  f"exceeds A3_ub {upper3:.8g}")
        return violations

    def plot_frame(self, target: int) -> pd.DataFrame:
        rows = []
        for n1 in self.budgets(target):
            rating = next(r.rating for k, r in self.__results.items()
                          if k[0] == target and k[1] == n1)
            row = {"n1": n1, "pmax": rating}
            for method in ("A1", "A2", "A3_lb", "A3_ub"):
                row[method] = self.value(target, n1, method)
            rows.append(row)
        return pd.DataFrame(rows, columns=PLOT_COLUMNS)

    def __str__(self) -> str:
        return banner("BOUNDS REPORT", [
            ("CASE", self.__case_name),
            ("TARGET LINES", self.targets()),
            ("BUDGETS", len(self.budgets())),
            ("RESULTS", len(self.__results)),
            ("BOUND VIOLATIONS", len(self.check_bounds()))])

    def get_info(self) -> None:
        print(self.__str__())


def emit_plot_data(report: BoundsReport, directory: str) -> List[str]:
    """Writes one plottable CSV per target line.

    Parameters
    ----------
    report : BoundsReport
    directory : str
        Output directory, created if missing.

    Return
    ------
    list
        Paths of the written files. An empty report yields a single
        header-only 'plot_data.csv'.
    """
    os.makedirs(directory, exist_ok=True)
    targets = report.targets()
    if not targets:
        path = os.path.join(directory, "plot_data.csv")
        pd.DataFrame(columns=PLOT_COLUMNS).to_csv(path, index=False)
        return [path]
    paths = []
    for target in targets:
        path = os.path.join(directory, f"plot_data_line_{target}.csv")
        report.plot_frame(target).to_csv(path, index=False,
                                         float_format=FLOAT_FORMAT)
        paths.append(path)
    logger.info("Wrote %d plot data file(s) to %s.", len(paths), directory)
    return paths


def plot_bounds(report: BoundsReport, target: int, path: str = None) -> None:
    """Plots the target flow bounds against N1 with the rating as reference.

    Parameters
    ----------
    report : BoundsReport
    target : int
        Branch id of the target line.
    path : str, optional
        When given the figure is saved there, otherwise it is shown.
    """
    frame = report.plot_frame(target)
    styles = {"A1": "o-", "A2": "s--", "A3_lb": "v:", "A3_ub": "^:"}
    for method, style in styles.items():
        values = frame[method].astype(float)
        if values.notna().any():
            plt.plot(frame["n1"], values, style, label=method)
    plt.plot(frame["n1"], frame["pmax"], "k-", label="Pmax")
    plt.title(f"Line {target}")
    plt.xlabel("N1")
    plt.ylabel("Flow (pu)")
    plt.legend()
    if path is None:
        plt.show()
    else:
        plt.savefig(path)
        plt.close()
