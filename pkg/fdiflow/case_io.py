import json
import logging
import math
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .element import GridElement, banner
from .exceptions import (CaseSyntaxError, CaseValidationError,
                         UnsupportedFeatureError)

logger = logging.getLogger(__name__)

SUPPORTED_TABLES = ("baseMVA", "bus", "branch", "gen", "gencost")
METADATA_FIELDS = ("version",)
CASE_FORMAT = "fdiflow-case"

# MATPOWER column positions (0-based).
BUS_I, BUS_TYPE, PD = 0, 1, 2
F_BUS, T_BUS, BR_X, RATE_A, BR_STATUS = 0, 1, 3, 5, 10
GEN_BUS, GEN_STATUS, PMAX, PMIN = 0, 7, 8, 9
MODEL, NCOST, COST = 0, 3, 4

MIN_WIDTH = {"bus": 3, "branch": 6, "gen": 10, "gencost": 4}
REF_BUS_TYPE = 3
ISOLATED_BUS_TYPE = 4
POLYNOMIAL_COST = 2


@dataclass(frozen=True)
class Bus:
    """Bus record: ``type`` is one of 'load', 'non-load' or 'slack' and
    ``load`` is the active demand in per-unit."""
    id: int
    type: str
    load: float

    @property
    def is_load(self) -> bool:
        return self.load > 0.0


@dataclass(frozen=True)
class Branch:
    """Branch record. ``id`` is the 1-based row of the branch in the source
    table, so it stays stable when out-of-service rows are dropped."""
    id: int
    from_bus: int
    to_bus: int
    reactance: float
    rating: float
    status: int = 1


@dataclass(frozen=True)
class Generator:
    """Generator record with per-unit limits and a linear cost
    ``cost_linear * P + cost_constant`` (cost per per-unit MW)."""
    bus: int
    p_min: float
    p_max: float
    cost_linear: float
    cost_constant: float = 0.0


class RawCaseDocument:
    """Named numeric tables as read from a MATPOWER-style script, before any
    per-unit conversion or validation of the grid model."""

    def __init__(self, tables: Dict[str, np.ndarray], base_mva: float,
                 unsupported: List[str] = None) -> None:
        self.__tables: Dict[str, np.ndarray] = tables
        self.__base_mva: float = base_mva
        self.__unsupported: List[str] = unsupported or []

    def get_table(self, name: str) -> np.ndarray:
        return self.__tables[name]

    def get_base_mva(self) -> float:
        return self.__base_mva

    def get_unsupported(self) -> List[str]:
        return list(self.__unsupported)

    def validate(self) -> None:
        """Checks the table invariants: every required table present, widths
        consistent and large enough, all values finite."""
        if self.__unsupported:
            raise UnsupportedFeatureError(self.__unsupported)

        missing = [name for name in SUPPORTED_TABLES
                   if name != "baseMVA" and name not in self.__tables]
        if missing:
            raise CaseValidationError(
                "Missing case table(s): " + ", ".join(missing) + ".")

        if not math.isfinite(self.__base_mva) or self.__base_mva <= 0.0:
            raise CaseValidationError(
                f"baseMVA must be a positive finite number, got {self.__base_mva}.")

        for name, width in MIN_WIDTH.items():
            table = self.__tables[name]
            if table.shape[0] == 0:
                raise CaseValidationError(f"Table '{name}' has no rows.")
            if table.shape[1] < width:
                raise CaseValidationError(
                    f"Table '{name}' needs at least {width} columns, "
                    f"found {table.shape[1]}.")
            bad = np.argwhere(~np.isfinite(table))
            if bad.size:
                row, col = bad[0]
                raise CaseValidationError(
                    f"Table '{name}' row {row + 1} column {col + 1} is not finite.")

    def to_case(self, name: str = None,
                default_rating: Optional[float] = None) -> "GridCase":
        """Converts the raw tables into a validated, per-unit GridCase.

        Parameters
        ----------
        name : str, optional
            Name of the resulting case.
        default_rating : float, optional
            Rating in MW used for in-service branches whose RATE_A is 0
            (MATPOWER's "unlimited"). When omitted such branches are rejected.
        """
        self.validate()
        base = self.__base_mva
        bus_table = self.__tables["bus"]
        branch_table = self.__tables["branch"]
        gen_table = self.__tables["gen"]
        cost_table = self.__tables["gencost"]

        buses = []
        for row in bus_table:
            bus_type = int(row[BUS_TYPE])
            bus_id = int(row[BUS_I])
            if bus_type == ISOLATED_BUS_TYPE:
                raise CaseValidationError(
                    f"Bus {bus_id} is marked isolated (type 4); isolated buses "
                    "are not supported by the DC model.")
            load = row[PD] / base
            if bus_type == REF_BUS_TYPE:
                kind = "slack"
            elif load > 0.0:
                kind = "load"
            else:
                kind = "non-load"
            buses.append(Bus(id=bus_id, type=kind, load=load))

        branches = []
        for k, row in enumerate(branch_table):
            status = int(row[BR_STATUS]) if branch_table.shape[1] > BR_STATUS else 1
            if status <= 0:
                continue
            rating = row[RATE_A]
            if rating == 0.0 and default_rating is not None:
                rating = default_rating
            branches.append(Branch(id=k + 1, from_bus=int(row[F_BUS]),
                                   to_bus=int(row[T_BUS]),
                                   reactance=float(row[BR_X]),
                                   rating=rating / base, status=1))
        dropped = branch_table.shape[0] - len(branches)
        if dropped:
            logger.info("Dropped %d out-of-service branch(es).", dropped)

        if cost_table.shape[0] < gen_table.shape[0]:
            raise CaseValidationError(
                f"Table 'gencost' has {cost_table.shape[0]} rows but 'gen' has "
                f"{gen_table.shape[0]}; every generator needs a cost row.")

        generators = []
        for row, cost_row in zip(gen_table, cost_table):
            if int(row[GEN_STATUS]) <= 0:
                continue
            p_min, p_max = float(row[PMIN]), float(row[PMAX])
            linear, constant = _linearize_cost(cost_row, p_min, p_max)
            generators.append(Generator(bus=int(row[GEN_BUS]),
                                        p_min=p_min / base, p_max=p_max / base,
                                        cost_linear=linear * base,
                                        cost_constant=constant))

        return GridCase(base_mva=base, buses=buses, branches=branches,
                        generators=generators, name=name)


def _linearize_cost(cost_row: np.ndarray, p_min: float,
                    p_max: float) -> Tuple[float, float]:
    """Returns (slope, intercept) in MW units of the tangent to a MATPOWER
    polynomial cost at the midpoint of the generator range."""
    if int(cost_row[MODEL]) != POLYNOMIAL_COST:
        raise UnsupportedFeatureError(["gencost (piecewise-linear cost model)"])

    n_cost = int(cost_row[NCOST])
    coefficients = np.asarray(cost_row[COST:COST + n_cost], dtype=float)
    if coefficients.size < n_cost:
        raise CaseValidationError(
            f"gencost row declares {n_cost} coefficients but has "
            f"{coefficients.size}.")
    if n_cost == 0:
        return 0.0, 0.0

    midpoint = 0.5 * (p_min + p_max)
    value = float(np.polyval(coefficients, midpoint))
    slope = float(np.polyval(np.polyder(coefficients), midpoint)) \
        if n_cost > 1 else 0.0
    return slope, value - slope * midpoint


class GridCase(GridElement):
    """Validated DC network model in per-unit on the system base.

    Methods
    -------
    get_buses, get_branches, get_generators
        Return the immutable record tuples.
    get_loads
        Returns the per-unit active load vector in bus order.
    get_slack_bus
        Returns the id of the slack bus.
    get_bus_table, get_branch_table, get_generator_table
        Tabular views as pandas.DataFrame objects.
    get_info
        Prints the counts and totals of the case.
    """

    def __init__(self, base_mva: float, buses: List[Bus], branches: List[Branch],
                 generators: List[Generator], name: str = None) -> None:
        super().__init__(name or "Grid Case")
        self.__base_mva: float = float(base_mva)
        self.__buses: Tuple[Bus, ...] = tuple(buses)
        self.__branches: Tuple[Branch, ...] = tuple(branches)
        self.__generators: Tuple[Generator, ...] = tuple(generators)
        self.__validate()

    def __validate(self) -> None:
        ids = [bus.id for bus in self.__buses]
        if len(set(ids)) != len(ids):
            raise CaseValidationError("Bus ids are not unique.")

        slack = [bus.id for bus in self.__buses if bus.type == "slack"]
        if len(slack) != 1:
            raise CaseValidationError(
                f"Exactly one slack bus is required, found {len(slack)}: {slack}.")

        known = set(ids)
        for branch in self.__branches:
            for end in (branch.from_bus, branch.to_bus):
                if end not in known:
                    raise CaseValidationError(
                        f"Branch row {branch.id} references bus {end}, which "
                        "does not exist.")
            if not branch.reactance > 0.0:
                raise CaseValidationError(
                    f"Branch row {branch.id} has non-positive reactance "
                    f"{branch.reactance}.")
            if not branch.rating > 0.0:
                raise CaseValidationError(
                    f"Branch row {branch.id} has no positive thermal limit "
                    "(RATE_A); pass 'default_rating' to accept unrated branches.")

        if not self.__generators:
            raise CaseValidationError("The case has no in-service generator.")
        for k, gen in enumerate(self.__generators):
            if gen.bus not in known:
                raise CaseValidationError(
                    f"Generator {k + 1} references bus {gen.bus}, which does "
                    "not exist.")
            if gen.p_min > gen.p_max:
                raise CaseValidationError(
                    f"Generator {k + 1} has PMIN > PMAX ({gen.p_min} > {gen.p_max}).")

        capacity = sum(gen.p_max for gen in self.__generators)
        demand = sum(bus.load for bus in self.__buses)
        if capacity < demand:
            raise CaseValidationError(
                f"Total generation capacity {capacity:.4f} pu is below total "
                f"load {demand:.4f} pu; the case is infeasible.")

    def get_base_mva(self) -> float:
        return self.__base_mva

    def get_buses(self) -> Tuple[Bus, ...]:
        return self.__buses

    def get_branches(self) -> Tuple[Branch, ...]:
        return self.__branches

    def get_generators(self) -> Tuple[Generator, ...]:
        return self.__generators

    def n_buses(self) -> int:
        return len(self.__buses)

    def n_branches(self) -> int:
        return len(self.__branches)

    def n_generators(self) -> int:
        return len(self.__generators)

    def get_slack_bus(self) -> int:
        return next(bus.id for bus in self.__buses if bus.type == "slack")

    def get_loads(self) -> np.ndarray:
        return np.array([bus.load for bus in self.__buses], dtype=float)

    def get_ratings(self) -> np.ndarray:
        return np.array([br.rating for br in self.__branches], dtype=float)

    def get_bus_table(self) -> pd.DataFrame:
        return pd.DataFrame([vars(bus) for bus in self.__buses]).set_index("id")

    def get_branch_table(self) -> pd.DataFrame:
        return pd.DataFrame([vars(br) for br in self.__branches]).set_index("id")

    def get_generator_table(self) -> pd.DataFrame:
        return pd.DataFrame([vars(gen) for gen in self.__generators])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridCase):
            return NotImplemented
        return (self.__base_mva == other.get_base_mva()
                and self.__buses == other.get_buses()
                and self.__branches == other.get_branches()
                and self.__generators == other.get_generators())

    def __str__(self) -> str:
        capacity = sum(g.p_max for g in self.__generators)
        return banner("CASE INFORMATION", [
            ("CASE NAME", self.get_name()),
            ("BASE MVA", self.__base_mva),
            ("BUSES", self.n_buses()),
            ("BRANCHES", self.n_branches()),
            ("GENERATORS", self.n_generators()),
            ("SLACK BUS", self.get_slack_bus()),
            ("TOTAL LOAD", f"{self.get_loads().sum():.4f} pu"),
            ("TOTAL CAPACITY", f"{capacity:.4f} pu")])


# -----------------------------------------------------------------------------
# MATPOWER-style script reader.
# -----------------------------------------------------------------------------
_FUNCTION = re.compile(r"function\s+\w+\s*=\s*\w+")
_ASSIGNMENT = re.compile(r"(\w+)\.(\w+)\s*=\s*")
_NUMBER = re.compile(r"[-+]?(?:inf|nan|(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)",
                     re.IGNORECASE)


def _position(text: str, offset: int) -> Tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    column = offset - text.rfind("\n", 0, offset)
    return line, column


def _blank_comments(text: str) -> str:
    """Replaces '%' comments by spaces, keeping every offset and newline."""
    chars = list(text)
    in_string = False
    in_comment = False
    for i, ch in enumerate(chars):
        if in_comment:
            if ch == "\n":
                in_comment = False
            else:
                chars[i] = " "
        elif ch == "'":
            in_string = not in_string
        elif ch == "%" and not in_string:
            in_comment = True
            chars[i] = " "
        elif ch == "\n":
            in_string = False
    return "".join(chars)


def _parse_matrix(text: str, start: int, end: int) -> np.ndarray:
    rows: List[List[float]] = []
    current: List[float] = []
    pos = start
    while pos < end:
        ch = text[pos]
        if ch in " \t\r,":
            pos += 1
        elif ch in ";\n":
            if current:
                rows.append(current)
                current = []
            pos += 1
        elif ch == "." and text.startswith("...", pos):
            # line continuation
            pos = text.find("\n", pos)
            pos = end if pos < 0 or pos > end else pos + 1
        else:
            match = _NUMBER.match(text, pos)
            if match is None or match.end() > end:
                line, column = _position(text, pos)
                raise CaseSyntaxError(f"unexpected character {ch!r} in matrix",
                                      line, column)
            current.append(float(match.group(0)))
            pos = match.end()
    if current:
        rows.append(current)

    widths = {len(row) for row in rows}
    if len(widths) > 1:
        line, column = _position(text, start)
        raise CaseSyntaxError("matrix rows have inconsistent widths "
                              f"{sorted(widths)}", line, column)
    if not rows:
        return np.zeros((0, 0))
    return np.array(rows, dtype=float)


def _skip_blank(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] in " \t\r\n;":
        pos += 1
    return pos


def read_matpower(text: str) -> RawCaseDocument:
    """Reads the supported subset of a MATPOWER case script.

    Parameters
    ----------
    text : str
        Content of a ``caseN.m`` file.

    Return
    ------
    RawCaseDocument
        Named tables, with any unsupported assignment recorded rather than
        silently dropped.
    """
    source = _blank_comments(text)
    tables: Dict[str, np.ndarray] = {}
    unsupported: List[str] = []
    base_mva = float("nan")

    pos = _skip_blank(source, 0)
    while pos < len(source):
        match = _FUNCTION.match(source, pos)
        if match:
            pos = _skip_blank(source, match.end())
            continue

        match = _ASSIGNMENT.match(source, pos)
        if match is None:
            line, column = _position(source, pos)
            raise CaseSyntaxError("expected 'mpc.<field> = ...'", line, column)
        field = match.group(2)
        pos = match.end()
        opener = source[pos] if pos < len(source) else ""

        if opener == "[":
            close = source.find("]", pos)
            if close < 0:
                line, column = _position(source, pos)
                raise CaseSyntaxError(f"unterminated matrix for '{field}'",
                                      line, column)
            value = _parse_matrix(source, pos + 1, close)
            pos = close + 1
        elif opener == "{":
            close = source.find("}", pos)
            if close < 0:
                line, column = _position(source, pos)
                raise CaseSyntaxError(f"unterminated cell array for '{field}'",
                                      line, column)
            value = None
            pos = close + 1
        elif opener == "'":
            close = source.find("'", pos + 1)
            if close < 0:
                line, column = _position(source, pos)
                raise CaseSyntaxError(f"unterminated string for '{field}'",
                                      line, column)
            value = source[pos + 1:close]
            pos = close + 1
        else:
            number = _NUMBER.match(source, pos)
            if number is None:
                line, column = _position(source, pos)
                raise CaseSyntaxError(f"cannot read value of '{field}'",
                                      line, column)
            value = float(number.group(0))
            pos = number.end()

        if field == "baseMVA":
            if not isinstance(value, float):
                line, column = _position(source, match.start())
                raise CaseSyntaxError("baseMVA must be a scalar", line, column)
            base_mva = value
        elif field in SUPPORTED_TABLES:
            if not isinstance(value, np.ndarray):
                line, column = _position(source, match.start())
                raise CaseSyntaxError(f"'{field}' must be a numeric matrix",
                                      line, column)
            tables[field] = value
        elif field not in METADATA_FIELDS:
            unsupported.append(field)

        pos = _skip_blank(source, pos)

    return RawCaseDocument(tables, base_mva, unsupported)


# -----------------------------------------------------------------------------
# Canonical JSON form (per-unit).
# -----------------------------------------------------------------------------
def _case_from_json(text: str, name: str = None) -> GridCase:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as error:
        raise CaseSyntaxError(error.msg, error.lineno, error.colno) from error

    if document.get("format") != CASE_FORMAT:
        raise CaseValidationError(
            f"JSON case must declare \"format\": \"{CASE_FORMAT}\".")
    extra = set(document) - {"format", "version", "name", "units", "baseMVA",
                             "bus", "branch", "gen", "gencost"}
    if extra:
        raise UnsupportedFeatureError(extra)

    try:
        gens = document["gen"]
        costs = document["gencost"]
        if len(gens) != len(costs):
            raise CaseValidationError(
                "JSON 'gen' and 'gencost' lists differ in length.")
        buses = [Bus(id=int(b["id"]), type=str(b["type"]), load=float(b["Pd"]))
                 for b in document["bus"]]
        branches = [Branch(id=int(b["id"]), from_bus=int(b["from"]),
                           to_bus=int(b["to"]), reactance=float(b["x"]),
                           rating=float(b["rateA"]), status=int(b["status"]))
                    for b in document["branch"]]
        generators = [Generator(bus=int(g["bus"]), p_min=float(g["Pmin"]),
                                p_max=float(g["Pmax"]),
                                cost_linear=float(c["linear"]),
                                cost_constant=float(c["constant"]))
                      for g, c in zip(gens, costs)]
        base_mva = float(document["baseMVA"])
    except (KeyError, TypeError) as error:
        raise CaseValidationError(f"Malformed JSON case: {error!r}.") from error

    for bus in buses:
        if bus.type not in ("load", "non-load", "slack"):
            raise CaseValidationError(
                f"Bus {bus.id} has unknown type '{bus.type}'.")
    return GridCase(base_mva=base_mva, buses=buses, branches=branches,
                    generators=generators, name=name or document.get("name"))


def parse_case(text: str, name: str = None,
               default_rating: Optional[float] = None) -> GridCase:
    """Parses a case from MATPOWER-style script text or canonical JSON.

    Parameters
    ----------
    text : str
        Case-file content. JSON is detected by a leading '{'.
    name : str, optional
        Name given to the GridCase.
    default_rating : float, optional
        MW rating substituted for zero RATE_A entries of MATPOWER input.

    Return
    ------
    GridCase
    """
    if text.lstrip().startswith("{"):
        return _case_from_json(text, name)
    return read_matpower(text).to_case(name=name, default_rating=default_rating)


def serialize_case(case: GridCase) -> str:
    """Emits the canonical JSON form of a case. Values are per-unit, so
    ``parse_case(serialize_case(case)) == case`` holds bit-exactly."""
    document = {
        "format": CASE_FORMAT,
        "version": 1,
        "name": case.get_name(),
        "units": "pu",
        "baseMVA": case.get_base_mva(),
        "bus": [{"id": b.id, "type": b.type, "Pd": b.load}
                for b in case.get_buses()],
        "branch": [{"id": b.id, "from": b.from_bus, "to": b.to_bus,
                    "x": b.reactance, "rateA": b.rating, "status": b.status}
                   for b in case.get_branches()],
        "gen": [{"bus": g.bus, "Pmin": g.p_min, "Pmax": g.p_max}
                for g in case.get_generators()],
        "gencost": [{"linear": g.cost_linear, "constant": g.cost_constant}
                    for g in case.get_generators()],
    }
    return json.dumps(document, indent=2)


def load_case(path: str, default_rating: Optional[float] = None) -> GridCase:
    """Reads and parses a case file (``.m`` or ``.json``)."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    name = re.sub(r"\.(m|json)$", "", path.replace("\\", "/").split("/")[-1])
    case = parse_case(text, name=name, default_rating=default_rating)
    logger.info("Loaded case '%s': %d buses, %d branches, %d generators.",
                name, case.n_buses(), case.n_branches(), case.n_generators())
    return case


def save_case(case: GridCase, path: str) -> None:
    """Writes the canonical JSON form of ``case`` to ``path``."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(serialize_case(case))
