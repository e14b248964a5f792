import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Set, Tuple

import numpy as np
from graphviz import Graph

from .case_io import GridCase
from .element import GridElement, banner
from .exceptions import ConfigError, DimensionMismatchError, EmptyAttackError
from .network import InjectionModel

logger = logging.getLogger(__name__)

CENTER_BUS_THRESHOLD = 1e-9
L1_TOLERANCE = 1e-9
LOAD_SHIFT_TOLERANCE = 1e-9


def load_bus_ids(case: GridCase) -> List[int]:
    """Ids of the buses where the attacker may perturb the state: load buses
    other than the slack, in case order."""
    return [bus.id for bus in case.get_buses() if bus.type == "load"]


class AttackVector(GridElement):
    """State perturbation c injected by the attacker together with the
    budgets it is judged against.

    Attributs
    ---------
    c : numpy.ndarray
        Perturbation of the bus angles (radians, n_b entries).
    sparsity_budget : float
        l1 budget N1 on the entries of c at load buses.
    load_shift_limit : float
        Fraction L_S of each bus load the observed load may move by.

    Only shapes and finiteness are checked here; the budget and load-shift
    conditions are evaluated by ``check_attack``.
    """

    def __init__(self, c: np.ndarray, sparsity_budget: float,
                 load_shift_limit: float, name: str = "Attack Vector") -> None:
        super().__init__(name)
        c = np.asarray(c, dtype=float)
        if c.ndim != 1:
            raise DimensionMismatchError(
                f"The attack vector must be one-dimensional, got shape {c.shape}.")
        if not np.all(np.isfinite(c)):
            raise ValueError("The attack vector contains non-finite values.")
        if not math.isfinite(sparsity_budget) or sparsity_budget < 0.0:
            raise ValueError("'sparsity_budget' must be a non-negative number.")
        if not 0.0 < load_shift_limit < 1.0:
            raise ValueError("'load_shift_limit' must lie in the open " +
                             "interval (0, 1).")
        self.__c: np.ndarray = c
        self.__sparsity_budget: float = float(sparsity_budget)
        self.__load_shift_limit: float = float(load_shift_limit)

    @classmethod
    def zeros(cls, case: GridCase, sparsity_budget: float = 0.0,
              load_shift_limit: float = 0.1) -> "AttackVector":
        return cls(np.zeros(case.n_buses()), sparsity_budget, load_shift_limit)

    @classmethod
    def from_sparse(cls, case: GridCase, mapping: Mapping[int, float],
                    sparsity_budget: float,
                    load_shift_limit: float) -> "AttackVector":
        """Builds a vector from a {bus id: value} map; unknown bus ids raise
        ValueError."""
        index = {bus.id: i for i, bus in enumerate(case.get_buses())}
        c = np.zeros(case.n_buses())
        for bus_id, value in mapping.items():
            if int(bus_id) not in index:
                raise ValueError(f"Bus {bus_id} does not exist in the case.")
            c[index[int(bus_id)]] = float(value)
        return cls(c, sparsity_budget, load_shift_limit)

    def get_c(self) -> np.ndarray:
        return self.__c.copy()

    def get_sparsity_budget(self) -> float:
        return self.__sparsity_budget

    def get_load_shift_limit(self) -> float:
        return self.__load_shift_limit

    def to_sparse(self, case: GridCase) -> Dict[int, float]:
        return {bus.id: float(value)
                for bus, value in zip(case.get_buses(), self.__c)
                if abs(value) > CENTER_BUS_THRESHOLD}

    def l0(self) -> int:
        """Number of entries above the center-bus threshold."""
        return int(np.count_nonzero(np.abs(self.__c) > CENTER_BUS_THRESHOLD))

    def __str__(self) -> str:
        return banner("ATTACK VECTOR", [
            ("NAME", self.get_name()),
            ("N1 (L1 BUDGET)", self.__sparsity_budget),
            ("LS (LOAD SHIFT)", self.__load_shift_limit),
            ("L1 NORM", f"{np.abs(self.__c).sum():.6f}"),
            ("NONZERO ENTRIES", self.l0())])


@dataclass
class AttackDescriptor:
    """Content of the JSON attack descriptor used by the command line."""
    target_line: int
    vector: AttackVector


def read_attack_descriptor(path: str, case: GridCase) -> AttackDescriptor:
    """Reads ``{"target_line", "N1", "LS", "c": {bus: value}}`` from a file.

    Malformed JSON and missing keys raise ConfigError.
    """
    with open(path, "r", encoding="utf-8") as handle:
        try:
            document = json.load(handle)
        except json.JSONDecodeError as error:
            raise ConfigError(f"Attack descriptor '{path}' is not valid JSON: "
                              f"{error}") from None
    if not isinstance(document, dict):
        raise ConfigError(f"Attack descriptor '{path}' must hold a JSON object.")
    try:
        vector = AttackVector.from_sparse(case, document.get("c", {}),
                                          float(document["N1"]),
                                          float(document["LS"]))
        return AttackDescriptor(target_line=int(document["target_line"]),
                                vector=vector)
    except KeyError as error:
        raise ConfigError(f"Attack descriptor '{path}' lacks the key "
                          f"{error.args[0]!r}.",
                          {str(error.args[0]): "missing"}) from None


def write_attack_descriptor(path: str, case: GridCase, target_line: int,
                            vector: AttackVector) -> None:
    document = {"target_line": int(target_line),
                "N1": vector.get_sparsity_budget(),
                "LS": vector.get_load_shift_limit(),
                "c": {str(k): v for k, v in vector.to_sparse(case).items()}}
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2)


class AttackSubgraph(GridElement):
    """Part of the network whose measurements the attacker must rewrite.

    Every boundary bus is a load bus, so the injection changes caused by c
    stay inside the subgraph and can be hidden as load changes.
    """

    def __init__(self, buses: Set[int], branches: Set[int],
                 center_buses: Set[int], full_network: bool,
                 rounds: int) -> None:
        super().__init__("Attack Subgraph")
        self.__buses: Set[int] = set(buses)
        self.__branches: Set[int] = set(branches)
        self.__center_buses: Set[int] = set(center_buses)
        self.__full_network: bool = full_network
        self.__rounds: int = rounds

    def get_buses(self) -> Set[int]:
        return set(self.__buses)

    def get_branches(self) -> Set[int]:
        return set(self.__branches)

    def get_center_buses(self) -> Set[int]:
        return set(self.__center_buses)

    def is_full_network(self) -> bool:
        return self.__full_network

    def get_rounds(self) -> int:
        """Number of expansion rounds around non-load boundary buses."""
        return self.__rounds

    def size(self) -> Tuple[int, int]:
        return len(self.__buses), len(self.__branches)

    def get_graph(self, case: GridCase) -> Graph:
        """Draws the subgraph: center buses are filled red, other buses of the
        subgraph light blue, and branches outside it are omitted.

        Return
        ------
        graphviz.Graph
        """
        g = Graph("Attack Subgraph", filename="attack_subgraph",
                  node_attr={"color": "lightblue2", "style": "filled"})
        g.attr(size="8,5")
        for bus_id in sorted(self.__buses):
            color = "tomato" if bus_id in self.__center_buses else "lightblue2"
            g.node(str(bus_id), color=color)
        for branch in case.get_branches():
            if branch.id in self.__branches:
                g.edge(str(branch.from_bus), str(branch.to_bus),
                       label=str(branch.id))
        return g

    def __str__(self) -> str:
        return banner("ATTACK SUBGRAPH", [
            ("CENTER BUSES", sorted(self.__center_buses)),
            ("BUSES", len(self.__buses)),
            ("BRANCHES", len(self.__branches)),
            ("EXPANSION ROUNDS", self.__rounds),
            ("FULL NETWORK", self.__full_network)])


def _check_length(c: AttackVector, case: GridCase) -> np.ndarray:
    vector = c.get_c()
    if vector.size != case.n_buses():
        raise DimensionMismatchError(
            f"Attack vector has {vector.size} entries but the case has "
            f"{case.n_buses()} buses.")
    return vector


def center_buses(c: AttackVector, case: GridCase) -> Set[int]:
    vector = _check_length(c, case)
    return {bus.id for bus, value in zip(case.get_buses(), vector)
            if bus.type == "load" and abs(value) > CENTER_BUS_THRESHOLD}


def build_subgraph(c: AttackVector, case: GridCase,
                   model: InjectionModel = None) -> AttackSubgraph:
    """Builds the attacker subgraph around the center buses of ``c``.

    The center buses and everything adjacent to them are taken first. While a
    boundary bus carries no load, its adjacent branches and buses are added
    as well, until every boundary bus is a load bus.

    Parameters
    ----------
    c : AttackVector
    case : GridCase
    model : InjectionModel, optional
        Not needed for the expansion; accepted so every attack operation has
        the same signature.

    Return
    ------
    AttackSubgraph
    """
    centers = center_buses(c, case)
    if not centers:
        raise EmptyAttackError("The attack vector has no center bus "
                               f"(|c_i| > {CENTER_BUS_THRESHOLD}).")

    incident: Dict[int, List] = {bus.id: [] for bus in case.get_buses()}
    for branch in case.get_branches():
        incident[branch.from_bus].append(branch)
        incident[branch.to_bus].append(branch)
    is_load = {bus.id: bus.is_load for bus in case.get_buses()}

    buses: Set[int] = set(centers)
    branches: Set[int] = set()
    expanded: Set[int] = set()
    frontier = sorted(centers)
    rounds = 0

    while frontier:
        for bus_id in frontier:
            expanded.add(bus_id)
            for branch in incident[bus_id]:
                branches.add(branch.id)
                other = branch.to_bus if branch.from_bus == bus_id else branch.from_bus
                if other not in buses:
                    buses.add(other)
        boundary = buses - expanded
        frontier = sorted(b for b in boundary if not is_load[b])
        if frontier:
            rounds += 1

    full = len(buses) == case.n_buses()
    if full:
        logger.warning("The attack subgraph spans the whole network.")
    return AttackSubgraph(buses, branches, centers, full, rounds)


def cyber_loads(c: AttackVector, case: GridCase,
                model: InjectionModel) -> np.ndarray:
    """Loads seen by the operator after the attack, P_D - H_inj c."""
    vector = _check_length(c, case)
    return case.get_loads() - model.get_h_inj() @ vector


@dataclass
class AttackReport:
    """Outcome of ``check_attack``. ``violations`` lists human-readable
    descriptions; ``passed`` is True when it is empty."""
    l1_usage: float
    sparsity_budget: float
    load_shift_slack: np.ndarray
    center_bus_count: int
    l0: int
    subgraph_size: Optional[Tuple[int, int]]
    violations: List[str] = field(default_factory=list)
    violating_buses: List[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def check_attack(c: AttackVector, case: GridCase,
                 model: InjectionModel) -> AttackReport:
    """Evaluates the l1 budget and the load-shift box of an attack vector.

    The load-shift slack of bus i is L_S P_D,i - |(H_inj c)_i|; a negative
    value is a violation. Perturbations at the slack or at non-load buses are
    reported as violations too.

    Return
    ------
    AttackReport
    """
    vector = _check_length(c, case)
    buses = case.get_buses()
    loads = case.get_loads()
    shift = model.get_h_inj() @ vector
    slack = c.get_load_shift_limit() * loads - np.abs(shift)
    l1_usage = float(sum(abs(v) for bus, v in zip(buses, vector)
                         if bus.type == "load"))

    violations: List[str] = []
    violating: List[int] = []
    if l1_usage > c.get_sparsity_budget() + L1_TOLERANCE:
        violations.append(f"l1 usage {l1_usage:.6g} exceeds N1 = "
                          f"{c.get_sparsity_budget():.6g}")
    for bus, value in zip(buses, vector):
        if bus.type != "load" and abs(value) > CENTER_BUS_THRESHOLD:
            violations.append(f"bus {bus.id} ({bus.type}) carries a nonzero "
                              f"perturbation {value:.3g}")
    for bus, value in zip(buses, slack):
        if value < -LOAD_SHIFT_TOLERANCE:
            violations.append(f"bus {bus.id} load shift exceeds its limit by "
                              f"{-value:.3g} pu")
            violating.append(bus.id)

    centers = center_buses(c, case)
    size = build_subgraph(c, case).size() if centers else None
    return AttackReport(l1_usage=l1_usage,
                        sparsity_budget=c.get_sparsity_budget(),
                        load_shift_slack=slack, center_bus_count=len(centers),
                        l0=c.l0(), subgraph_size=size, violations=violations,
                        violating_buses=violating)
