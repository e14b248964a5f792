import logging
from typing import Dict, List

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .case_io import GridCase
from .element import GridElement, banner
from .exceptions import (DimensionMismatchError, DisconnectedNetworkError,
                         PowerImbalanceError, SingularMatrixError)

logger = logging.getLogger(__name__)

DENSE_PTDF_LIMIT = 300
BALANCE_TOLERANCE = 1e-8


class InjectionModel(GridElement):
    """DC sensitivities of a GridCase: susceptance matrices, PTDF, generator
    incidence G_B and the injection Jacobian H_inj.

    PTDF columns describe an injection at a bus withdrawn at the slack bus, so
    the slack column is identically zero. Up to ``DENSE_PTDF_LIMIT`` buses the
    full PTDF is formed at construction; above it rows are computed on demand
    from a sparse LU factorization of the reduced susceptance matrix.

    Methods
    -------
    get_ptdf
        Returns the dense n_br x n_b PTDF matrix.
    get_ptdf_row
        Returns the PTDF row of a single branch position.
    solve_angles
        Solves B_bus theta = p with theta_slack = 0.
    branch_flows
        Maps a bus injection vector to branch flows.
    """

    def __init__(self, case: GridCase, b_bus: sp.csr_matrix,
                 b_branch: sp.csr_matrix, gen_incidence: sp.csr_matrix,
                 slack_index: int, factor, ptdf: np.ndarray = None) -> None:
        super().__init__(f"{case.get_name()} injection model")
        self.__bus_ids: List[int] = [bus.id for bus in case.get_buses()]
        self.__branch_ids: List[int] = [br.id for br in case.get_branches()]
        self.__bus_index: Dict[int, int] = {
            bus_id: i for i, bus_id in enumerate(self.__bus_ids)}
        self.__branch_index: Dict[int, int] = {
            br_id: k for k, br_id in enumerate(self.__branch_ids)}
        self.__b_bus: sp.csr_matrix = b_bus
        self.__b_branch: sp.csr_matrix = b_branch
        self.__gen_incidence: sp.csr_matrix = gen_incidence
        self.__slack_index: int = slack_index
        self.__non_slack: np.ndarray = np.array(
            [i for i in range(len(self.__bus_ids)) if i != slack_index], dtype=int)
        self.__factor = factor
        self.__ptdf: np.ndarray = ptdf
        self.__row_cache: Dict[int, np.ndarray] = {}

    def n_buses(self) -> int:
        return len(self.__bus_ids)

    def n_branches(self) -> int:
        return len(self.__branch_ids)

    def n_generators(self) -> int:
        return self.__gen_incidence.shape[1]

    def get_bus_ids(self) -> List[int]:
        return list(self.__bus_ids)

    def get_branch_ids(self) -> List[int]:
        return list(self.__branch_ids)

    def bus_index(self, bus_id: int) -> int:
        return self.__bus_index[bus_id]

    def branch_index(self, branch_id: int) -> int:
        """Returns the position of a branch given its case-file id."""
        try:
            return self.__branch_index[branch_id]
        except KeyError:
            raise ValueError(f"Branch id {branch_id} is not an in-service "
                             "branch of the case.") from None

    def get_slack_bus(self) -> int:
        return self.__bus_ids[self.__slack_index]

    def get_slack_index(self) -> int:
        return self.__slack_index

    def get_b_bus(self) -> sp.csr_matrix:
        return self.__b_bus

    def get_b_branch(self) -> sp.csr_matrix:
        return self.__b_branch

    def get_gen_incidence(self) -> sp.csr_matrix:
        return self.__gen_incidence

    def get_h_inj(self) -> sp.csr_matrix:
        """Injection Jacobian: (H_inj c)_i is the DC injection change at bus i
        caused by the state perturbation c. Identical to B_bus."""
        return self.__b_bus

    def is_dense(self) -> bool:
        return self.__ptdf is not None

    def get_ptdf(self) -> np.ndarray:
        if self.__ptdf is None:
            logger.warning("Forming the dense %dx%d PTDF of a large network.",
                           self.n_branches(), self.n_buses())
            self.__ptdf = _dense_ptdf(self.__b_branch, self.__factor,
                                      self.__non_slack, self.n_buses())
        return self.__ptdf

    def get_ptdf_row(self, position: int) -> np.ndarray:
        if self.__ptdf is not None:
            return self.__ptdf[position]
        if position not in self.__row_cache:
            row = np.zeros(self.n_buses())
            rhs = self.__b_branch[position, self.__non_slack].toarray().ravel()
            # the reduced susceptance matrix is symmetric
            row[self.__non_slack] = self.__factor.solve(rhs)
            self.__row_cache[position] = row
        return self.__row_cache[position]

    def solve_angles(self, injection: np.ndarray) -> np.ndarray:
        injection = np.asarray(injection, dtype=float)
        if injection.shape != (self.n_buses(),):
            raise DimensionMismatchError(
                f"Injection has shape {injection.shape}, expected "
                f"({self.n_buses()},).")
        theta = np.zeros(self.n_buses())
        theta[self.__non_slack] = self.__factor.solve(injection[self.__non_slack])
        return theta

    def branch_flows(self, injection: np.ndarray) -> np.ndarray:
        """Branch flows PTDF . injection (any imbalance is taken by the slack)."""
        injection = np.asarray(injection, dtype=float)
        if self.__ptdf is not None:
            if injection.shape != (self.n_buses(),):
                raise DimensionMismatchError(
                    f"Injection has shape {injection.shape}, expected "
                    f"({self.n_buses()},).")
            return self.__ptdf @ injection
        return self.__b_branch @ self.solve_angles(injection)

    def __str__(self) -> str:
        return banner("INJECTION MODEL", [
            ("NAME", self.get_name()),
            ("BUSES", self.n_buses()),
            ("BRANCHES", self.n_branches()),
            ("GENERATORS", self.n_generators()),
            ("SLACK BUS", self.get_slack_bus()),
            ("PTDF STORAGE", "dense" if self.is_dense() else "rows on demand")])


def _dense_ptdf(b_branch: sp.csr_matrix, factor, non_slack: np.ndarray,
                n_buses: int) -> np.ndarray:
    ptdf = np.zeros((b_branch.shape[0], n_buses))
    rhs = b_branch[:, non_slack].T.toarray()
    ptdf[:, non_slack] = factor.solve(rhs).T
    return ptdf


def _islands(adjacency: sp.csr_matrix, bus_ids: List[int]) -> List[List[int]]:
    count, labels = connected_components(adjacency, directed=False)
    return [[bus_ids[i] for i in np.flatnonzero(labels == k)] for k in range(count)]


def build_injection_model(case: GridCase) -> InjectionModel:
    """Builds the DC sensitivity structures of a connected case.

    Parameters
    ----------
    case : GridCase
        Validated case.

    Return
    ------
    InjectionModel
    """
    bus_ids = [bus.id for bus in case.get_buses()]
    index = {bus_id: i for i, bus_id in enumerate(bus_ids)}
    n_b, n_br = len(bus_ids), case.n_branches()

    rows = np.repeat(np.arange(n_br), 2)
    cols = np.array([[index[br.from_bus], index[br.to_bus]]
                     for br in case.get_branches()], dtype=int).reshape(-1)
    signs = np.tile([1.0, -1.0], n_br)
    incidence = sp.csr_matrix((signs, (rows, cols)), shape=(n_br, n_b))
    reactance = np.array([br.reactance for br in case.get_branches()])
    susceptance = sp.diags(1.0 / reactance, 0)

    b_branch = sp.csr_matrix(susceptance @ incidence)
    b_bus = sp.csr_matrix(incidence.T @ b_branch)

    islands = _islands(abs(b_bus), bus_ids)
    if len(islands) > 1:
        raise DisconnectedNetworkError(islands)

    gens = case.get_generators()
    gen_incidence = sp.csr_matrix(
        (np.ones(len(gens)), ([index[g.bus] for g in gens], np.arange(len(gens)))),
        shape=(n_b, len(gens)))

    slack_index = index[case.get_slack_bus()]
    non_slack = np.array([i for i in range(n_b) if i != slack_index], dtype=int)
    reduced = sp.csc_matrix(b_bus[non_slack][:, non_slack])
    try:
        factor = splu(reduced)
    except RuntimeError as error:
        raise SingularMatrixError(
            f"Reduced susceptance matrix of '{case.get_name()}' is singular: "
            f"{error}") from error

    ptdf = None
    if n_b <= DENSE_PTDF_LIMIT:
        ptdf = _dense_ptdf(b_branch, factor, non_slack, n_b)

    logger.debug("Built injection model for %d buses (dense PTDF: %s).",
                 n_b, ptdf is not None)
    return InjectionModel(case, b_bus, b_branch, gen_incidence, slack_index,
                          factor, ptdf)


def physical_flows(model: InjectionModel, dispatch: np.ndarray,
                   loads: np.ndarray,
                   tolerance: float = BALANCE_TOLERANCE) -> np.ndarray:
    """Branch flows PTDF (G_B dispatch - loads).

    Parameters
    ----------
    model : InjectionModel
    dispatch : numpy.ndarray
        Generator outputs (length n_g, per-unit).
    loads : numpy.ndarray
        Bus loads (length n_b, per-unit).
    tolerance : float, optional
        Allowed imbalance relative to max(1, total absolute load).

    Return
    ------
    numpy.ndarray
        Flows of length n_br.
    """
    dispatch = np.asarray(dispatch, dtype=float)
    loads = np.asarray(loads, dtype=float)
    if dispatch.shape != (model.n_generators(),) or \
            loads.shape != (model.n_buses(),):
        raise DimensionMismatchError(
            f"Expected dispatch ({model.n_generators()},) and loads "
            f"({model.n_buses()},), got {dispatch.shape} and {loads.shape}.")

    injection = model.get_gen_incidence() @ dispatch - loads
    imbalance = float(injection.sum())
    scale = max(1.0, float(np.abs(loads).sum()))
    if abs(imbalance) > tolerance * scale:
        raise PowerImbalanceError(imbalance, tolerance * scale)
    return model.branch_flows(injection)
