"""DC state estimation: measurement simulation, WLS estimation, residual
bad-data detection and the unobservable-attack measurement transform."""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.stats import chi2

from .exceptions import DimensionMismatchError, UnobservableError
from .network import InjectionModel, physical_flows

logger = logging.getLogger(__name__)

MEASUREMENT_KINDS = ("bus-injection", "branch-flow-from", "branch-flow-to")
VARIANCE_FLOOR = 1e-8
DEFAULT_ALPHA = 0.05


class MeasurementSet:
    """Telemetry vector z with its kinds, element ids, variances and the
    measurement Jacobian H_meas (n_m x n_b, angles in radians)."""

    def __init__(self, kinds: List[str], elements: List[int], values: np.ndarray,
                 variances: np.ndarray, jacobian: np.ndarray,
                 slack_index: int) -> None:
        values = np.asarray(values, dtype=float)
        variances = np.asarray(variances, dtype=float)
        if not (len(kinds) == len(elements) == values.size == variances.size
                == jacobian.shape[0]):
            raise DimensionMismatchError(
                "Measurement kinds, elements, values, variances and Jacobian "
                "rows must have the same length.")
        if np.any(variances <= 0.0):
            raise ValueError("Measurement variances must be strictly positive.")
        unknown = set(kinds) - set(MEASUREMENT_KINDS)
        if unknown:
            raise ValueError(f"Unknown measurement kind(s): {sorted(unknown)}.")

        self.__kinds: List[str] = list(kinds)
        self.__elements: List[int] = list(elements)
        self.__values: np.ndarray = values
        self.__variances: np.ndarray = variances
        self.__jacobian: np.ndarray = np.asarray(jacobian, dtype=float)
        self.__slack_index: int = slack_index

    def __len__(self) -> int:
        return self.__values.size

    def get_kinds(self) -> List[str]:
        return list(self.__kinds)

    def get_elements(self) -> List[int]:
        return list(self.__elements)

    def get_values(self) -> np.ndarray:
        return self.__values.copy()

    def get_variances(self) -> np.ndarray:
        return self.__variances.copy()

    def get_jacobian(self) -> np.ndarray:
        return self.__jacobian

    def get_slack_index(self) -> int:
        return self.__slack_index

    def n_states(self) -> int:
        return self.__jacobian.shape[1]

    def with_values(self, values: np.ndarray) -> "MeasurementSet":
        """Returns a copy carrying new measurement values."""
        return MeasurementSet(self.__kinds, self.__elements, values,
                              self.__variances, self.__jacobian,
                              self.__slack_index)

    def duplicated(self) -> "MeasurementSet":
        """Returns the set with every measurement repeated once."""
        return MeasurementSet(self.__kinds * 2, self.__elements * 2,
                              np.tile(self.__values, 2),
                              np.tile(self.__variances, 2),
                              np.vstack([self.__jacobian, self.__jacobian]),
                              self.__slack_index)

    def get_table(self) -> pd.DataFrame:
        return pd.DataFrame({"kind": self.__kinds, "element": self.__elements,
                             "value": self.__values,
                             "variance": self.__variances})

    def to_csv(self, path: str) -> None:
        """Dumps entry kind, element, value and variance to a CSV file."""
        self.get_table().to_csv(path, index=False)


@dataclass(frozen=True)
class EstimationResult:
    """WLS estimate: ``x_hat`` (slack angle 0), residual z - H x_hat and the
    weighted residual sum of squares ``objective``."""
    x_hat: np.ndarray
    residual: np.ndarray
    objective: float


@dataclass(frozen=True)
class BadDataReport:
    passed: bool
    objective: float
    threshold: float
    degrees_of_freedom: int
    normalized_residuals: np.ndarray
    largest_index: int

    @property
    def largest_normalized_residual(self) -> float:
        return float(self.normalized_residuals[self.largest_index])


def measurement_jacobian(model: InjectionModel) -> np.ndarray:
    """Stacks the full measurement suite: all bus injections, then the flow
    at the from end and at the to end of every branch."""
    b_bus = model.get_b_bus().toarray()
    b_branch = model.get_b_branch().toarray()
    return np.vstack([b_bus, b_branch, -b_branch])


def simulate_measurements(model: InjectionModel, dispatch: np.ndarray,
                          loads: np.ndarray, noise_stddev: float,
                          seed: int) -> MeasurementSet:
    """Simulates a full measurement set from the exact DC solution.

    Parameters
    ----------
    model : InjectionModel
    dispatch : numpy.ndarray
        Generator outputs (per-unit), balanced against ``loads``.
    loads : numpy.ndarray
        Bus loads (per-unit).
    noise_stddev : float
        Standard deviation of the i.i.d. Gaussian noise (per-unit).
    seed : int
        Seed of the noise generator.

    Return
    ------
    MeasurementSet
    """
    if noise_stddev < 0.0:
        raise ValueError("'noise_stddev' must be non-negative.")

    # validates dimensions and balance
    physical_flows(model, dispatch, loads)
    injection = model.get_gen_incidence() @ np.asarray(dispatch, float) - loads
    theta = model.solve_angles(injection)

    jacobian = measurement_jacobian(model)
    truth = jacobian @ theta
    rng = np.random.default_rng(seed)
    values = truth + noise_stddev * rng.standard_normal(truth.size)

    n_b, n_br = model.n_buses(), model.n_branches()
    kinds = [MEASUREMENT_KINDS[0]] * n_b + [MEASUREMENT_KINDS[1]] * n_br + \
        [MEASUREMENT_KINDS[2]] * n_br
    elements = model.get_bus_ids() + model.get_branch_ids() * 2
    variances = np.full(truth.size, max(noise_stddev ** 2, VARIANCE_FLOOR))
    return MeasurementSet(kinds, elements, values, variances, jacobian,
                          model.get_slack_index())


def _reduced(meas: MeasurementSet) -> Tuple[np.ndarray, List[int]]:
    keep = [j for j in range(meas.n_states()) if j != meas.get_slack_index()]
    return meas.get_jacobian()[:, keep], keep


def _gain_factor(meas: MeasurementSet):
    jacobian, keep = _reduced(meas)
    if np.linalg.matrix_rank(jacobian) < len(keep):
        raise UnobservableError(
            f"Measurement Jacobian has rank {np.linalg.matrix_rank(jacobian)} "
            f"< {len(keep)} non-slack states; the system is unobservable.")
    weights = 1.0 / meas.get_variances()
    gain = jacobian.T @ (weights[:, None] * jacobian)
    try:
        factor = scipy.linalg.cho_factor(gain)
    except np.linalg.LinAlgError as error:
        raise UnobservableError(f"Gain matrix is not positive definite: {error}") \
            from error
    return jacobian, keep, weights, factor


def wls_estimate(meas: MeasurementSet) -> EstimationResult:
    """Weighted least-squares estimate with the slack angle fixed at zero.

    Parameters
    ----------
    meas : MeasurementSet

    Return
    ------
    EstimationResult
    """
    jacobian, keep, weights, factor = _gain_factor(meas)
    z = meas.get_values()
    reduced_state = scipy.linalg.cho_solve(factor, jacobian.T @ (weights * z))

    x_hat = np.zeros(meas.n_states())
    x_hat[keep] = reduced_state
    residual = z - meas.get_jacobian() @ x_hat
    objective = float(residual @ (weights * residual))
    return EstimationResult(x_hat=x_hat, residual=residual, objective=objective)


def apply_attack(meas: MeasurementSet, c) -> MeasurementSet:
    """Applies z_i + H_i c to every measurement (variances unchanged).

    ``c`` is an AttackVector or a plain state-perturbation array.
    """
    vector = c.get_c() if hasattr(c, "get_c") else np.asarray(c, dtype=float)
    if vector.shape != (meas.n_states(),):
        raise DimensionMismatchError(
            f"Attack vector has shape {vector.shape}, expected "
            f"({meas.n_states()},).")
    if vector[meas.get_slack_index()] != 0.0:
        raise ValueError("The attack vector must be zero at the slack bus.")
    return meas.with_values(meas.get_values() + meas.get_jacobian() @ vector)


def bad_data_test(result: EstimationResult, meas: MeasurementSet,
                  alpha: float = DEFAULT_ALPHA) -> BadDataReport:
    """Chi-square test on J with n_m - (n_b - 1) degrees of freedom, plus the
    largest normalized residual.

    Parameters
    ----------
    result : EstimationResult
    meas : MeasurementSet
    alpha : float, optional
        Significance level (false-alarm probability). Default 0.05.

    Return
    ------
    BadDataReport
        ``passed`` is True when J is below the chi-square threshold.
    """
    jacobian, _, weights, factor = _gain_factor(meas)
    dof = len(meas) - jacobian.shape[1]
    threshold = float(chi2.ppf(1.0 - alpha, df=dof)) if dof > 0 else 0.0

    # residual covariance diagonal: R - H G^-1 H^T
    projected = scipy.linalg.cho_solve(factor, jacobian.T)
    omega = meas.get_variances() - np.einsum("ij,ji->i", jacobian, projected)
    omega = np.maximum(omega, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = np.where(omega > 1e-14 * meas.get_variances(),
                              np.abs(result.residual) / np.sqrt(omega), 0.0)
    largest = int(np.argmax(normalized)) if normalized.size else 0

    passed = result.objective < threshold if dof > 0 else True
    logger.debug("Bad-data test: J = %.4g, threshold = %.4g, dof = %d.",
                 result.objective, threshold, dof)
    return BadDataReport(passed=bool(passed), objective=result.objective,
                         threshold=threshold, degrees_of_freedom=dof,
                         normalized_residuals=normalized, largest_index=largest)
