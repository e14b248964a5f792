"""Exception hierarchy of fdiflow.

Solver outcomes (infeasible, unbounded, node or time limits) are reported as
statuses on :class:`fdiflow.solver.SolveResult`; the exceptions below signal
invalid input or a computation that cannot continue.
"""
from typing import Dict, Iterable, List, Optional


class FdiflowError(Exception):
    """Base class of every error raised by fdiflow."""


class CaseSyntaxError(FdiflowError, ValueError):
    """The case text cannot be tokenized or parsed."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line: int = line
        self.column: int = column


class CaseValidationError(FdiflowError, ValueError):
    """The parsed case violates a GridCase invariant."""


class UnsupportedFeatureError(FdiflowError, ValueError):
    """The case uses tables the DC pipeline does not model."""

    def __init__(self, tables: Iterable[str]) -> None:
        self.tables: List[str] = sorted(tables)
        message = "Unsupported case data in table(s): " + \
            ", ".join(self.tables) + \
            ". Only 'baseMVA', 'bus', 'branch', 'gen' and 'gencost' are accepted."
        super().__init__(message)


class DisconnectedNetworkError(FdiflowError):
    """The branch graph has more than one island."""

    def __init__(self, islands: List[List[int]]) -> None:
        self.islands: List[List[int]] = islands
        summary = "; ".join(f"island {k}: buses {members}"
                            for k, members in enumerate(islands))
        super().__init__(f"Network is not connected ({len(islands)} islands): "
                         + summary)


class SingularMatrixError(FdiflowError):
    """A reduced susceptance or gain matrix could not be factorized."""


class PowerImbalanceError(FdiflowError, ValueError):
    """Total injection differs from zero by more than the tolerance."""

    def __init__(self, imbalance: float, tolerance: float) -> None:
        self.imbalance: float = imbalance
        super().__init__(f"Injections do not balance: sum = {imbalance:.3e} "
                         f"(tolerance {tolerance:.0e}).")


class UnobservableError(FdiflowError):
    """The measurement Jacobian does not have full column rank."""


class DimensionMismatchError(FdiflowError, ValueError):
    """Vector or matrix shapes do not agree."""


class EmptyAttackError(FdiflowError, ValueError):
    """An attack vector has no center bus."""


class InfeasibleRedispatchError(FdiflowError):
    """The post-attack DCOPF has no feasible dispatch."""

    def __init__(self, message: str, status: Optional[str] = None) -> None:
        super().__init__(message)
        self.status: Optional[str] = status


class ReductionError(FdiflowError, ValueError):
    """The reduced attack MILP cannot be assembled (empty Q or R, missing M)."""


class BackendError(FdiflowError):
    """An optimization backend violated the result contract."""

    def __init__(self, backend: str, message: str) -> None:
        super().__init__(f"[{backend}] {message}")
        self.backend: str = backend


class ConfigError(FdiflowError, ValueError):
    """A sweep configuration value is missing or out of range."""

    def __init__(self, message: str, details: Optional[Dict[str, str]] = None) -> None:
        super().__init__(message)
        self.details: Dict[str, str] = details or {}
