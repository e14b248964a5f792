"""Sweep configuration read from an INI file.

Example::

    [case]
    path = cases/case24_ieee_rts.m
    default_rating =

    [sweep]
    algorithms = A1, A2, A3
    targets = critical
    n1_start = 0.1
    n1_stop = 1.0
    n1_step = 0.1
    load_shift = 0.1
    sigma = 1e-4
    critical_threshold = 0.9

    [solver]
    backend = native
    gap_tolerance = 1e-6
    node_limit = 100000
    time_limit = inf

    [output]
    directory = results
    record_timings = false
    plot_data = true

    [run]
    parallelism = 4
    seed = 0
    noise_stddev = 0.0
    alpha = 0.05
"""
import configparser
import logging
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Optional, Union

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

ALGORITHMS = ("original", "A1", "A2", "A3")
BACKENDS = ("native", "scipy")


@dataclass(frozen=True)
class SweepConfig:
    case_path: str
    algorithms: List[str] = field(default_factory=lambda: ["A1", "A2", "A3"])
    targets: Union[str, List[int]] = "critical"
    n1_start: float = 0.1
    n1_stop: float = 1.0
    n1_step: float = 0.1
    load_shift: float = 0.1
    sigma: float = 1e-4
    critical_threshold: float = 0.9
    default_rating: Optional[float] = None
    backend: str = "native"
    gap_tolerance: float = 1e-6
    node_limit: int = 100000
    time_limit: float = math.inf
    parallelism: int = field(default_factory=lambda: os.cpu_count() or 1)
    output_dir: str = "results"
    record_timings: bool = False
    plot_data: bool = True
    seed: int = 0
    noise_stddev: float = 0.0
    alpha: float = 0.05

    def validate(self) -> "SweepConfig":
        """Checks ranges and returns the config itself."""
        problems: Dict[str, str] = {}
        if not self.case_path:
            problems["case.path"] = "a case file is required"
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown or not self.algorithms:
            problems["sweep.algorithms"] = \
                f"expected a non-empty subset of {ALGORITHMS}, got {self.algorithms}"
        if self.targets != "critical" and (
                not isinstance(self.targets, list) or not self.targets):
            problems["sweep.targets"] = "expected 'critical' or a list of line ids"
        if not self.n1_step > 0.0:
            problems["sweep.n1_step"] = "must be positive"
        if self.n1_start > self.n1_stop:
            problems["sweep.n1_start"] = "must not exceed n1_stop"
        if self.n1_start < 0.0:
            problems["sweep.n1_start"] = "must be non-negative"
        if not 0.0 < self.load_shift < 1.0:
            problems["sweep.load_shift"] = "must lie in (0, 1)"
        if not self.sigma > 0.0:
            problems["sweep.sigma"] = "must be positive"
        if not 0.0 < self.critical_threshold <= 1.0:
            problems["sweep.critical_threshold"] = "must lie in (0, 1]"
        if self.backend not in BACKENDS:
            problems["solver.backend"] = f"expected one of {BACKENDS}"
        if self.parallelism < 1:
            problems["run.parallelism"] = "must be at least 1"
        if self.noise_stddev < 0.0:
            problems["run.noise_stddev"] = "must be non-negative"
        if not 0.0 < self.alpha < 1.0:
            problems["run.alpha"] = "must lie in (0, 1)"
        if problems:
            message = "Invalid sweep configuration: " + "; ".join(
                f"{key} {value}" for key, value in problems.items())
            raise ConfigError(message, problems)
        return self

    def n1_grid(self) -> List[float]:
        """Budgets from n1_start to n1_stop in steps of n1_step."""
        count = int(round((self.n1_stop - self.n1_start) / self.n1_step)) + 1
        return [round(self.n1_start + i * self.n1_step, 10) for i in range(count)]

    def with_overrides(self, **overrides) -> "SweepConfig":
        """Returns a copy with every non-None override applied."""
        known = {f.name for f in fields(self)}
        values = {}
        for key, value in overrides.items():
            if key not in known:
                raise ConfigError(f"Unknown configuration key '{key}'.")
            if value is not None:
                values[key] = value
        return replace(self, **values)


# INI section, key, SweepConfig field, converter
_SCHEMA = [
    ("case", "path", "case_path", str),
    ("case", "default_rating", "default_rating", float),
    ("sweep", "algorithms", "algorithms", "list"),
    ("sweep", "targets", "targets", "targets"),
    ("sweep", "n1_start", "n1_start", float),
    ("sweep", "n1_stop", "n1_stop", float),
    ("sweep", "n1_step", "n1_step", float),
    ("sweep", "load_shift", "load_shift", float),
    ("sweep", "sigma", "sigma", float),
    ("sweep", "critical_threshold", "critical_threshold", float),
    ("solver", "backend", "backend", str),
    ("solver", "gap_tolerance", "gap_tolerance", float),
    ("solver", "node_limit", "node_limit", int),
    ("solver", "time_limit", "time_limit", float),
    ("output", "directory", "output_dir", str),
    ("output", "record_timings", "record_timings", bool),
    ("output", "plot_data", "plot_data", bool),
    ("run", "parallelism", "parallelism", int),
    ("run", "seed", "seed", int),
    ("run", "noise_stddev", "noise_stddev", float),
    ("run", "alpha", "alpha", float),
]


def parse_targets(text: str) -> Union[str, List[int]]:
    text = text.strip()
    if text.lower() == "critical":
        return "critical"
    try:
        return [int(item) for item in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"Invalid target list '{text}'.",
                          {"sweep.targets": text}) from None


def parse_algorithms(text: str) -> List[str]:
    return [item for item in text.replace(",", " ").split() if item]


def _convert(parser: configparser.ConfigParser, section: str, key: str,
             kind) -> object:
    raw = parser.get(section, key).strip()
    if raw == "":
        return None
    try:
        if kind is bool:
            return parser.getboolean(section, key)
        if kind == "list":
            return parse_algorithms(raw)
        if kind == "targets":
            return parse_targets(raw)
        return kind(raw)
    except ValueError as error:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {error}",
                          {f"{section}.{key}": raw}) from error


def load_config(path: str, **overrides) -> SweepConfig:
    """Reads a sweep INI file, applies command-line overrides and validates.

    Parameters
    ----------
    path : str
        INI file; sections are [case], [sweep], [solver], [output] and [run].
    overrides
        SweepConfig fields; None values are ignored.

    Return
    ------
    SweepConfig
    """
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as handle:
            parser.read_file(handle)
    except configparser.Error as error:
        raise ConfigError(f"Cannot parse configuration '{path}': {error}") \
            from error

    allowed = {(section, key) for section, key, _, _ in _SCHEMA}
    for section in parser.sections():
        for key in parser[section]:
            if (section, key) not in allowed:
                raise ConfigError(f"Unknown configuration key [{section}] {key}.",
                                  {f"{section}.{key}": parser[section][key]})

    values = {}
    for section, key, name, kind in _SCHEMA:
        if parser.has_option(section, key):
            value = _convert(parser, section, key, kind)
            if value is not None:
                values[name] = value
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "case_path" not in values:
        raise ConfigError("The configuration lacks [case] path.",
                          {"case.path": "missing"})
    logger.debug("Loaded sweep configuration from %s.", path)
    return SweepConfig(**values).validate()
