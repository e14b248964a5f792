"""Command line of fdiflow.

    fdiflow assess sweep.ini [--algorithms A1,A3] [--targets 11,23] ...
    fdiflow verify case24_ieee_rts.m attack.json [--noise 0.01 --seed 3]
    fdiflow case case14.m [--output case14.json]

Exit codes: 0 success, 1 computation failure, 2 configuration error,
3 case error, 4 I/O error.
"""
import argparse
import logging
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .attack_model import read_attack_descriptor
from .attack_opt import AttackProblemSpec, verify_attack
from .case_io import load_case, save_case
from .config import SweepConfig, load_config, parse_algorithms, parse_targets
from .dcopf import baseline_dcopf
from .element import banner
from .exceptions import (CaseSyntaxError, CaseValidationError, ConfigError,
                         DisconnectedNetworkError, FdiflowError,
                         UnsupportedFeatureError)
from .network import build_injection_model
from .solver import backend_by_name, register_external_backend
from .state_estimation import (apply_attack, bad_data_test,
                               simulate_measurements, wls_estimate)
from .sweep import run_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_CASE = 3
EXIT_IO = 4
CASE_ERRORS = (CaseSyntaxError, CaseValidationError, UnsupportedFeatureError,
               DisconnectedNetworkError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdiflow",
        description="Line overflow vulnerability of DC power networks to "
                    "false data injection attacks.",
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true",
                           help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true",
                           help="warnings only")
    verbs = parser.add_subparsers(dest="verb", required=True)

    assess = verbs.add_parser("assess", help="run a vulnerability sweep")
    assess.add_argument("config", help="sweep INI file")
    assess.add_argument("--case", dest="case_path", help="case file")
    assess.add_argument("--default-rating", type=float)
    assess.add_argument("--algorithms", type=parse_algorithms,
                        help="comma separated subset of original,A1,A2,A3")
    assess.add_argument("--targets", type=parse_targets,
                        help="'critical' or comma separated line ids")
    assess.add_argument("--n1-start", type=float)
    assess.add_argument("--n1-stop", type=float)
    assess.add_argument("--n1-step", type=float)
    assess.add_argument("--load-shift", type=float)
    assess.add_argument("--sigma", type=float)
    assess.add_argument("--critical-threshold", type=float)
    assess.add_argument("--backend", choices=["native", "scipy"])
    assess.add_argument("--gap-tolerance", type=float)
    assess.add_argument("--node-limit", type=int)
    assess.add_argument("--time-limit", type=float)
    assess.add_argument("-j", "--parallelism", type=int)
    assess.add_argument("-o", "--output", dest="output_dir",
                        help="output directory")
    assess.add_argument("--record-timings", action="store_true", default=None)
    assess.add_argument("--no-plot-data", dest="plot_data",
                        action="store_false", default=None)
    assess.add_argument("--seed", type=int)
    assess.add_argument("--noise", dest="noise_stddev", type=float)
    assess.add_argument("--alpha", type=float)

    verify = verbs.add_parser("verify", help="replay an attack descriptor")
    verify.add_argument("case", help="case file")
    verify.add_argument("attack", help="JSON attack descriptor")
    verify.add_argument("--default-rating", type=float)
    verify.add_argument("--backend", choices=["native", "scipy"],
                        default="native")
    verify.add_argument("--noise", type=float, default=0.0,
                        help="measurement noise standard deviation (pu)")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--alpha", type=float, default=0.05)

    case = verbs.add_parser("case", help="parse, validate and convert a case")
    case.add_argument("case", help="case file (.m or .json)")
    case.add_argument("--default-rating", type=float)
    case.add_argument("-o", "--output", help="write the canonical JSON form")
    return parser


_ASSESS_OVERRIDES = ("case_path", "default_rating", "algorithms", "targets",
                     "n1_start", "n1_stop", "n1_step", "load_shift", "sigma",
                     "critical_threshold", "backend", "gap_tolerance",
                     "node_limit", "time_limit", "parallelism", "output_dir",
                     "record_timings", "plot_data", "seed", "noise_stddev",
                     "alpha")


def _assess(args: argparse.Namespace) -> int:
    overrides = {key: getattr(args, key) for key in _ASSESS_OVERRIDES}
    config: SweepConfig = load_config(args.config, **overrides)
    report = run_sweep(config)
    report.get_info()
    return EXIT_OK


def _verify(args: argparse.Namespace) -> int:
    if args.backend != "native":
        register_external_backend(backend_by_name(args.backend))
    case = load_case(args.case, default_rating=args.default_rating)
    descriptor = read_attack_descriptor(args.attack, case)
    vector = descriptor.vector
    model = build_injection_model(case)
    spec = AttackProblemSpec(target_line=descriptor.target_line,
                             n1=vector.get_sparsity_budget(),
                             load_shift=vector.get_load_shift_limit())
    verification = verify_attack(case, model, spec, vector)

    baseline = baseline_dcopf(case, model)
    clean = simulate_measurements(model, baseline.dispatch, case.get_loads(),
                                  args.noise, args.seed)
    attacked = apply_attack(clean, vector)
    clean_estimate = wls_estimate(clean)
    attacked_estimate = wls_estimate(attacked)
    shift_error = float(np.max(np.abs(
        attacked_estimate.x_hat - clean_estimate.x_hat - vector.get_c())))
    verdict = bad_data_test(attacked_estimate, attacked, args.alpha)

    checks = verification.checks
    print(banner("ATTACK VERIFICATION", [
        ("TARGET LINE", verification.target_line),
        ("PHYSICAL FLOW", f"{verification.physical_flow:.6f} pu"),
        ("OVERFLOW RATIO", f"{verification.overflow_ratio:.6f}"),
        ("CONSTRAINTS", "satisfied" if checks.passed
         else "; ".join(checks.violations)),
        ("RESIDUAL CHANGE",
         f"{attacked_estimate.objective - clean_estimate.objective:.3e}"),
        ("STATE SHIFT ERROR", f"{shift_error:.3e}"),
        ("BAD DATA TEST", "passed" if verdict.passed else "detected")]))
    return EXIT_OK


def _case(args: argparse.Namespace) -> int:
    case = load_case(args.case, default_rating=args.default_rating)
    build_injection_model(case)
    case.get_info()
    if args.output:
        save_case(case, args.output)
        logger.info("Wrote %s.", args.output)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else \
        logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    handlers = {"assess": _assess, "verify": _verify, "case": _case}
    try:
        return handlers[args.verb](args)
    except ConfigError as error:
        logger.error("%s", error)
        return EXIT_CONFIG
    except CASE_ERRORS as error:
        logger.error("Case error: %s", error)
        return EXIT_CASE
    except OSError as error:
        logger.error("I/O error: %s", error)
        return EXIT_IO
    except (FdiflowError, ValueError) as error:
        logger.error("%s", error)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
