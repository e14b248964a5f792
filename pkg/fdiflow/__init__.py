from .attack_model import (AttackSubgraph, AttackVector, build_subgraph,
                           check_attack, read_attack_descriptor,
                           write_attack_descriptor)
from .attack_opt import (AttackProblemSpec, AttackResult, BigMPolicy,
                         algorithm1, algorithm2, algorithm3, build_attack_milp,
                         solve_original, verify_attack)
from .case_io import GridCase, load_case, parse_case, save_case, serialize_case
from .config import SweepConfig, load_config
from .dcopf import (DispatchSolution, baseline_dcopf, build_dcopf,
                    critical_lines, marginal_generators, post_attack_dcopf,
                    solve_dcopf)
from .network import InjectionModel, build_injection_model, physical_flows
from .report import BoundsReport, emit_plot_data, plot_bounds
from .solver import (LinearProgram, MilpProgram, SolverConfig, SolveResult,
                     register_external_backend, reset_backend, solve_lp,
                     solve_milp, write_mps)
from .state_estimation import (MeasurementSet, apply_attack, bad_data_test,
                               simulate_measurements, wls_estimate)
from .sweep import run_sweep

__version__ = "0.1.0"
