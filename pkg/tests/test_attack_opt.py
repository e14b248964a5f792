import os
import unittest

import numpy as np

from fdiflow import (AttackProblemSpec, algorithm1, algorithm2, algorithm3,
                     baseline_dcopf, build_injection_model, check_attack,
                     critical_lines, load_case, parse_case,
                     register_external_backend, reset_backend, solve_milp,
                     solve_original, verify_attack)
from fdiflow.attack_opt import (BigMPolicy, ReductionState, build_attack_milp,
                                build_bound_lp, initial_state)
from fdiflow.exceptions import ReductionError
from fdiflow.solver import backend_by_name

STATICS = os.path.join(os.path.dirname(__file__), "__statics")

SLOW = os.environ.get("FDIFLOW_SLOW_TESTS") == "1"
# MW, for the unrated 118-bus branches
CASE118_RATING = 1000.0


def most_loaded(case, baseline, count):
    loading = np.abs(baseline.flows) / case.get_ratings()
    order = np.argsort(-loading, kind="stable")[:count]
    return [case.get_branches()[k].id for k in order]


class TestAttackProblemSpec(unittest.TestCase):
    def test_defaults(self) -> None:
        spec = AttackProblemSpec(target_line=5, n1=0.2)
        self.assertEqual(spec.load_shift, 0.1)
        self.assertEqual(spec.sigma, 1e-4)
        self.assertIsNone(spec.flow_sign)
        self.assertEqual(spec.max_iterations, 20)

    def test_invalid_values(self) -> None:
        with self.assertRaises(ValueError):
            AttackProblemSpec(target_line=5, n1=-0.1)
        with self.assertRaises(ValueError):
            AttackProblemSpec(target_line=5, n1=float("nan"))
        with self.assertRaises(ValueError):
            AttackProblemSpec(target_line=5, n1=0.1, load_shift=1.0)
        with self.assertRaises(ValueError):
            AttackProblemSpec(target_line=5, n1=0.1, sigma=0.0)
        with self.assertRaises(ValueError):
            AttackProblemSpec(target_line=5, n1=0.1, flow_sign=2)
        with self.assertRaises(ValueError):
            AttackProblemSpec(target_line=5, n1=0.1, max_iterations=0)

    def test_big_m_escalation(self) -> None:
        policy = BigMPolicy()
        self.assertEqual(policy.escalated().scale, 10.0)
        self.assertEqual(policy.escalated().dual_cap(), 1e4)
        self.assertEqual(policy.generator(0.0, 0.2), 1.0)
        self.assertAlmostEqual(policy.thermal(0.6, np.array([0.5, -0.8]), 4.0),
                               1.2 + 3.2)


class TestFormulation(unittest.TestCase):
    def setUp(self) -> None:
        self.case = load_case(os.path.join(STATICS, "case5.m"))
        self.model = build_injection_model(self.case)
        self.baseline = baseline_dcopf(self.case, self.model)
        self.spec = AttackProblemSpec(target_line=5, n1=0.2, flow_sign=1)

    def test_binary_count(self) -> None:
        state = ReductionState(critical={5}, marginal={0, 1})
        formulation = build_attack_milp(self.case, self.model, self.spec,
                                        state, self.baseline)
        self.assertEqual(formulation.program.n_binaries(), 6)

    def test_empty_state(self) -> None:
        with self.assertRaises(ReductionError):
            build_attack_milp(self.case, self.model, self.spec,
                              ReductionState(critical=set(), marginal={0}),
                              self.baseline)
        with self.assertRaises(ReductionError):
            build_attack_milp(self.case, self.model, self.spec,
                              ReductionState(critical={5}, marginal=set()),
                              self.baseline)

    def test_initial_state_contains_target(self) -> None:
        state = initial_state(self.case, self.model,
                              AttackProblemSpec(target_line=1, n1=0.1),
                              self.baseline, reduce_generators=False)
        self.assertIn(1, state.critical)
        self.assertTrue(set(critical_lines(self.case, self.baseline))
                        <= state.critical)
        self.assertSetEqual(state.marginal, {0, 1})

    def test_bound_lp_needs_orientation(self) -> None:
        with self.assertRaises(ValueError):
            build_bound_lp(self.case, self.model,
                           AttackProblemSpec(target_line=5, n1=0.1))

    def test_unknown_target(self) -> None:
        with self.assertRaises(ValueError):
            algorithm1(self.case, self.model,
                       AttackProblemSpec(target_line=42, n1=0.1))


class TestAttackMethods(unittest.TestCase):
    def setUp(self) -> None:
        self.case = load_case(os.path.join(STATICS, "case5.m"))
        self.model = build_injection_model(self.case)
        self.baseline = baseline_dcopf(self.case, self.model)

    def spec(self, n1: float, target: int = 5) -> AttackProblemSpec:
        return AttackProblemSpec(target_line=target, n1=n1)

    def test_no_budget_is_baseline(self) -> None:
        result = algorithm1(self.case, self.model, self.spec(0.0), self.baseline)
        self.assertEqual(result.status, "optimal")
        k = self.model.branch_index(5)
        self.assertAlmostEqual(result.objective, abs(self.baseline.flows[k]),
                               delta=1e-6)
        self.assertTrue(result.converged)

    def test_reduction_matches_original(self) -> None:
        for n1 in (0.1, 0.2):
            reduced = algorithm1(self.case, self.model, self.spec(n1),
                                 self.baseline)
            original = solve_original(self.case, self.model, self.spec(n1),
                                      self.baseline)
            self.assertEqual(reduced.status, "optimal")
            self.assertEqual(original.status, "optimal")
            self.assertAlmostEqual(reduced.objective, original.objective,
                                   delta=1e-6)
            self.assertLessEqual(reduced.binaries_initial,
                                 original.binaries_initial)

    def test_bounds_bracket_exact_value(self) -> None:
        for n1 in (0.0, 0.1, 0.2):
            exact = algorithm1(self.case, self.model, self.spec(n1),
                               self.baseline)
            lower = algorithm2(self.case, self.model, self.spec(n1),
                               self.baseline)
            bounds = algorithm3(self.case, self.model, self.spec(n1),
                                self.baseline)
            if lower.objective is not None:
                self.assertLessEqual(lower.objective, exact.objective + 1e-6)
            self.assertLessEqual(bounds.objective, exact.objective + 1e-6)
            self.assertLessEqual(exact.objective, bounds.upper_bound + 2e-6)

    def test_attack_satisfies_constraints(self) -> None:
        result = algorithm1(self.case, self.model, self.spec(0.2),
                            self.baseline)
        report = check_attack(result.c, self.case, self.model)
        self.assertTrue(report.passed, report.violations)
        self.assertLessEqual(report.l1_usage, 0.2 + 1e-9)

    def test_verification_reproduces_flow(self) -> None:
        spec = self.spec(0.2)
        result = algorithm1(self.case, self.model, spec, self.baseline)
        verification = verify_attack(self.case, self.model, spec, result.c)
        k = self.model.branch_index(5)
        sign = 1.0 if self.baseline.flows[k] >= 0.0 else -1.0
        self.assertAlmostEqual(sign * verification.physical_flow,
                               result.objective, delta=1e-5)
        self.assertAlmostEqual(verification.overflow_ratio,
                               abs(verification.physical_flow) / 0.6)

    def test_flow_sign_reversed(self) -> None:
        spec = AttackProblemSpec(target_line=5, n1=0.1, flow_sign=-1)
        result = algorithm1(self.case, self.model, spec, self.baseline)
        self.assertEqual(result.status, "optimal")
        forward = algorithm1(self.case, self.model, self.spec(0.1),
                             self.baseline)
        self.assertGreaterEqual(result.objective, -forward.objective - 1e-6)

    def test_monotone_in_budget(self) -> None:
        values = [algorithm1(self.case, self.model, self.spec(n1),
                             self.baseline).objective
                  for n1 in (0.0, 0.1, 0.2)]
        for smaller, larger in zip(values, values[1:]):
            self.assertLessEqual(smaller, larger + 1e-6)

    def test_overflow_ratio(self) -> None:
        result = algorithm1(self.case, self.model, self.spec(0.0),
                            self.baseline)
        self.assertAlmostEqual(result.rating, 0.6)
        self.assertAlmostEqual(result.overflow_ratio, result.objective / 0.6)

    def test_operator_answer_satisfies_kkt(self) -> None:
        state = ReductionState(critical={b.id for b in self.case.get_branches()},
                               marginal=set(range(self.case.n_generators())))
        for n1 in (0.0, 0.1, 0.2):
            formulation = build_attack_milp(self.case, self.model,
                                            self.spec(n1), state, self.baseline)
            result = solve_milp(formulation.program)
            self.assertEqual(result.status, "optimal")
            answer = formulation.operator_solution(result.x, self.case,
                                                   self.model)
            # duals are compared in units of the largest generator cost
            for name, value in answer.residuals(self.case, self.model).items():
                self.assertLess(value / formulation.cost_scale, 1e-5, name)
            np.testing.assert_allclose(
                answer.loads, self.case.get_loads() - self.model.get_h_inj() @
                formulation.attack_state(result.x, self.case.n_buses()))

    def test_small_dual_cap_escalates_when_infeasible(self) -> None:
        # stationarity needs alpha_plus_0 + alpha_minus_1 = 1/3 + 1/3, which
        # no pair of duals capped at 0.1 reaches
        spec = AttackProblemSpec(target_line=5, n1=0.0,
                                 big_m=BigMPolicy(dual=0.1))
        with self.assertLogs("fdiflow.attack_opt", level="INFO") as logs:
            result = algorithm1(self.case, self.model, spec, self.baseline)
        self.assertTrue(any("infeasible" in line for line in logs.output))
        self.assertEqual(result.status, "optimal")
        self.assertAlmostEqual(result.objective, 0.1, delta=1e-6)

    def test_saturated_dual_cap_escalates(self) -> None:
        spec = AttackProblemSpec(target_line=5, n1=0.0,
                                 big_m=BigMPolicy(dual=0.3334))
        with self.assertLogs("fdiflow.attack_opt", level="INFO") as logs:
            result = solve_original(self.case, self.model, spec, self.baseline)
        self.assertTrue(any("saturated" in line for line in logs.output))
        self.assertEqual(result.status, "optimal")
        self.assertAlmostEqual(result.objective, 0.1, delta=1e-6)
        reference = solve_original(self.case, self.model, self.spec(0.0),
                                   self.baseline)
        self.assertAlmostEqual(result.objective, reference.objective,
                               delta=1e-6)


class TestTriangleAttack(unittest.TestCase):
    def test_single_load_bus_has_no_room(self) -> None:
        # the neighbours of the only load bus carry no load, so every
        # perturbation is pinned to zero
        case = load_case(os.path.join(STATICS, "case3.m"))
        model = build_injection_model(case)
        result = algorithm1(case, model, AttackProblemSpec(target_line=2, n1=0.5))
        self.assertEqual(result.status, "optimal")
        report = check_attack(result.c, case, model)
        self.assertTrue(report.passed, report.violations)
        self.assertLessEqual(result.objective, 0.9 + 1e-6)


class TestSlackInvariance(unittest.TestCase):
    def test_moving_slack_between_generator_buses(self) -> None:
        # buses 1 and 8 carry no load, so c is zero on both either way
        path = os.path.join(STATICS, "case14.m")
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
        cases = [load_case(path),
                 parse_case(text.replace("\n\t1\t3\t", "\n\t1\t2\t")
                                .replace("\n\t8\t2\t", "\n\t8\t3\t"), "case14")]
        models = [build_injection_model(case) for case in cases]
        baselines = [baseline_dcopf(case, model)
                     for case, model in zip(cases, models)]
        np.testing.assert_allclose(baselines[1].flows, baselines[0].flows,
                                   atol=1e-7)
        for target in most_loaded(cases[0], baselines[0], 2):
            for n1 in (0.1, 0.3):
                spec = AttackProblemSpec(target_line=target, n1=n1)
                exact = [algorithm1(case, model, spec, baseline)
                         for case, model, baseline in
                         zip(cases, models, baselines)]
                bounds = [algorithm3(case, model, spec, baseline)
                          for case, model, baseline in
                          zip(cases, models, baselines)]
                self.assertAlmostEqual(exact[1].objective, exact[0].objective,
                                       delta=1e-6)
                self.assertAlmostEqual(bounds[1].upper_bound,
                                       bounds[0].upper_bound, delta=1e-6)


class TestCongestedReliabilityTestSystem(unittest.TestCase):
    def setUp(self) -> None:
        self.case = load_case(os.path.join(STATICS, "case24_congested.m"))
        self.model = build_injection_model(self.case)
        self.baseline = baseline_dcopf(self.case, self.model)

    def test_base_dispatch_binds_line_7_8(self) -> None:
        k = self.model.branch_index(11)
        self.assertAlmostEqual(self.baseline.flows[k], 1.4, delta=1e-6)
        self.assertGreater(self.baseline.f_plus[k], 0.0)
        self.assertIn(11, critical_lines(self.case, self.baseline))


@unittest.skipUnless(SLOW, "set FDIFLOW_SLOW_TESTS=1 to run")
class TestReliabilityTestSystem(unittest.TestCase):
    def setUp(self) -> None:
        register_external_backend(backend_by_name("scipy"))
        self.case = load_case(os.path.join(STATICS, "case24_congested.m"))
        self.model = build_injection_model(self.case)
        self.baseline = baseline_dcopf(self.case, self.model)

    def tearDown(self) -> None:
        reset_backend()

    def test_line_7_8_overflows(self) -> None:
        # bus 7 is radial: inflating its apparent load by the 12.5 MW shift
        # limit lets the unit there return to 277.4 MW or more, capped at
        # 140 + 137.5 MW by the line 7-8 row seen by the operator
        spec = AttackProblemSpec(target_line=11, n1=0.5)
        result = algorithm1(self.case, self.model, spec, self.baseline)
        self.assertEqual(result.status, "optimal")
        verification = verify_attack(self.case, self.model, spec, result.c)
        self.assertTrue(verification.checks.passed,
                        verification.checks.violations)
        self.assertGreater(verification.overflow_ratio, 1.0)
        self.assertGreaterEqual(verification.overflow_ratio, 1.524 / 1.4 - 1e-4)
        self.assertLessEqual(verification.overflow_ratio, 1.525 / 1.4 + 1e-4)

    def test_reduction_matches_original(self) -> None:
        targets = [11, 23, 28]
        for target in targets:
            for n1 in (0.2, 0.5, 1.0):
                spec = AttackProblemSpec(target_line=target, n1=n1)
                reduced = algorithm1(self.case, self.model, spec, self.baseline)
                original = solve_original(self.case, self.model, spec,
                                          self.baseline)
                self.assertEqual(reduced.status, "optimal")
                self.assertEqual(original.status, "optimal")
                self.assertAlmostEqual(reduced.objective, original.objective,
                                       delta=1e-5, msg=f"line {target}, N1 {n1}")


class TestLargeCase(unittest.TestCase):
    def setUp(self) -> None:
        self.case = load_case(os.path.join(STATICS, "case118.m"),
                              default_rating=CASE118_RATING)
        self.model = build_injection_model(self.case)

    def test_dimensions(self) -> None:
        self.assertEqual(self.case.n_buses(), 118)
        self.assertEqual(self.case.n_branches(), 186)
        self.assertEqual(self.case.n_generators(), 54)
        self.assertEqual(self.case.get_slack_bus(), 69)
        self.assertAlmostEqual(self.case.get_loads().sum(), 42.42)

    def test_binary_counts(self) -> None:
        baseline = baseline_dcopf(self.case, self.model)
        target = most_loaded(self.case, baseline, 1)[0]
        spec = AttackProblemSpec(target_line=target, n1=0.2)
        full = ReductionState(critical={b.id for b in self.case.get_branches()},
                              marginal=set(range(self.case.n_generators())))
        formulation = build_attack_milp(self.case, self.model, spec, full,
                                        baseline)
        self.assertEqual(formulation.program.n_binaries(), 480)

        reduced = initial_state(self.case, self.model, spec, baseline,
                                reduce_generators=False)
        self.assertEqual(reduced.n_binaries(), 2 * len(reduced.critical) + 108)
        formulation = build_attack_milp(self.case, self.model, spec, reduced,
                                        baseline)
        self.assertEqual(formulation.program.n_binaries(), reduced.n_binaries())

        smallest = initial_state(self.case, self.model, spec, baseline,
                                 reduce_generators=True)
        self.assertEqual(smallest.n_binaries(),
                         2 * len(smallest.critical) + 2 * len(smallest.marginal))
        self.assertLess(smallest.n_binaries(), reduced.n_binaries())


@unittest.skipUnless(SLOW, "set FDIFLOW_SLOW_TESTS=1 to run")
class TestLargeCaseAttacks(unittest.TestCase):
    def setUp(self) -> None:
        register_external_backend(backend_by_name("scipy"))
        self.case = load_case(os.path.join(STATICS, "case118.m"),
                              default_rating=CASE118_RATING)
        self.model = build_injection_model(self.case)
        self.baseline = baseline_dcopf(self.case, self.model)

    def tearDown(self) -> None:
        reset_backend()

    def test_bounds_are_ordered_and_monotone(self) -> None:
        for target in most_loaded(self.case, self.baseline, 3):
            previous = -np.inf
            for n1 in (0.2, 0.5, 1.0):
                spec = AttackProblemSpec(target_line=target, n1=n1)
                exact = algorithm1(self.case, self.model, spec, self.baseline)
                lower = algorithm2(self.case, self.model, spec, self.baseline)
                bounds = algorithm3(self.case, self.model, spec, self.baseline)
                message = f"line {target}, N1 {n1}"
                self.assertEqual(exact.status, "optimal", message)
                self.assertTrue(exact.converged, message)
                self.assertLess(exact.binaries_final, 480, message)
                if lower.objective is not None:
                    self.assertLessEqual(lower.objective,
                                         exact.objective + 1e-5, message)
                self.assertLessEqual(bounds.objective, exact.objective + 1e-5,
                                     message)
                self.assertLessEqual(exact.objective,
                                     bounds.upper_bound + 1e-5, message)
                self.assertGreaterEqual(exact.objective, previous - 1e-5,
                                        message)
                previous = exact.objective


if __name__ == '__main__':
    unittest.main()
