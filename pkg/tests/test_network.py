import os
import unittest
from unittest.mock import patch

import numpy as np

from fdiflow import build_injection_model, load_case, parse_case, physical_flows
from fdiflow.exceptions import (DimensionMismatchError, DisconnectedNetworkError,
                                PowerImbalanceError)

STATICS = os.path.join(os.path.dirname(__file__), "__statics")

ISLANDED = """mpc.baseMVA = 100;
mpc.bus = [
    1 3 0  0 0 0 1 1 0 230 1 1.1 0.9;
    2 1 50 0 0 0 1 1 0 230 1 1.1 0.9;
    3 1 20 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
    1 0 0 0 0 1 100 1 100 0;
];
mpc.branch = [
    1 2 0 0.1 0 100 0 0 0 0 1 -360 360;
];
mpc.gencost = [
    2 0 0 2 10 0;
];
"""


class TestInjectionModel(unittest.TestCase):
    def setUp(self) -> None:
        self.case = load_case(os.path.join(STATICS, "case3.m"))
        self.model = build_injection_model(self.case)

    def test_dimensions(self) -> None:
        self.assertEqual(self.model.n_buses(), 3)
        self.assertEqual(self.model.n_branches(), 3)
        self.assertEqual(self.model.n_generators(), 2)
        self.assertEqual(self.model.get_slack_index(), 0)

    def test_ptdf_triangle(self) -> None:
        expected = np.array([[0.0, -2 / 3, -1 / 3],
                             [0.0, -1 / 3, -2 / 3],
                             [0.0, 1 / 3, -1 / 3]])
        np.testing.assert_allclose(self.model.get_ptdf(), expected, atol=1e-12)

    def test_b_bus(self) -> None:
        expected = np.array([[20.0, -10.0, -10.0],
                             [-10.0, 20.0, -10.0],
                             [-10.0, -10.0, 20.0]])
        np.testing.assert_allclose(self.model.get_b_bus().toarray(), expected)
        np.testing.assert_allclose(self.model.get_h_inj().toarray(), expected)

    def test_physical_flows(self) -> None:
        flows = physical_flows(self.model, np.array([1.2, 0.3]),
                               self.case.get_loads())
        np.testing.assert_allclose(flows, [0.3, 0.9, 0.6], atol=1e-12)

    def test_power_imbalance(self) -> None:
        with self.assertRaises(PowerImbalanceError):
            physical_flows(self.model, np.array([1.0, 0.3]),
                           self.case.get_loads())

    def test_dimension_mismatch(self) -> None:
        with self.assertRaises(DimensionMismatchError):
            physical_flows(self.model, np.array([1.5]), self.case.get_loads())

    def test_angles_reference_slack(self) -> None:
        theta = self.model.solve_angles(np.array([1.5, 0.0, -1.5]))
        self.assertEqual(theta[0], 0.0)
        np.testing.assert_allclose(self.model.get_b_bus() @ theta,
                                   [1.5, 0.0, -1.5], atol=1e-12)

    def test_branch_index(self) -> None:
        self.assertEqual(self.model.branch_index(2), 1)
        with self.assertRaises(ValueError):
            self.model.branch_index(99)

    def test_disconnected(self) -> None:
        with self.assertRaises(DisconnectedNetworkError) as context:
            build_injection_model(parse_case(ISLANDED))
        self.assertEqual(len(context.exception.islands), 2)


class TestPtdfEquivalence(unittest.TestCase):
    def check_case(self, name: str, default_rating: float = None) -> None:
        case = load_case(os.path.join(STATICS, name), default_rating)
        model = build_injection_model(case)
        rng = np.random.default_rng(7)
        ptdf = model.get_ptdf()
        b_branch = model.get_b_branch()
        worst = 0.0
        for _ in range(100):
            injection = rng.normal(size=case.n_buses())
            injection -= injection.mean()
            theta = np.linalg.lstsq(model.get_b_bus().toarray(), injection,
                                    rcond=None)[0]
            theta -= theta[model.get_slack_index()]
            worst = max(worst, float(np.max(np.abs(
                ptdf @ injection - b_branch @ theta))))
        self.assertLessEqual(worst, 1e-8)

    def test_case14(self) -> None:
        self.check_case("case14.m")

    def test_case24(self) -> None:
        self.check_case("case24_ieee_rts.m")

    def test_case118(self) -> None:
        self.check_case("case118.m", default_rating=1000.0)

    def test_rows_on_demand(self) -> None:
        case = load_case(os.path.join(STATICS, "case14.m"))
        dense = build_injection_model(case)
        with patch("fdiflow.network.DENSE_PTDF_LIMIT", 2):
            sparse = build_injection_model(case)
        self.assertFalse(sparse.is_dense())
        for k in range(case.n_branches()):
            np.testing.assert_allclose(sparse.get_ptdf_row(k),
                                       dense.get_ptdf()[k], atol=1e-10)
        injection = np.linspace(-1.0, 1.0, case.n_buses())
        injection -= injection.mean()
        np.testing.assert_allclose(sparse.branch_flows(injection),
                                   dense.branch_flows(injection), atol=1e-10)

    def test_slack_choice_leaves_flows_unchanged(self) -> None:
        path = os.path.join(STATICS, "case14.m")
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
        moved = parse_case(text.replace("\n\t1\t3\t", "\n\t1\t2\t")
                               .replace("\n\t8\t2\t", "\n\t8\t3\t"), "case14")
        original = build_injection_model(load_case(path))
        relocated = build_injection_model(moved)
        self.assertEqual(relocated.get_slack_bus(), 8)
        np.testing.assert_allclose(
            relocated.get_ptdf()[:, relocated.get_slack_index()], 0.0)
        rng = np.random.default_rng(3)
        for _ in range(20):
            injection = rng.normal(size=moved.n_buses())
            injection -= injection.mean()
            np.testing.assert_allclose(relocated.branch_flows(injection),
                                       original.branch_flows(injection),
                                       atol=1e-10)


if __name__ == '__main__':
    unittest.main()
