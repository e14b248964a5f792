import os
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

from fdiflow import (AttackVector, build_injection_model, build_subgraph,
                     check_attack, load_case, read_attack_descriptor,
                     write_attack_descriptor)
from fdiflow.attack_model import center_buses, cyber_loads, load_bus_ids
from fdiflow.exceptions import (ConfigError, DimensionMismatchError,
                                EmptyAttackError)

STATICS = os.path.join(os.path.dirname(__file__), "__statics")


class TestAttackVector(unittest.TestCase):
    def setUp(self) -> None:
        self.case = load_case(os.path.join(STATICS, "case5.m"))

    def test_from_sparse(self) -> None:
        vector = AttackVector.from_sparse(self.case, {5: 0.004}, 0.1, 0.1)
        np.testing.assert_allclose(vector.get_c(), [0, 0, 0, 0, 0.004])
        self.assertEqual(vector.l0(), 1)
        self.assertDictEqual(vector.to_sparse(self.case), {5: 0.004})

    def test_unknown_bus(self) -> None:
        with self.assertRaises(ValueError):
            AttackVector.from_sparse(self.case, {9: 0.1}, 0.1, 0.1)

    def test_invalid_arguments(self) -> None:
        with self.assertRaises(ValueError):
            AttackVector(np.zeros(5), -0.1, 0.1)
        with self.assertRaises(ValueError):
            AttackVector(np.zeros(5), 0.1, 1.0)
        with self.assertRaises(ValueError):
            AttackVector(np.array([0.0, np.nan, 0, 0, 0]), 0.1, 0.1)
        with self.assertRaises(DimensionMismatchError):
            AttackVector(np.zeros((5, 1)), 0.1, 0.1)

    def test_descriptor_round_trip(self) -> None:
        vector = AttackVector.from_sparse(self.case, {4: -0.002, 5: 0.003},
                                          0.2, 0.1)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "attack.json")
            write_attack_descriptor(path, self.case, 5, vector)
            descriptor = read_attack_descriptor(path, self.case)
        self.assertEqual(descriptor.target_line, 5)
        self.assertEqual(descriptor.vector.get_sparsity_budget(), 0.2)
        np.testing.assert_allclose(descriptor.vector.get_c(), vector.get_c())

    def test_malformed_descriptor(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "attack.json")
            with open(path, "w", encoding="utf-8") as handle:
                handle.write('{"target_line": 5, "N1": ')
            with self.assertRaises(ConfigError):
                read_attack_descriptor(path, self.case)
            with open(path, "w", encoding="utf-8") as handle:
                handle.write('{"target_line": 5, "LS": 0.1}')
            with self.assertRaises(ConfigError) as context:
                read_attack_descriptor(path, self.case)
            self.assertIn("N1", context.exception.details)

    def test_descriptor_fixture(self) -> None:
        descriptor = read_attack_descriptor(
            os.path.join(STATICS, "attack_case5.json"), self.case)
        self.assertEqual(descriptor.vector.l0(), 0)
        self.assertEqual(descriptor.vector.get_load_shift_limit(), 0.1)


class TestAttackChecks(unittest.TestCase):
    def setUp(self) -> None:
        self.case = load_case(os.path.join(STATICS, "case5.m"))
        self.model = build_injection_model(self.case)

    def test_load_buses(self) -> None:
        self.assertListEqual(load_bus_ids(self.case), [2, 3, 4, 5])

    def test_cyber_loads(self) -> None:
        vector = AttackVector.from_sparse(self.case, {5: 0.005}, 0.1, 0.1)
        np.testing.assert_allclose(cyber_loads(vector, self.case, self.model),
                                   [0.0, 1.0, 0.85, 1.25, 0.9], atol=1e-12)

    def test_valid_attack(self) -> None:
        vector = AttackVector.from_sparse(self.case, {5: 0.005}, 0.1, 0.1)
        report = check_attack(vector, self.case, self.model)
        self.assertTrue(report.passed)
        self.assertAlmostEqual(report.l1_usage, 0.005)
        self.assertEqual(report.center_bus_count, 1)
        self.assertTupleEqual(report.subgraph_size, (3, 2))

    def test_load_shift_violation(self) -> None:
        vector = AttackVector.from_sparse(self.case, {5: 0.01}, 0.1, 0.1)
        report = check_attack(vector, self.case, self.model)
        self.assertFalse(report.passed)
        self.assertListEqual(report.violating_buses, [3, 5])

    def test_budget_violation(self) -> None:
        vector = AttackVector.from_sparse(self.case, {5: 0.005}, 0.001, 0.1)
        report = check_attack(vector, self.case, self.model)
        self.assertFalse(report.passed)
        self.assertIn("exceeds N1", report.violations[0])

    def test_slack_perturbation(self) -> None:
        vector = AttackVector.from_sparse(self.case, {1: 0.001}, 0.1, 0.1)
        report = check_attack(vector, self.case, self.model)
        self.assertFalse(report.passed)
        self.assertIsNone(report.subgraph_size)

    def test_wrong_length(self) -> None:
        with self.assertRaises(DimensionMismatchError):
            check_attack(AttackVector(np.zeros(3), 0.1, 0.1), self.case,
                         self.model)


class TestAttackSubgraph(unittest.TestCase):
    def setUp(self) -> None:
        self.case = load_case(os.path.join(STATICS, "case5.m"))

    def test_load_boundary(self) -> None:
        vector = AttackVector.from_sparse(self.case, {5: 0.005}, 0.1, 0.1)
        subgraph = build_subgraph(vector, self.case)
        self.assertSetEqual(subgraph.get_buses(), {3, 4, 5})
        self.assertSetEqual(subgraph.get_branches(), {4, 5})
        self.assertEqual(subgraph.get_rounds(), 0)
        self.assertFalse(subgraph.is_full_network())

    def test_expands_through_non_load_bus(self) -> None:
        vector = AttackVector.from_sparse(self.case, {2: 0.001}, 0.1, 0.1)
        subgraph = build_subgraph(vector, self.case)
        self.assertSetEqual(subgraph.get_buses(), {1, 2, 3, 4})
        self.assertSetEqual(subgraph.get_branches(), {1, 2, 3, 6})
        self.assertEqual(subgraph.get_rounds(), 1)

    def test_full_network(self) -> None:
        case = load_case(os.path.join(STATICS, "case3.m"))
        vector = AttackVector.from_sparse(case, {3: 0.001}, 0.1, 0.1)
        with self.assertLogs("fdiflow.attack_model", level="WARNING"):
            subgraph = build_subgraph(vector, case)
        self.assertTrue(subgraph.is_full_network())

    def test_empty_attack(self) -> None:
        with self.assertRaises(EmptyAttackError):
            build_subgraph(AttackVector.zeros(self.case), self.case)

    def test_center_buses_ignore_tiny_entries(self) -> None:
        vector = AttackVector.from_sparse(self.case, {2: 1e-12, 4: 0.002},
                                          0.1, 0.1)
        self.assertSetEqual(center_buses(vector, self.case), {4})

    @patch("fdiflow.attack_model.Graph")
    def test_get_graph(self, mock_graph) -> None:
        vector = AttackVector.from_sparse(self.case, {5: 0.005}, 0.1, 0.1)
        build_subgraph(vector, self.case).get_graph(self.case)

        mock_graph.assert_called()


if __name__ == '__main__':
    unittest.main()
