import math
import os
import tempfile
import unittest

from fdiflow import SweepConfig, load_config
from fdiflow.config import parse_targets
from fdiflow.exceptions import ConfigError

STATICS = os.path.join(os.path.dirname(__file__), "__statics")
SWEEP_INI = os.path.join(STATICS, "sweep_case5.ini")


def write_ini(directory: str, text: str) -> str:
    path = os.path.join(directory, "sweep.ini")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)
    return path


class TestLoadConfig(unittest.TestCase):
    def test_fixture(self) -> None:
        config = load_config(SWEEP_INI)
        self.assertEqual(config.case_path, "tests/__statics/case5.m")
        self.assertListEqual(config.algorithms, ["A1", "A2", "A3"])
        self.assertListEqual(config.targets, [5])
        self.assertListEqual(config.n1_grid(), [0.0, 0.1, 0.2])
        self.assertEqual(config.backend, "native")
        self.assertEqual(config.node_limit, 20000)
        self.assertTrue(math.isinf(config.time_limit))
        self.assertFalse(config.record_timings)
        self.assertTrue(config.plot_data)
        self.assertEqual(config.parallelism, 1)
        self.assertIsNone(config.default_rating)

    def test_overrides(self) -> None:
        config = load_config(SWEEP_INI, backend="scipy", n1_stop=0.5,
                             parallelism=None)
        self.assertEqual(config.backend, "scipy")
        self.assertEqual(len(config.n1_grid()), 6)
        self.assertEqual(config.parallelism, 1)

    def test_minimal_file(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            config = load_config(write_ini(directory,
                                           "[case]\npath = grid.m\n"))
        self.assertEqual(config.targets, "critical")
        self.assertListEqual(config.algorithms, ["A1", "A2", "A3"])
        self.assertEqual(len(config.n1_grid()), 10)

    def test_unknown_key(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            path = write_ini(directory, "[case]\npath = grid.m\n"
                                        "[sweep]\nbudget = 3\n")
            with self.assertRaises(ConfigError) as context:
                load_config(path)
        self.assertIn("sweep.budget", context.exception.details)

    def test_missing_case(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            path = write_ini(directory, "[sweep]\nn1_stop = 0.5\n")
            with self.assertRaises(ConfigError):
                load_config(path)

    def test_invalid_values(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            path = write_ini(directory, "[case]\npath = grid.m\n"
                                        "[sweep]\nload_shift = 1.5\n"
                                        "algorithms = A1, A7\n"
                                        "[solver]\nbackend = cplex\n")
            with self.assertRaises(ConfigError) as context:
                load_config(path)
        self.assertSetEqual(set(context.exception.details),
                            {"sweep.load_shift", "sweep.algorithms",
                             "solver.backend"})

    def test_unparsable_number(self) -> None:
        with tempfile.TemporaryDirectory() as directory:
            path = write_ini(directory, "[case]\npath = grid.m\n"
                                        "[run]\nseed = many\n")
            with self.assertRaises(ConfigError) as context:
                load_config(path)
        self.assertIn("run.seed", context.exception.details)

    def test_missing_file(self) -> None:
        with self.assertRaises(OSError):
            load_config(os.path.join(STATICS, "absent.ini"))


class TestSweepConfig(unittest.TestCase):
    def test_grid_is_rounded(self) -> None:
        config = SweepConfig(case_path="grid.m", n1_start=0.1, n1_stop=1.0,
                             n1_step=0.1)
        grid = config.n1_grid()
        self.assertEqual(len(grid), 10)
        self.assertEqual(grid[2], 0.3)
        self.assertEqual(grid[-1], 1.0)

    def test_with_overrides(self) -> None:
        config = SweepConfig(case_path="grid.m").with_overrides(seed=7,
                                                                alpha=None)
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.alpha, 0.05)
        with self.assertRaises(ConfigError):
            config.with_overrides(colour="green")

    def test_validate(self) -> None:
        with self.assertRaises(ConfigError):
            SweepConfig(case_path="grid.m", n1_step=0.0).validate()
        with self.assertRaises(ConfigError):
            SweepConfig(case_path="grid.m", targets=[]).validate()
        with self.assertRaises(ConfigError):
            SweepConfig(case_path="grid.m", parallelism=0).validate()

    def test_parse_targets(self) -> None:
        self.assertEqual(parse_targets(" Critical "), "critical")
        self.assertListEqual(parse_targets("3, 7 11"), [3, 7, 11])
        with self.assertRaises(ConfigError):
            parse_targets("3, seven")


if __name__ == '__main__':
    unittest.main()
