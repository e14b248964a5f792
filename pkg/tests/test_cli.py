import json
import os
import tempfile
import unittest
from unittest.mock import patch

from fdiflow.cli import (EXIT_CASE, EXIT_CONFIG, EXIT_IO, EXIT_OK,
                         build_parser, main)

STATICS = os.path.join(os.path.dirname(__file__), "__statics")
CASE5 = os.path.join(STATICS, "case5.m")


class TestParser(unittest.TestCase):
    def test_assess_overrides(self) -> None:
        args = build_parser().parse_args(
            ["assess", "sweep.ini", "--algorithms", "A1,A3", "--targets",
             "4, 5", "-j", "2", "--no-plot-data"])
        self.assertListEqual(args.algorithms, ["A1", "A3"])
        self.assertListEqual(args.targets, [4, 5])
        self.assertEqual(args.parallelism, 2)
        self.assertFalse(args.plot_data)
        self.assertIsNone(args.record_timings)
        self.assertIsNone(args.n1_stop)

    def test_verb_required(self) -> None:
        with patch("sys.stderr"):
            with self.assertRaises(SystemExit):
                build_parser().parse_args([])


class TestMain(unittest.TestCase):
    def setUp(self) -> None:
        self.directory = tempfile.TemporaryDirectory()

    def tearDown(self) -> None:
        self.directory.cleanup()

    def write(self, name: str, text: str) -> str:
        path = os.path.join(self.directory.name, name)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)
        return path

    @patch("builtins.print")
    def test_case_conversion(self, mock_print) -> None:
        output = os.path.join(self.directory.name, "case5.json")
        self.assertEqual(main(["-q", "case", CASE5, "-o", output]), EXIT_OK)
        with open(output, encoding="utf-8") as handle:
            document = json.load(handle)
        self.assertEqual(len(document["bus"]), 5)
        mock_print.assert_called()

    @patch("builtins.print")
    def test_verify(self, mock_print) -> None:
        code = main(["-q", "verify", CASE5,
                     os.path.join(STATICS, "attack_case5.json")])
        self.assertEqual(code, EXIT_OK)
        banner = mock_print.call_args[0][0]
        self.assertIn("ATTACK VERIFICATION", banner)
        self.assertIn("BAD DATA TEST:", banner)

    @patch("builtins.print")
    def test_assess(self, mock_print) -> None:
        output = os.path.join(self.directory.name, "results")
        code = main(["-q", "assess", os.path.join(STATICS, "sweep_case5.ini"),
                     "--case", CASE5, "--algorithms", "A3", "-o", output])
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(os.path.exists(os.path.join(output, "report.csv")))
        self.assertIn("BOUNDS REPORT", mock_print.call_args[0][0])

    def test_config_error(self) -> None:
        path = self.write("bad.ini", "[case]\npath = grid.m\n"
                                     "[sweep]\nload_shift = 2\n")
        self.assertEqual(main(["-q", "assess", path]), EXIT_CONFIG)

    def test_malformed_attack_descriptor(self) -> None:
        path = self.write("attack.json", '{"target_line": 5, "N1": 0.2,')
        self.assertEqual(main(["-q", "verify", CASE5, path]), EXIT_CONFIG)

    def test_case_error(self) -> None:
        path = self.write("broken.m", "function mpc = broken\n"
                                      "mpc.baseMVA = 100;\nmpc.bus = [\n")
        self.assertEqual(main(["-q", "case", path]), EXIT_CASE)

    def test_missing_file(self) -> None:
        path = os.path.join(self.directory.name, "absent.m")
        self.assertEqual(main(["-q", "case", path]), EXIT_IO)


if __name__ == '__main__':
    unittest.main()
