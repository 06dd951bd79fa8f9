#!/usr/bin/env python3
"""
Command line test suite
Runs each subcommand through main() and checks outputs and byte-identical reruns.
"""

import json
import sys
import tempfile
import unittest
from pathlib import Path

from main import main
from src.graph import load_edge_list
from src.harness import REPORT_COLUMNS, parse_report

EXPERIMENT = {
    "network": {"model": "ER", "n": 50, "seed": 4, "params": {"p": 0.06}},
    "model": {"kind": "ugander_mult", "seed": 9},
    "methods": ["BER+dim", "RI+rdim", "AWRI+rmat"],
    "replications": 8,
    "seed": 21,
    "selection": {"n_pre": 40, "candidates": ["degree^-1", "degree^1"]},
    "scaling": {"grid": [40, 60]},
}


class TestCommandLine(unittest.TestCase):
    """Subcommands end to end"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.config = self.dir / "experiment.json"
        self.config.write_text(json.dumps(EXPERIMENT), encoding="utf-8")

    def tearDown(self):
        self.tmp.cleanup()

    def run_twice(self, *args: str) -> str:
        """Run a subcommand twice into separate files and require identical bytes"""
        outputs = []
        for k in range(2):
            out = self.dir / f"out_{k}.txt"
            self.assertEqual(main([*args, "--config", str(self.config), "--out", str(out),
                                  "--log-level", "WARNING"]), 0)
            outputs.append(out.read_bytes())
        self.assertEqual(outputs[0], outputs[1])
        return outputs[0].decode("utf-8")

    def write_network(self) -> Path:
        path = self.dir / "net.txt"
        self.assertEqual(main(["generate-network", "--model", "BA", "--n", "40", "--seed", "3",
                               "--out", str(path), "--log-level", "WARNING"]), 0)
        return path

    def test_generate_network(self):
        text = self.run_twice("generate-network", "--seed", "5")
        g = load_edge_list(text)
        self.assertEqual(g.n, 50)
        self.assertTrue(text.startswith("# n=50\n"))

    def test_isolate(self):
        network = self.write_network()
        text = self.run_twice("isolate", "--network", str(network), "--weights", "degree^-1")
        lines = text.splitlines()
        self.assertEqual(lines[0], "order,unit")
        self.assertGreaterEqual(len(lines), 2)

    def test_select_weight(self):
        text = self.run_twice("select-weight", "--candidates", "degree^0", "degree^2",
                              "--n-pre", "100", "--mode", "no_cr")
        lines = text.splitlines()
        self.assertEqual(lines[0], "candidate,m_l,se,n_draws,chosen")
        self.assertEqual(len(lines), 3)

    def test_assign_designs(self):
        for design in ("cr", "mpr", "bernoulli"):
            text = self.run_twice("assign", "--design", design)
            lines = text.splitlines()
            self.assertEqual(lines[0], "unit,z,arm")
            self.assertEqual(len(lines), 51, design)

    def test_simulate(self):
        text = self.run_twice("simulate", "--replications", "6")
        summaries = parse_report(text)
        self.assertEqual(text.splitlines()[0], ",".join(REPORT_COLUMNS))
        self.assertEqual([s.method for s in summaries], EXPERIMENT["methods"])
        self.assertTrue(all(s.R == 6 for s in summaries))

    def test_simulate_markdown(self):
        text = self.run_twice("simulate", "--format", "markdown")
        self.assertIn("MSE / Bias² / Var", text)

    def test_scaling(self):
        summaries = parse_report(self.run_twice("scaling", "--replications", "4"))
        self.assertEqual(sorted({s.n for s in summaries}), [40, 60])

    def test_failures_return_one(self):
        self.assertEqual(main(["simulate", "--config", str(self.dir / "absent.json"),
                               "--log-level", "ERROR"]), 1)
        self.assertEqual(main(["isolate", "--network", str(self.dir / "absent.txt"),
                               "--log-level", "ERROR"]), 1)
        bad = self.dir / "bad.txt"
        bad.write_text("0 0\n", encoding="utf-8")
        self.assertEqual(main(["isolate", "--network", str(bad), "--log-level", "ERROR"]), 1)

    def test_unknown_subcommand(self):
        with self.assertRaises(SystemExit):
            main(["plot"])


def main_tests():
    """Run the command line test suite"""
    print("Command Line Test Suite")
    print("=" * 50)
    test_suite = unittest.TestLoader().loadTestsFromTestCase(TestCommandLine)
    result = unittest.TextTestRunner(verbosity=2).run(test_suite)
    return 0 if result.wasSuccessful() else 1


if __name__ == "__main__":
    sys.exit(main_tests())
