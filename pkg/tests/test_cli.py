import unittest
import sys
import os
import io
import json
import tempfile
from contextlib import redirect_stderr, redirect_stdout

import numpy as np

# Add src to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.interp import read_tensor, write_tensor
from src.main import COMMANDS, main
from src.parser import compile_source

CORPUS = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'corpus'))


def corpus(name):
    return os.path.join(CORPUS, name)


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def ncdc(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with redirect_stderr(err):
            code = main(list(argv), out)
        return code, out.getvalue(), err.getvalue()


class TestCommands(CliTestCase):
    def test_check_lists_every_boundary(self):
        code, out, _ = self.ncdc("check", corpus("mlp.ncd"))
        self.assertEqual(code, 0)
        lines = out.splitlines()
        self.assertTrue(lines[0].startswith("mlp: "))
        self.assertEqual(len(lines), 1 + 8)
        self.assertEqual(lines[1], "0: [x, x]")
        self.assertEqual(lines[-1], "7: [o]")

    def test_run_with_tensor_files(self):
        write_tensor(self.path("v.t"), np.arange(1.0, 6.0))
        write_tensor(self.path("w.t"), np.array([1.0, 0.0, -1.0]))
        code, _, _ = self.ncdc("run", corpus("conv1d.ncd"), "-i", f"v={self.path('v.t')}",
                               "-i", f"v.1={self.path('w.t')}", "-o", self.path("out.t"))
        self.assertEqual(code, 0)
        np.testing.assert_array_equal(read_tensor(self.path("out.t")), [-2.0, -2.0, -2.0])

    def test_run_writes_tensor_text_to_stdout(self):
        write_tensor(self.path("v.t"), np.arange(1.0, 6.0))
        write_tensor(self.path("w.t"), np.array([1.0, 0.0, -1.0]))
        code, out, _ = self.ncdc("run", corpus("conv1d.ncd"), "-i", f"0={self.path('v.t')}",
                                 "-i", f"1={self.path('w.t')}")
        self.assertEqual(code, 0)
        self.assertEqual(out, "1\n3\n-2.0 -2.0 -2.0\n")

    def test_run_is_deterministic(self):
        first = self.ncdc("run", corpus("attention.ncd"), "--seed", "3")
        second = self.ncdc("run", corpus("attention.ncd"), "--seed", "3")
        self.assertEqual(first, second)

    def test_grad_with_check(self):
        code, out, _ = self.ncdc("grad", corpus("losses.ncd"), "-d", "chain_loss", "--mode", "forward", "--check")
        self.assertEqual(code, 0)
        self.assertIn("# finite-difference relative error", out)
        error = float(out.strip().splitlines()[-1].rsplit(" ", 1)[1])
        self.assertLess(error, 1e-4)

    def test_jacobian(self):
        code, out, _ = self.ncdc("jacobian", corpus("convolution.ncd"), "-d", "conv_stride")
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith("2\n2 8\n"))

    def test_cost_json(self):
        code, out, _ = self.ncdc("cost", corpus("losses.ncd"), "-d", "chain_loss", "-a", "a=32", "-a", "b=32")
        self.assertEqual(code, 0)
        data = json.loads(out)
        self.assertEqual(data["bindings"], {"a": 32, "b": 32})
        self.assertGreater(data["total_time_value"], 0)

    def test_cost_compare(self):
        code, out, _ = self.ncdc("cost", corpus("attention.ncd"), "-d", "scaled_attention",
                                 "--compare", "scaled_attention")
        self.assertEqual(code, 0)
        self.assertEqual(json.loads(out)["time_ratio"], 1.0)

    def test_rewrite_prints_source(self):
        code, out, _ = self.ncdc("rewrite", corpus("attention.ncd"), "-d", "scaled_attention", "--rule", "normalize")
        self.assertEqual(code, 0)
        self.assertIn("scaled_attention", compile_source(out))

    def test_rewrite_without_match(self):
        code, _, err = self.ncdc("rewrite", corpus("losses.ncd"), "-d", "chain_loss", "--rule", "snake")
        self.assertEqual(code, 0)
        self.assertIn("did not match", err)

    def test_transpose_then_snake_through_files(self):
        with open(self.path("flip.ncd"), "w", encoding="utf-8") as f:
            f.write("diagram flip(v: [5]) -> [3, 3] {\n  conv 1 k=3 s=1 d=1 pad=0;\n}\n")
        code, out, _ = self.ncdc("rewrite", self.path("flip.ncd"), "--rule", "transpose", "--at", "0.0",
                                 "-o", self.path("flipT.ncd"))
        self.assertEqual((code, out), (0, ""))
        code, out, _ = self.ncdc("rewrite", self.path("flipT.ncd"), "-d", "flip", "--rule", "snake")
        self.assertEqual(code, 0)
        self.assertIn("convT 1 k=3 s=1 d=1 pad=0 out=5", out)
        self.assertNotIn("call", out)

    def test_plan(self):
        code, out, _ = self.ncdc("plan", corpus("attention.ncd"), "-d", "attention_scores")
        self.assertEqual(code, 0)
        steps = [json.loads(line) for line in out.splitlines()]
        self.assertEqual([s["index"] for s in steps], ["abc,abd->acd"])

    def test_render_to_file(self):
        code, _, _ = self.ncdc("render", corpus("mlp.ncd"), "-o", self.path("mlp.svg"))
        self.assertEqual(code, 0)
        with open(self.path("mlp.svg"), encoding="utf-8") as f:
            self.assertIn("<svg", f.read())

    def test_corpus_listing(self):
        code, out, _ = self.ncdc("corpus")
        self.assertEqual(code, 0)
        names = [line.split("\t")[0] for line in out.splitlines()]
        self.assertIn("conv1d", names)
        self.assertEqual(len(names), len(set(names)))

    def test_corpus_update_golden(self):
        code, out, _ = self.ncdc("corpus", "--update-golden", "-o", self.path("golden"))
        self.assertEqual(code, 0)
        written = out.splitlines()
        self.assertIn(self.path(os.path.join("golden", "conv1d.svg")), written)
        self.assertIn(self.path(os.path.join("golden", "conv1d.cost.json")), written)
        with open(self.path(os.path.join("golden", "conv1d.cost.json")), encoding="utf-8") as f:
            self.assertEqual(json.load(f)["diagram"], "conv1d")


class TestFailures(CliTestCase):
    def write(self, name, text):
        with open(self.path(name), "w", encoding="utf-8") as f:
            f.write(text)
        return self.path(name)

    def test_shape_error_has_position(self):
        source = self.write("bad.ncd", "diagram f(x: [3, 4]) -> [] {\n  cup 0 1;\n}\n")
        code, out, err = self.ncdc("check", source)
        self.assertEqual(code, 1)
        self.assertEqual(out, "")
        self.assertTrue(err.startswith(f"{source}:2:"))
        self.assertIn("error[shape]", err)
        self.assertIn("  note: ", err)

    def test_syntax_error(self):
        source = self.write("bad.ncd", "diagram f(x: [3]) -> [3] {\n  frobnicate;\n}\n")
        code, _, err = self.ncdc("plan", source)
        self.assertEqual(code, 1)
        self.assertIn("error[syntax]", err)

    def test_unknown_diagram(self):
        code, _, err = self.ncdc("check", corpus("mlp.ncd"), "-d", "nope")
        self.assertEqual(code, 1)
        self.assertIn("error[undefined]", err)

    def test_grad_of_non_scalar_output_sums_it(self):
        code, out, _ = self.ncdc("grad", corpus("attention.ncd"))
        self.assertEqual(code, 0)
        self.assertTrue(out.startswith("# segment 0\n"))

    def test_bad_axis_binding(self):
        code, _, err = self.ncdc("check", corpus("mlp.ncd"), "-a", "x=0")
        self.assertEqual(code, 1)
        self.assertIn("error[usage]", err)

    def test_missing_tensor_file(self):
        code, _, err = self.ncdc("run", corpus("conv1d.ncd"), "-i", f"v={self.path('missing.t')}")
        self.assertEqual(code, 1)
        self.assertIn("does not exist", err)

    def test_wrong_tensor_shape(self):
        write_tensor(self.path("v.t"), np.zeros(4))
        code, _, err = self.ncdc("run", corpus("conv1d.ncd"), "-i", f"v={self.path('v.t')}")
        self.assertEqual(code, 1)
        self.assertIn("error[env]", err)

    def test_missing_source(self):
        code, _, err = self.ncdc("check", self.path("nowhere.ncd"))
        self.assertEqual(code, 1)
        self.assertIn("error[usage]", err)

    def test_bad_rule(self):
        with redirect_stdout(io.StringIO()):
            code, _, _ = self.ncdc("rewrite", corpus("mlp.ncd"), "--rule", "fold")
        self.assertEqual(code, 1)


class TestHelp(CliTestCase):
    def test_every_subcommand_has_help(self):
        for command in COMMANDS:
            stdout = io.StringIO()
            with self.subTest(command=command), redirect_stdout(stdout):
                code, _, _ = self.ncdc(command, "--help")
            self.assertEqual(code, 0)
            self.assertIn("usage:", stdout.getvalue())


if __name__ == '__main__':
    unittest.main()
