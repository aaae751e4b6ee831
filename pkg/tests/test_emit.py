import unittest
import sys
import os
import json
import xml.etree.ElementTree as ET

import numpy as np

# Add src to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.config import RenderSettings
from src.core.compose import identity
from src.core.ir import data_of, is_identity_cell, make_axis, shape_of
from src.core.shapes import infer_shapes
from src.corpus import compile_entry, load_corpus
from src.emit import run_plan, to_plan, to_svg
from src.interp import evaluate, random_env
from src.parser import compile_source

MATMUL = """
axes { p = 2, n = 3, q = 4 }
diagram mm(x: [p, n] | [n, q]) -> [p, q] {
  outer 0 1;
  cup 1 2;
}
diagram scores(s: [p, n, q] | [p, n, q]) -> [p, q, q] {
  map p: outer 0 1;
  map p: cup n n;
}
diagram mixed(x: [n] | [n]) -> [] {
  outer 0 1;
  ew relu;
  diag 0 1;
  sum 0;
}
"""


def svg_root(text):
    return ET.fromstring(text)


def with_role(root, role):
    return [el for el in root.iter() if el.attrib.get("data-role") == role]


class TestPlan(unittest.TestCase):
    def setUp(self):
        self.diagrams = compile_source(MATMUL)

    def test_identity_is_empty_plan(self):
        plan = to_plan(identity(data_of(shape_of(make_axis("a", 3)))))
        self.assertEqual(plan.steps, [])
        self.assertEqual(plan.to_jsonl(), "")
        self.assertEqual(plan.inputs, plan.outputs)

    def test_matrix_multiply_is_one_contraction(self):
        plan = to_plan(self.diagrams["mm"])
        self.assertEqual(plan.contractions(), ["ab,bc->ac"])
        self.assertEqual(len(plan.steps), 1)

    def test_per_head_scores(self):
        plan = to_plan(self.diagrams["scores"])
        self.assertEqual(plan.contractions(), ["abc,abd->acd"])

    def test_opaque_step_splits_contractions(self):
        plan = to_plan(self.diagrams["mixed"])
        ops = [s.op for s in plan.steps]
        self.assertEqual(ops, ["einsum", "ew", "einsum"])
        self.assertEqual(plan.contractions(), ["a,b->ab", "aa->"])

    def test_jsonl_one_object_per_step(self):
        plan = to_plan(self.diagrams["mixed"])
        lines = plan.to_jsonl().splitlines()
        self.assertEqual(len(lines), len(plan.steps))
        first = json.loads(lines[0])
        self.assertEqual(first["step"], 0)
        self.assertEqual(first["index"], "a,b->ab")
        self.assertEqual(first["in_axes"], [["n"], ["n"]])

    def test_run_plan_matches_interpreter_on_small_cases(self):
        for name, d in self.diagrams.items():
            env = random_env(d, seed=7)
            with self.subTest(diagram=name):
                for got, want in zip(run_plan(to_plan(d), d, env), evaluate(d, env)):
                    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_run_plan_matches_interpreter_on_corpus(self):
        for entry in load_corpus():
            d = compile_entry(entry)
            env = random_env(d, seed=3)
            with self.subTest(entry=entry.name):
                for got, want in zip(run_plan(to_plan(d), d, env), evaluate(d, env)):
                    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


class TestSvg(unittest.TestCase):
    def test_identity_is_one_labelled_wire(self):
        root = svg_root(to_svg(identity(data_of(shape_of(make_axis("a", 3))))))
        lines = [el for el in root.iter() if el.tag.endswith("line") or el.tag.endswith("path")]
        texts = [el.text for el in root.iter() if el.tag.endswith("text")]
        self.assertEqual(len(lines), 1)
        self.assertEqual(texts, ["a"])
        self.assertEqual(with_role(root, "cell"), [])

    def test_separator_and_glyph_counts(self):
        for entry in load_corpus():
            d = compile_entry(entry)
            root = svg_root(to_svg(d))
            separators = sum(max(len(state) - 1, 0) for state in infer_shapes(d))
            cells = sum(1 for section in d.sections for c in section if not is_identity_cell(c))
            with self.subTest(entry=entry.name):
                self.assertEqual(len(with_role(root, "separator")), separators)
                self.assertEqual(len(with_role(root, "cell")), cells)

    def test_render_is_deterministic(self):
        d = compile_source(MATMUL)["mixed"]
        self.assertEqual(to_svg(d), to_svg(d))

    def test_settings_change_the_canvas(self):
        d = compile_source(MATMUL)["mm"]
        wide = svg_root(to_svg(d, RenderSettings(column_width=200)))
        narrow = svg_root(to_svg(d, RenderSettings(column_width=50)))
        self.assertGreater(float(wide.attrib["width"]), float(narrow.attrib["width"]))

    def test_glyph_kinds(self):
        d = compile_source(MATMUL)["mixed"]
        kinds = [el.attrib.get("data-kind") for el in with_role(svg_root(to_svg(d)), "cell")]
        self.assertEqual(kinds, ["outer", "ew", "diag", "sum"])


if __name__ == '__main__':
    unittest.main()
