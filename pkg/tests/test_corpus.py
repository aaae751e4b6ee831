import unittest
import sys
import os
import json
import tempfile
from pathlib import Path

import numpy as np
from pydantic import ValidationError

# Add src to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.complexity import cost_report
from src.core.errors import UndefinedName
from src.corpus import (
    ORACLES, CorpusEntry, check_oracle, compile_diagram, compile_entry, find_entry, golden_directory,
    golden_artifacts, load_corpus, verify_corpus, write_golden,
)
from src.emit import to_svg
from src.interp import evaluate, oracle_attention, random_env


class TestManifest(unittest.TestCase):
    def test_entries_are_well_formed(self):
        entries = load_corpus()
        self.assertGreaterEqual(len(entries), 15)
        for entry in entries:
            with self.subTest(entry=entry.name):
                self.assertIn(entry.oracle, ORACLES)
                self.assertEqual(compile_entry(entry).name, entry.diagram)

    def test_axis_bindings_must_be_positive(self):
        with self.assertRaises(ValidationError):
            CorpusEntry(name="bad", file="mlp.ncd", diagram="mlp", bindings={"x": 0})
        with self.assertRaises(ValidationError):
            CorpusEntry(name="bad", file="mlp.ncd", diagram="mlp", tolerance=-1.0)

    def test_duplicate_names(self):
        entry = {"name": "twice", "file": "mlp.ncd", "diagram": "mlp"}
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "corpus.json")
            with open(path, "w", encoding="utf-8") as f:
                json.dump({"entries": [entry, entry]}, f)
            with self.assertRaises(ValueError):
                load_corpus(path)

    def test_lookup(self):
        self.assertEqual(find_entry("conv1d").file, "conv1d.ncd")
        with self.assertRaises(UndefinedName):
            find_entry("nope")
        with self.assertRaises(UndefinedName):
            compile_diagram(find_entry("conv1d"), "missing")

    def test_unknown_oracle(self):
        entry = CorpusEntry(name="odd", file="conv1d.ncd", diagram="conv1d", oracle="psychic")
        with self.assertRaises(KeyError):
            check_oracle(entry)

    def test_run_only_entry(self):
        entry = CorpusEntry(name="plain", file="conv1d.ncd", diagram="conv1d")
        self.assertEqual(check_oracle(entry), 0.0)


class TestOracles(unittest.TestCase):
    def test_every_entry_within_tolerance(self):
        for report in verify_corpus():
            with self.subTest(entry=report.name):
                self.assertTrue(report.passed, f"error {report.error:.3e} > {report.tolerance:.1e}")
                self.assertGreater(report.svg_bytes, 0)

    def test_other_seeds(self):
        for seed in (1, 2):
            for entry in load_corpus():
                with self.subTest(entry=entry.name, seed=seed):
                    self.assertLessEqual(check_oracle(entry, seed=seed), max(entry.tolerance, 1e-10))

    def test_single_head_visual_attention_is_flattened_multihead(self):
        entry = find_entry("visual_attention_single_head")
        d = compile_entry(entry)
        self.assertEqual(d.domain.segments[0].extents, (2, 2, 2))
        self.assertEqual(compile_diagram(entry, "attention").domain.segments[0].extents, (4, 2))
        for seed in range(5):
            with self.subTest(seed=seed):
                self.assertLessEqual(check_oracle(entry, d, seed=seed), entry.tolerance)

    def test_multihead_with_one_head_is_attention(self):
        d = compile_entry(find_entry("multihead"), {"h": 1, "f": 2})
        env = random_env(d, seed=8)
        p = env.params
        projected = [x @ p[name].reshape(p[name].shape[0], -1)
                     for x, name in zip(env.inputs, ("WQ", "WK", "WV"))]
        expected = oracle_attention(*projected) @ p["WO"] + p["WO.bias"]
        np.testing.assert_allclose(evaluate(d, env)[0], expected, rtol=1e-10, atol=1e-12)


class TestGolden(unittest.TestCase):
    """Rendered SVG and cost JSON stay byte-identical to corpus/golden."""

    def test_outputs_match_golden_files(self):
        directory = golden_directory()
        established = write_golden(missing_only=True)
        if established:
            sys.stderr.write(f"established {len(established)} golden files in {directory}\n")
        for entry in load_corpus():
            for name, text in golden_artifacts(entry):
                with self.subTest(file=name):
                    self.assertEqual((directory / name).read_text(encoding="utf-8"), text)

    def test_write_golden_into_a_fresh_directory(self):
        with tempfile.TemporaryDirectory() as tmp:
            written = write_golden(directory=Path(tmp))
            self.assertEqual(len(written), 2 * len(load_corpus()))
            again = write_golden(directory=Path(tmp), missing_only=True)
            self.assertEqual(again, [])
            svg = Path(tmp) / "mlp.svg"
            self.assertEqual(svg.read_text(encoding="utf-8"), to_svg(compile_entry(find_entry("mlp"))))
            cost = json.loads((Path(tmp) / "mlp.cost.json").read_text(encoding="utf-8"))
            self.assertEqual(cost, cost_report(compile_entry(find_entry("mlp"))).to_dict())


if __name__ == '__main__':
    unittest.main()
