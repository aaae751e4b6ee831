import unittest
import sys
import os

import numpy as np

# Add src to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.compose import broadcast, compose_seq, from_primitive, identity, stack
from src.core.errors import BadAxisMove, NotLinear, NotMultilinear, SegmentOutOfRange
from src.core.ir import (
    AxisTranspose, Cell, ConvTensor, Cup, Diagram, ElementWise, LinearParam, OuterProduct,
    SoftMax, SumAxis, Unit, View, cell_at, data_of, is_identity_cell, iter_cells, make_axis, shape_of,
)
from src.corpus import compile_entry, load_corpus
from src.interp import ParamStore, evaluate, materialize_linear, random_env, random_params
from src.parser import compile_source, format_diagram
from src.rewrite import (
    RULES, cell_inputs, drop_unit_axes, factor_multilinear, flip_conv, naturality_swap, normalize, parse_moves,
    recover_transpose, snake_reduce, transpose_linear,
)


def shape(*extents):
    return shape_of(*(make_axis(n) for n in extents))


def bodies(diagram):
    return [cell.body for section in diagram.sections for cell in section if not is_identity_cell(cell)]


SAMPLES = 100

FLIP = """
diagram flip(v: [5]) -> [3, 3] {
  conv 1 k=3 s=1 d=1 pad=0;
}
"""

DOT = """
axes { n = 3 }
diagram dot(x: [n] | [n]) -> [] {
  ew scale(2.0);
  outer 0 1;
  cup 0 1;
}
diagram use(x: [n] | [n]) -> [] {
  call dot;
}
"""


def assert_same_on_samples(a, b, params=None, seed=0, samples=SAMPLES, rtol=0.0, atol=1e-12):
    """a and b agree on random inputs; b may reshape the segments of a."""
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        xs = [rng.normal(size=s.extents) for s in a.domain.segments]
        ys = [np.reshape(x, s.extents) for x, s in zip(xs, b.domain.segments)]
        for got, want in zip(evaluate(b, ys, params), evaluate(a, xs, params)):
            np.testing.assert_allclose(np.ravel(got), np.ravel(want), rtol=rtol, atol=atol)


class TestSnake(unittest.TestCase):
    def test_unit_then_cup_is_identity(self):
        d = compose_seq(from_primitive(Unit(make_axis(3)), data_of(shape(3))),
                        from_primitive(Cup(0, 1), data_of(shape(3, 3, 3))))
        result = snake_reduce(d)
        self.assertTrue(result.applied)
        self.assertEqual(result.diagram.sections, ())
        x = np.arange(3.0)
        np.testing.assert_array_equal(evaluate(d, [x])[0], x)

    def test_unit_then_cup_on_leading_axis_is_transpose(self):
        d = compose_seq(from_primitive(Unit(make_axis(3)), data_of(shape(3, 2))),
                        from_primitive(Cup(0, 2), data_of(shape(3, 2, 3, 3))))
        result = snake_reduce(d)
        self.assertEqual(bodies(result.diagram), [AxisTranspose((1, 0))])
        assert_same_on_samples(d, result.diagram)

    def test_nothing_to_reduce(self):
        d = from_primitive(ElementWise("relu"), data_of(shape(3)))
        result = snake_reduce(d)
        self.assertFalse(result.applied)
        self.assertIs(result.diagram, d)


class TestNaturality(unittest.TestCase):
    def test_disjoint_segments_commute(self):
        f = stack(from_primitive(ElementWise("neg"), data_of(shape(3))), identity(data_of(shape(2))))
        g = stack(identity(data_of(shape(3))), from_primitive(ElementWise("scale", 2.0), data_of(shape(2))))
        d = compose_seq(f, g)
        result = naturality_swap(d, 0)
        self.assertTrue(result.applied)
        self.assertEqual(result.diagram.sections, (d.sections[1], d.sections[0]))
        assert_same_on_samples(d, result.diagram, seed=1)

    def test_broadcast_cell_slides_past_leading_sum(self):
        lifted = broadcast(from_primitive(ElementWise("neg"), data_of(shape(3))), make_axis(4))
        d = compose_seq(lifted, from_primitive(SumAxis(0), data_of(shape(4, 3))))
        result = naturality_swap(d, 0)
        self.assertEqual(result.detail, "broadcast naturality")
        self.assertIsInstance(result.diagram.sections[0][0].body, SumAxis)
        self.assertEqual(result.diagram.sections[1][0].broadcasts, ())
        assert_same_on_samples(d, result.diagram, seed=2)

    def test_nonlinear_cells_are_rejected(self):
        d = compose_seq(from_primitive(SoftMax(), data_of(shape(3))),
                        from_primitive(ElementWise("neg"), data_of(shape(3))))
        with self.assertRaises(NotLinear):
            naturality_swap(d, 0)

    def test_index_out_of_range(self):
        d = from_primitive(ElementWise("neg"), data_of(shape(3)))
        with self.assertRaises(SegmentOutOfRange):
            naturality_swap(d, 0)


class TestTranspose(unittest.TestCase):
    def transpose_matches(self, d, params=None, moves=None):
        result = transpose_linear(d, "0.0", moves)
        self.assertTrue(result.applied)
        np.testing.assert_allclose(materialize_linear(result.diagram, params),
                                   materialize_linear(d, params).T, rtol=0, atol=1e-12)
        return result.diagram

    def test_conv_transpose_is_matrix_transpose(self):
        d = from_primitive(ConvTensor(1, (5,), (3,), (1,), (1,), (0,)), data_of(shape(5)))
        t = self.transpose_matches(d)
        self.assertEqual(t.domain.segments[0].extents, (3, 3))
        reduced = snake_reduce(t).diagram
        (body,) = bodies(reduced)
        self.assertIsInstance(body, ConvTensor)
        self.assertTrue(body.transposed)
        np.testing.assert_allclose(materialize_linear(reduced), materialize_linear(d).T, rtol=0, atol=0)

    def test_transpose_survives_format_and_compile(self):
        d = compile_source(FLIP)["flip"]
        t = transpose_linear(d, "0.0").diagram
        again = compile_source(format_diagram(t))["flip"]
        self.assertIsNone(cell_at(again, "0.0").body.transpose_of)
        self.assertEqual(recover_transpose(cell_at(again, "0.0").body), cell_at(t, "0.0").body.transpose_of)
        result = snake_reduce(again)
        self.assertTrue(result.applied)
        (body,) = bodies(result.diagram)
        self.assertEqual(body, flip_conv(bodies(d)[0]))
        np.testing.assert_allclose(materialize_linear(result.diagram), materialize_linear(d).T, rtol=0, atol=0)

    def test_plain_call_is_not_a_transpose(self):
        d = compile_source(DOT)["use"]
        self.assertIsNone(recover_transpose(cell_at(d, "0.0").body))

    def test_transpose_is_an_involution(self):
        d = from_primitive(ConvTensor(1, (6,), (2,), (2,), (1,), (0,)), data_of(shape(6)))
        twice = transpose_linear(transpose_linear(d, "0.0").diagram, "0.0").diagram
        reduced = snake_reduce(twice).diagram
        self.assertEqual(bodies(reduced), bodies(d))
        np.testing.assert_array_equal(materialize_linear(reduced), materialize_linear(d))

    def test_linear_param_becomes_transposed_weight(self):
        d = from_primitive(LinearParam("W", shape(3), shape(2)), data_of(shape(3)))
        params = ParamStore({"W": np.arange(6.0).reshape(3, 2)})
        t = self.transpose_matches(d, params)
        (body,) = bodies(snake_reduce(t).diagram)
        self.assertEqual(body, LinearParam("W", shape(3), shape(2), False, True))

    def test_unit_transposes_to_cup(self):
        d = from_primitive(Unit(make_axis(3)), data_of(shape(2)))
        t = self.transpose_matches(d)
        self.assertEqual(bodies(snake_reduce(t).diagram), [Cup(1, 2)])

    def test_partial_move(self):
        d = from_primitive(Unit(make_axis(3)), data_of(shape(2)))
        t = transpose_linear(d, "0.0", "out:1,2").diagram
        self.assertEqual(t.domain.segments[0].extents, (3, 3, 2))
        self.assertEqual(t.codomain.segments[0].extents, (2,))
        forward = materialize_linear(d).reshape(2, 3, 3, 2)
        np.testing.assert_allclose(materialize_linear(t).reshape(2, 3, 3, 2), forward, rtol=0, atol=0)

    def test_view_and_axis_transpose(self):
        cases = [from_primitive(View(shape(2, 3), shape(6)), data_of(shape(2, 3))),
                 from_primitive(AxisTranspose((1, 0)), data_of(shape(2, 3)))]
        for d in cases:
            with self.subTest(kind=d.sections[0][0].body.kind):
                self.transpose_matches(d)

    def test_move_spec(self):
        self.assertEqual(parse_moves(None, 2, 3), ((0, 1, 2), (0, 1)))
        self.assertEqual(parse_moves("out:1;in:0", 2, 3), ((1,), (0,)))
        with self.assertRaises(BadAxisMove):
            parse_moves("sideways:1", 2, 3)
        with self.assertRaises(BadAxisMove):
            parse_moves("out:x", 2, 3)

    def test_bad_moves_and_nonlinear(self):
        d = from_primitive(ConvTensor(1, (5,), (3,), (1,), (1,), (0,)), data_of(shape(5)))
        with self.assertRaises(BadAxisMove):
            transpose_linear(d, "0.0", "out:5")
        with self.assertRaises(BadAxisMove):
            transpose_linear(d, "0.0", "out:0,0")
        with self.assertRaises(NotLinear):
            transpose_linear(from_primitive(ElementWise("relu"), data_of(shape(3))), "0.0")

    def test_corpus_linear_cells(self):
        checked = 0
        for entry in load_corpus():
            d = compile_entry(entry)
            params = random_params(d, np.random.default_rng(0))
            for address, cell in iter_cells(d):
                body = cell.body
                linear = isinstance(body, (ConvTensor, AxisTranspose, View)) or (
                    isinstance(body, LinearParam) and not body.bias)
                if cell.broadcasts or not linear:
                    continue
                (inputs,) = cell_inputs(d, address)
                single = from_primitive(body, data_of(inputs))
                if single.domain.size * single.codomain.size > 10_000:
                    continue
                with self.subTest(entry=entry.name, address=address):
                    self.transpose_matches(single, params)
                checked += 1
        self.assertGreater(checked, 5)


def bilinear(pre_scale=None, post=Cup(0, 1)):
    operands = data_of(shape(3), shape(3))
    inner = from_primitive(OuterProduct(0, 1), operands)
    if pre_scale is not None:
        scale = stack(identity(data_of(shape(3))),
                      from_primitive(ElementWise("scale", pre_scale), data_of(shape(3))))
        inner = compose_seq(scale, inner)
    inner = compose_seq(inner, from_primitive(post, data_of(shape(3, 3))), "bil")
    return Diagram("outer", "x", inner.domain, inner.codomain, ((Cell(inner),),))


class TestFactor(unittest.TestCase):
    def test_linear_map_before_merge_is_pulled_through(self):
        d = bilinear(pre_scale=2.0)
        result = factor_multilinear(d, "0.0")
        self.assertTrue(result.applied)
        factored = cell_at(result.diagram, "0.0").body
        self.assertIsInstance(factored.sections[0][0].body, OuterProduct)
        assert_same_on_samples(d, result.diagram, seed=3)

    def test_called_diagram_is_factored(self):
        d = compile_source(DOT)["use"]
        result = factor_multilinear(d, "0.0")
        self.assertTrue(result.applied)
        self.assertEqual(cell_at(result.diagram, "0.0").body.name, "dot_factored")
        assert_same_on_samples(d, result.diagram, seed=4)

    def test_already_factored(self):
        result = factor_multilinear(bilinear(), "0.0")
        self.assertFalse(result.applied)
        self.assertEqual(result.detail, "already factored")

    def test_nonlinear_after_merge(self):
        with self.assertRaises(NotMultilinear):
            factor_multilinear(bilinear(pre_scale=2.0, post=ElementWise("relu")), "0.0")

    def test_single_operand_cell(self):
        d = from_primitive(ElementWise("neg"), data_of(shape(3)))
        with self.assertRaises(NotMultilinear):
            factor_multilinear(d, "0.0")


class TestUnitAxes(unittest.TestCase):
    def test_sum_over_unit_axis(self):
        d = from_primitive(SumAxis(1), data_of(shape(1, 3)))
        result = drop_unit_axes(d)
        self.assertTrue(result.applied)
        self.assertEqual(result.diagram.domain, data_of(shape(3)))
        x = np.arange(3.0).reshape(1, 3)
        got = evaluate(result.diagram, [x.reshape(3)])[0]
        np.testing.assert_array_equal(got.reshape(-1), evaluate(d, [x])[0].reshape(-1))

    def test_unit_broadcast_scope_disappears(self):
        d = broadcast(from_primitive(ElementWise("relu"), data_of(shape(3))), make_axis(1))
        result = drop_unit_axes(d).diagram
        self.assertTrue(all(not c.broadcasts for s in result.sections for c in s))
        x = np.array([[-1.0, 0.5, 2.0]])
        np.testing.assert_array_equal(evaluate(result, [x[0]])[0], [0.0, 0.5, 2.0])

    def test_no_unit_axes(self):
        d = from_primitive(ElementWise("relu"), data_of(shape(3)))
        self.assertFalse(drop_unit_axes(d).applied)


class TestNormalize(unittest.TestCase):
    def test_normal_form_is_a_fixpoint(self):
        d = compose_seq(from_primitive(Unit(make_axis(3)), data_of(shape(3, 2))),
                        from_primitive(Cup(0, 2), data_of(shape(3, 2, 3, 3))))
        first = normalize(d)
        self.assertTrue(first.applied)
        self.assertFalse(normalize(first.diagram).applied)

    def test_corpus_meaning_is_preserved(self):
        for entry in load_corpus():
            d = compile_entry(entry)
            n = normalize(d).diagram
            with self.subTest(entry=entry.name):
                for seed in range(SAMPLES):
                    env = random_env(d, seed=seed)
                    inputs = [x.reshape(s.extents) for x, s in zip(env.inputs, n.domain.segments)]
                    for got, want in zip(evaluate(n, inputs, env.params), evaluate(d, env)):
                        np.testing.assert_allclose(got.ravel(), want.ravel(), rtol=1e-10, atol=1e-12)

    def test_rule_table(self):
        d = compose_seq(from_primitive(Unit(make_axis(3)), data_of(shape(3))),
                        from_primitive(Cup(0, 1), data_of(shape(3, 3, 3))))
        self.assertEqual(RULES["snake"](d), snake_reduce(d))
        self.assertEqual(set(RULES), {"snake", "naturality", "transpose", "factor", "units", "normalize"})
        with self.assertRaises(SegmentOutOfRange):
            RULES["transpose"](d)


if __name__ == '__main__':
    unittest.main()
