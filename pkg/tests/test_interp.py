import unittest
import sys
import os
import itertools

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

# Add src to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.compose import compose_seq, from_primitive, inner_broadcast
from src.core.errors import EnvMismatch, NotLinear, TensorFormatError, TooLarge
from src.core.ir import (
    AxisTranspose, Copy, ConvTensor, Cup, ElementWise, LinearParam, MaxMask, OuterProduct, SoftMax,
    TensorShape, Unit, data_of, make_axis, shape_of,
)
from src.core.shapes import conv_out_extent
from src.interp import (
    ParamStore, evaluate, format_tensor, materialize_linear, oracle_attention, oracle_conv,
    oracle_multihead, oracle_pool, parse_tensor, random_env,
)
from src.parser import compile_source


CONV_CASES = 200


def shape(*extents):
    return shape_of(*(make_axis(n) for n in extents))


def conv_source(x, k, s, d, pad):
    rank = len(x)
    y = [conv_out_extent(x[a], k[a], s[a], d[a], pad[a]) for a in range(rank)]
    ints = lambda vals: ",".join(str(v) for v in vals)
    cups = "".join(f"  cup {rank} {2 * rank - t};\n" for t in range(rank))
    return (f"diagram c(v: [{ints(x)}] | [{ints(k)}]) -> [{ints(y)}] {{\n"
            f"  conv {rank} k={ints(k)} s={ints(s)} d={ints(d)} pad={ints(pad)};\n"
            f"  outer 0 1;\n{cups}}}\n")


class TestEvaluate(unittest.TestCase):
    def test_softmax_of_equal_values(self):
        d = from_primitive(SoftMax(), data_of(shape(2)))
        np.testing.assert_array_equal(evaluate(d, [np.zeros(2)])[0], [0.5, 0.5])

    def test_softmax_is_stable_for_large_inputs(self):
        d = from_primitive(SoftMax(), data_of(shape(2)))
        out = evaluate(d, [np.array([1000.0, 1000.0])])[0]
        np.testing.assert_array_equal(out, [0.5, 0.5])

    def test_conv_example(self):
        d = compile_source(conv_source((5,), (3,), (1,), (1,), (0,)))["c"]
        out = evaluate(d, [np.arange(1.0, 6.0), np.array([1.0, 0.0, -1.0])])[0]
        np.testing.assert_array_equal(out, [-2.0, -2.0, -2.0])

    def test_conv_matches_oracle(self):
        cases = 0
        for seed in range(CONV_CASES):
            rng = np.random.default_rng(seed)
            rank = 1 + seed % 2
            while True:
                x, k = rng.integers(1, 9, size=rank), rng.integers(1, 5, size=rank)
                s, d = rng.integers(1, 4, size=rank), rng.integers(1, 4, size=rank)
                pad = rng.integers(0, 3, size=rank)
                if all(x[a] + 2 * pad[a] >= d[a] * (k[a] - 1) + 1 for a in range(rank)):
                    break
            x, k, s, d, pad = (tuple(int(v) for v in vals) for vals in (x, k, s, d, pad))
            v, w = rng.normal(size=x), rng.normal(size=k)
            diagram = compile_source(conv_source(x, k, s, d, pad))["c"]
            with self.subTest(x=x, k=k, s=s, d=d, pad=pad):
                np.testing.assert_allclose(evaluate(diagram, [v, w])[0],
                                           oracle_conv(v, w, s, d, pad), rtol=0, atol=1e-12)
            cases += 1
        self.assertEqual(cases, CONV_CASES)

    def test_one_by_one_kernel_is_identity(self):
        v = np.arange(1.0, 6.0)
        d = compile_source(conv_source((5,), (1,), (1,), (1,), (0,)))["c"]
        np.testing.assert_array_equal(evaluate(d, [v, np.array([1.0])])[0], v)

    def test_copy_is_linear(self):
        d = from_primitive(Copy(), data_of(shape(3)))
        rng = np.random.default_rng(4)
        x, y = rng.normal(size=3), rng.normal(size=3)
        for a, b, c in zip(evaluate(d, [x + y]), evaluate(d, [x]), evaluate(d, [y])):
            np.testing.assert_array_equal(a, b + c)
        for a, b in zip(evaluate(d, [2.5 * x]), evaluate(d, [x])):
            np.testing.assert_array_equal(a, 2.5 * b)

    def test_matrix_multiply_by_double_inner_broadcast(self):
        n = make_axis("n", 3)
        dot = compose_seq(from_primitive(OuterProduct(0, 1), data_of(shape_of(n), shape_of(n))),
                          from_primitive(Cup(0, 1), data_of(shape_of(n, n))))
        rows = inner_broadcast(dot, make_axis("p", 2), 0)
        mm = inner_broadcast(rows, make_axis("q", 4), 1)
        rng = np.random.default_rng(5)
        a, b = rng.normal(size=(2, 3)), rng.normal(size=(4, 3))
        np.testing.assert_allclose(evaluate(mm, [a, b])[0], b @ a.T, rtol=0, atol=1e-12)

    def test_attention_matches_direct_formula(self):
        text = """
        diagram att(q: [4, 2] | [3, 2] | [3, 2]) -> [4, 2] {
          outer 0 1;
          cup 1 3;
          ew scale(0.7071067811865476);
          map 4: softmax;
          outer 0 1;
          cup 1 2;
        }
        """
        d = compile_source(text)["att"]
        rng = np.random.default_rng(6)
        q, k, v = rng.normal(size=(4, 2)), rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        np.testing.assert_allclose(evaluate(d, [q, k, v])[0], oracle_attention(q, k, v), rtol=0, atol=1e-12)

    def test_evaluation_is_deterministic(self):
        d = compile_source(conv_source((6,), (3,), (2,), (1,), (1,)))["c"]
        env = random_env(d, seed=11)
        first, second = evaluate(d, env), evaluate(d, env)
        self.assertEqual(first[0].tobytes(), second[0].tobytes())

    def test_maxmask_marks_lowest_index_maximum(self):
        d = from_primitive(MaxMask(), data_of(shape(4)))
        out = evaluate(d, [np.array([1.0, 3.0, 3.0, 2.0])])[0]
        np.testing.assert_array_equal(out, [0.0, 1.0, 0.0, 0.0])

    def test_wrong_input_shape(self):
        d = from_primitive(ElementWise("relu"), data_of(shape(3)))
        with self.assertRaises(EnvMismatch):
            evaluate(d, [np.zeros(4)])
        with self.assertRaises(EnvMismatch):
            evaluate(d, [np.zeros(3), np.zeros(3)])

    def test_missing_parameter(self):
        d = from_primitive(LinearParam("W", shape(2), shape(2)), data_of(shape(2)))
        with self.assertRaises(EnvMismatch):
            evaluate(d, [np.zeros(2)], ParamStore())
        with self.assertRaises(EnvMismatch):
            evaluate(d, [np.zeros(2)], ParamStore({"W": np.zeros((3, 2))}))


class TestMaterialize(unittest.TestCase):
    def test_unit(self):
        d = from_primitive(Unit(make_axis(2)), data_of(TensorShape()))
        np.testing.assert_array_equal(materialize_linear(d), [[1.0], [0.0], [0.0], [1.0]])

    def test_conv_tensor_entries(self):
        prim = ConvTensor(1, (5,), (3,), (1,), (1,), (0,))
        m = materialize_linear(from_primitive(prim, data_of(shape(5))))
        self.assertEqual(m.shape, (9, 5))
        for i, j, l in itertools.product(range(3), range(3), range(5)):
            self.assertEqual(m[i * 3 + j, l], 1.0 if l == i + j else 0.0)

    def test_axis_transpose_is_permutation(self):
        m = materialize_linear(from_primitive(AxisTranspose((1, 0)), data_of(shape(2, 3))))
        self.assertEqual(m.shape, (6, 6))
        np.testing.assert_array_equal(m.sum(axis=0), np.ones(6))
        np.testing.assert_array_equal(m.sum(axis=1), np.ones(6))
        np.testing.assert_array_equal(m @ np.arange(6.0), np.arange(6.0).reshape(2, 3).T.ravel())

    def test_nonlinear_is_rejected(self):
        with self.assertRaises(NotLinear):
            materialize_linear(from_primitive(ElementWise("relu"), data_of(shape(2))))

    def test_limit(self):
        with self.assertRaises(TooLarge):
            materialize_linear(from_primitive(ElementWise("neg"), data_of(shape(200))))


class TestOracles(unittest.TestCase):
    def test_conv_examples(self):
        v = np.arange(1.0, 6.0)
        np.testing.assert_array_equal(oracle_conv(v, [1.0, 1.0], stride=2), [3.0, 7.0])
        np.testing.assert_array_equal(oracle_conv(v, [1.0]), v)
        np.testing.assert_array_equal(oracle_conv(v, [1.0, 0.0, -1.0], dilation=2), [-4.0])

    def test_pool(self):
        v = np.arange(16.0).reshape(4, 4)
        np.testing.assert_array_equal(oracle_pool(v, 2, mode="max"), [[5.0, 7.0], [13.0, 15.0]])
        np.testing.assert_array_equal(oracle_pool(v, 2, mode="mean"), [[2.5, 4.5], [10.5, 12.5]])

    def test_multihead_with_one_head_is_attention(self):
        rng = np.random.default_rng(8)
        q, k, v = rng.normal(size=(4, 3)), rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        eye = np.eye(3).reshape(3, 1, 3)
        out = oracle_multihead(q, k, v, eye, eye, eye, np.eye(3))
        np.testing.assert_allclose(out, oracle_attention(q, k, v), rtol=0, atol=1e-12)


class TestTensorFormat(unittest.TestCase):
    def test_layout(self):
        self.assertEqual(format_tensor(np.array([[1.0, 2.0]])), "2\n1 2\n1.0 2.0\n")
        self.assertEqual(format_tensor(np.array(3.5)), "0\n\n3.5\n")

    @settings(max_examples=100, deadline=None)
    @given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4),
                      elements=st.floats(allow_nan=False, allow_infinity=False)))
    def test_text_is_exact(self, tensor):
        back = parse_tensor(format_tensor(tensor))
        self.assertEqual(back.shape, tensor.shape)
        np.testing.assert_array_equal(back, tensor)

    def test_malformed(self):
        for text in ["", "2\n2\n1 2\n", "1\n3\n1 2\n", "1\n2\n1 x\n", "1\n0\n\n"]:
            with self.subTest(text=text):
                with self.assertRaises(TensorFormatError):
                    parse_tensor(text)


if __name__ == '__main__':
    unittest.main()
