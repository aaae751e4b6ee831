import unittest
import sys
import os

import numpy as np

# Add src to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.autodiff import (
    evaluate_gradient, finite_difference_gradient, forward_transform, grad_pipeline, jacobian_materialize,
    relative_error, reverse_transform, scalarize,
)
from src.core.compose import compose_seq, from_primitive
from src.core.errors import NotScalarLoss, TooLarge
from src.core.ir import Diagram, ElementWise, LinearParam, SoftMax, data_of, make_axis, shape_of
from src.core.shapes import infer_shapes
from src.corpus import compile_entry, find_entry, load_corpus
from src.interp import evaluate, random_env, random_params
from src.parser import compile_source

LOSSES = """
axes { n = 4 }
diagram sq(x: [n] | [n]) -> [] {
  swap 0 1;
  ew neg;
  add 0 1;
  copy 0;
  outer 0 1;
  diag 0 1;
  sum 0;
}
"""

SAMPLES = 100


def shape(*extents):
    return shape_of(*(make_axis(n) for n in extents))


def corpus_diagram(name):
    return compile_entry(find_entry(name))


class TestGradients(unittest.TestCase):
    def test_squared_loss_has_closed_form(self):
        d = compile_source(LOSSES)["sq"]
        x, t = np.array([1.0, -2.0, 0.5, 3.0]), np.array([0.0, 1.0, 0.5, -1.0])
        for mode in ("reverse", "forward"):
            with self.subTest(mode=mode):
                gx, gt = evaluate_gradient(d, [x, t], mode=mode)
                np.testing.assert_allclose(gx, 2 * (x - t), rtol=0, atol=1e-12)
                np.testing.assert_allclose(gt, -2 * (x - t), rtol=0, atol=1e-12)

    def test_forward_and_reverse_agree(self):
        for name in ("chain_loss", "mlp_loss", "sq_loss"):
            d = corpus_diagram(name)
            env = random_env(d, seed=17)
            with self.subTest(entry=name):
                rev = evaluate_gradient(d, env, mode="reverse")
                fwd = evaluate_gradient(d, env, mode="forward")
                for a, b in zip(rev, fwd):
                    np.testing.assert_allclose(a, b, rtol=1e-8, atol=1e-12)

    def test_reverse_matches_finite_differences(self):
        d = corpus_diagram("chain_loss")
        env = random_env(d, seed=2)
        (grad,) = evaluate_gradient(d, env)
        (numeric,) = finite_difference_gradient(d, env)
        self.assertLessEqual(relative_error(grad, numeric), 1e-4)

    def test_scalarized_corpus_gradients(self):
        for name in ("scaled_attention", "multihead", "conv2d", "conv_channels", "unet_block"):
            d = scalarize(corpus_diagram(name))
            env = random_env(d, seed=23)
            with self.subTest(entry=name):
                for got, want in zip(evaluate_gradient(d, env), finite_difference_gradient(d, env)):
                    np.testing.assert_allclose(got, want, rtol=1e-4, atol=1e-6)

    def test_reverse_transform_is_linear_in_the_seed(self):
        d = corpus_diagram("chain_loss")
        rev = reverse_transform(d)
        env = random_env(d, seed=4)
        (one,) = evaluate(rev, env.inputs + [np.array(1.0)], env.params)
        (three,) = evaluate(rev, env.inputs + [np.array(3.0)], env.params)
        np.testing.assert_allclose(three, 3.0 * one, rtol=1e-12, atol=1e-15)

    def test_non_scalar_loss(self):
        d = from_primitive(SoftMax(), data_of(shape(3)))
        with self.assertRaises(NotScalarLoss):
            grad_pipeline(d)
        with self.assertRaises(NotScalarLoss):
            finite_difference_gradient(d, [np.zeros(3)])
        with self.assertRaises(ValueError):
            grad_pipeline(scalarize(d), mode="sideways")

    def test_scalarize_sums_every_output(self):
        d = from_primitive(SoftMax(), data_of(shape(3)))
        self.assertAlmostEqual(float(evaluate(scalarize(d), [np.array([0.3, -1.0, 2.0])])[0]), 1.0, places=12)
        loss = compile_source(LOSSES)["sq"]
        self.assertIs(scalarize(loss), loss)


class TestJacobians(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(9)
        layer = compose_seq(from_primitive(LinearParam("W", shape(3), shape(4), True), data_of(shape(3))),
                            from_primitive(ElementWise("gelu"), data_of(shape(4))))
        self.f = layer
        self.g = from_primitive(SoftMax(), data_of(shape(4)))
        self.params = random_params(layer, self.rng)

    def test_elementwise_jacobian_is_diagonal(self):
        d = from_primitive(ElementWise("relu"), data_of(shape(3)))
        jac = jacobian_materialize(d, np.array([-1.0, 2.0, 0.5]))
        np.testing.assert_array_equal(jac, np.diag([0.0, 1.0, 1.0]))

    def test_chain_rule(self):
        x = self.rng.normal(size=3)
        (y,) = evaluate(self.f, [x], self.params)
        whole = jacobian_materialize(compose_seq(self.f, self.g), x, self.params)
        product = jacobian_materialize(self.g, y) @ jacobian_materialize(self.f, x, self.params)
        np.testing.assert_allclose(whole, product, rtol=1e-10, atol=1e-12)

    def test_forward_transform_is_functorial(self):
        x, u = self.rng.normal(size=3), self.rng.normal(size=3)
        whole = forward_transform(compose_seq(self.f, self.g))
        parts = compose_seq(forward_transform(self.f), forward_transform(self.g))
        for a, b in zip(evaluate(whole, [x, u], self.params), evaluate(parts, [x, u], self.params)):
            np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)

    def test_tangent_is_jacobian_vector_product(self):
        x, u = self.rng.normal(size=3), self.rng.normal(size=3)
        y, v = evaluate(forward_transform(self.f), [x, u], self.params)
        np.testing.assert_allclose(y, evaluate(self.f, [x], self.params)[0], rtol=0, atol=1e-14)
        np.testing.assert_allclose(v, jacobian_materialize(self.f, x, self.params) @ u, rtol=1e-10, atol=1e-12)

    def test_size_limit(self):
        d = from_primitive(ElementWise("relu"), data_of(shape(200)))
        with self.assertRaises(TooLarge):
            jacobian_materialize(d, np.zeros(200))


def split_diagram(diagram, k):
    """The first k sections and the rest, as two composable diagrams."""
    middle = infer_shapes(diagram)[k]
    head = Diagram(f"{diagram.name}_head", diagram.input_name, diagram.domain, middle, diagram.sections[:k])
    tail = Diagram(f"{diagram.name}_tail", diagram.input_name, middle, diagram.codomain, diagram.sections[k:])
    return head, tail


class TestFunctoriality(unittest.TestCase):
    def test_corpus_forward_transform_is_functorial(self):
        for entry in load_corpus():
            d = compile_entry(entry)
            head, tail = split_diagram(d, len(d.sections) // 2)
            whole = forward_transform(d)
            parts = compose_seq(forward_transform(head), forward_transform(tail))
            self.assertEqual(parts.domain, whole.domain)
            with self.subTest(entry=entry.name):
                for seed in range(SAMPLES):
                    env = random_env(d, seed=seed)
                    rng = np.random.default_rng(seed + 1000)
                    point = []
                    for x in env.inputs:
                        point += [x, rng.normal(size=np.shape(x))]
                    for a, b in zip(evaluate(whole, point, env.params), evaluate(parts, point, env.params)):
                        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


if __name__ == '__main__':
    unittest.main()
