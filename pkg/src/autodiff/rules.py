"""
Per-primitive derivative rules.

``tangent_body`` is the forward rule: for F with n input segments it builds
DF on interleaved (value, tangent) pairs [x1, u1, ..., xn, un] producing
[y1, v1, ..., ym, vm]. ``cotangent_body`` is the reverse rule: it maps
[x1..xn, g1..gm] to the input cotangents [dx1..dxn]. Linear primitives reuse
their adjoint; the rest are spelled out with DiagramBuilder.
"""

import logging
from functools import singledispatch
from typing import List, Sequence, Tuple

from ..core.builder import DiagramBuilder
from ..core.errors import NotDifferentiable
from ..core.ir import (
    Add, Body, BroadcastScope, Cell, ConstScalar, Cup, DataShape, Diagram, ElementWise, Identity,
    LinearParam, MaxMask, OuterProduct, Pool, SoftMax, SumAxis, TensorShape,
)
from ..core.linearity import is_linear
from ..core.shapes import body_type, cell_type, strip_scope
from ..rewrite.linear import adjoint_body, adjoint_cell

logger = logging.getLogger(__name__)

Shapes = Tuple[TensorShape, ...]

# derivative of each non-linear builtin as another builtin; exp is its own
DERIVATIVE_OF = {"relu": "drelu", "gelu": "dgelu", "recip": "drecip", "sqrt": "dsqrt"}


def _name(body: Body) -> str:
    return body.name if isinstance(body, Diagram) else body.kind


def _interleave(xs: Sequence, us: Sequence) -> List:
    out = []
    for x, u in zip(xs, us):
        out += [x, u]
    return out


def interleaved(shapes: Sequence[TensorShape]) -> DataShape:
    """Each segment twice: value then tangent."""
    return DataShape(tuple(_interleave(shapes, shapes)))


def _tangent_builder(body: Body, inputs: Shapes) -> Tuple[DiagramBuilder, List[str], List[str]]:
    b = DiagramBuilder(f"D{_name(body)}", interleaved(inputs), "x")
    return b, b.inputs[0::2], b.inputs[1::2]


def _stripped(body: Body) -> Body:
    if isinstance(body, LinearParam) and body.bias:
        return LinearParam(body.name, body.source, body.target, False, body.transposed)
    return body


def _scaled_by_derivative(b: DiagramBuilder, fn: str, x: str, u: str) -> Tuple[str, str]:
    """y = fn(x) and fn'(x) ⊙ u."""
    if fn == "exp":
        y, y2 = b.copy(b.ew("exp", x))
        return y, b.hadamard(y2, u)
    x1, x2 = b.copy(x)
    return x1, b.hadamard(b.ew(DERIVATIVE_OF[fn], x2), u)


def _softmax_jvp(b: DiagramBuilder, s: str, u: str) -> str:
    """s ⊙ u - s ⟨s, u⟩; the softmax Jacobian is symmetric so this is also the VJP."""
    s1, s2 = b.copy(s)
    su1, su2 = b.copy(b.hadamard(s1, u))
    total = b.sum_all(su2)
    spread = b.ew("neg", b.outer(s2, total))
    return b.apply1(Add(0, 1), su1, spread)


# ---------------------------------------------------------------------------
# Forward rules
# ---------------------------------------------------------------------------

@singledispatch
def tangent_body(body: Body, inputs: Shapes) -> Diagram:
    """DF for one body given its scope-stripped input shapes."""
    if is_linear(_stripped(body)):
        return _linear_tangent(body, inputs)
    raise NotDifferentiable(f"no derivative rule for {_name(body)}")


def _linear_tangent(body: Body, inputs: Shapes) -> Diagram:
    b, xs, us = _tangent_builder(body, inputs)
    ys = b.apply(body, xs)
    vs = b.apply(_stripped(body), us)
    return b.build(_interleave(ys, vs))


@tangent_body.register
def _(body: ConstScalar, inputs):
    b, _, _ = _tangent_builder(body, inputs)
    return b.build([b.const(body.value), b.const(0.0)])


@tangent_body.register
def _(body: ElementWise, inputs):
    if is_linear(body):
        return _linear_tangent(body, inputs)
    b, (x,), (u,) = _tangent_builder(body, inputs)
    if body.fn == "addc":
        return b.build([b.apply1(body, x), u])
    if body.fn != "exp" and body.fn not in DERIVATIVE_OF:
        raise NotDifferentiable(f"ew {body.label} has no derivative rule")
    y, v = _scaled_by_derivative(b, body.fn, x, u)
    if body.fn != "exp":
        y = b.apply1(body, y)
    return b.build([y, v])


@tangent_body.register
def _(body: SoftMax, inputs):
    b, (x,), (u,) = _tangent_builder(body, inputs)
    s1, s2 = b.copy(b.apply1(body, x))
    return b.build([s1, _softmax_jvp(b, s2, u)])


@tangent_body.register
def _(body: OuterProduct, inputs):
    b, xs, us = _tangent_builder(body, inputs)
    i, j = body.i, body.j
    xi1, xi2 = b.copy(xs[i])
    xj1, xj2 = b.copy(xs[j])
    y = b.outer(xi1, xj1)
    v = b.apply1(Add(0, 1), b.outer(us[i], xj2), b.outer(xi2, us[j]))
    rest = [(xs[k], us[k]) for k in range(body.arity) if k not in (i, j)]
    return b.build([y, v] + [w for pair in rest for w in pair])


@tangent_body.register
def _(body: Pool, inputs):
    if body.mode == "mean":
        return _linear_tangent(body, inputs)
    b, (x,), (u,) = _tangent_builder(body, inputs)
    x1, x2 = b.copy(x)
    y = b.apply1(body, x1)
    return b.build([y, b.dot(b.apply1(MaxMask(), x2), u)])


@tangent_body.register
def _(body: MaxMask, inputs):
    raise NotDifferentiable("maxmask is piecewise constant; no derivative rule")


@tangent_body.register
def _(body: Diagram, inputs):
    from .transforms import forward_transform
    return forward_transform(body)


def tangent_cell(cell: Cell, inputs: Shapes) -> Cell:
    """Forward rule for a scoped cell: scopes lift over both halves of each pair."""
    core = inputs
    for scope in cell.broadcasts:
        core = strip_scope(scope, core)
    derived = tangent_body(cell.body, core)
    scopes = tuple(
        BroadcastScope(s.axis, None if s.outer else tuple(t for k in s.targets for t in (2 * k, 2 * k + 1)))
        for s in cell.broadcasts)
    return Cell(derived, scopes)


# ---------------------------------------------------------------------------
# Reverse rules
# ---------------------------------------------------------------------------

def _cotangent_builder(body: Body, inputs: Shapes) -> Tuple[DiagramBuilder, List[str], List[str]]:
    outputs = body_type(body, inputs)
    b = DiagramBuilder(f"R{_name(body)}", DataShape(tuple(inputs) + tuple(outputs)), "x")
    n = len(inputs)
    return b, b.inputs[:n], b.inputs[n:]


@singledispatch
def cotangent_body(body: Body, inputs: Shapes) -> Diagram:
    """[x.., g..] -> [dx..] for one body."""
    if is_linear(_stripped(body)):
        return _linear_cotangent(body, inputs)
    raise NotDifferentiable(f"no derivative rule for {_name(body)}")


def _linear_cotangent(body: Body, inputs: Shapes) -> Diagram:
    b, _, gs = _cotangent_builder(body, inputs)
    return b.build(b.apply(adjoint_body(_stripped(body), inputs), gs))


@cotangent_body.register
def _(body: ConstScalar, inputs):
    b, _, _ = _cotangent_builder(body, inputs)
    return b.build([])


@cotangent_body.register
def _(body: ElementWise, inputs):
    if is_linear(body):
        return _linear_cotangent(body, inputs)
    b, (x,), (g,) = _cotangent_builder(body, inputs)
    if body.fn == "addc":
        return b.build([g])
    if body.fn != "exp" and body.fn not in DERIVATIVE_OF:
        raise NotDifferentiable(f"ew {body.label} has no derivative rule")
    _, dx = _scaled_by_derivative(b, body.fn, x, g)
    return b.build([dx])


@cotangent_body.register
def _(body: SoftMax, inputs):
    b, (x,), (g,) = _cotangent_builder(body, inputs)
    return b.build([_softmax_jvp(b, b.apply1(body, x), g)])


def _contract_tail(b: DiagramBuilder, wire: str, keep: int, width: int) -> str:
    """Cup axis keep+t with axis keep+width+t for every t; wire is [K, W, W']."""
    for t in reversed(range(width)):
        wire = b.apply1(Cup(keep + t, keep + 2 * t + 1), wire)
    return wire


def _contract_head(b: DiagramBuilder, wire: str, width: int) -> str:
    """Cup axis t with axis width+t for every t; wire is [W', W, K]."""
    for t in reversed(range(width)):
        wire = b.apply1(Cup(t, 2 * t + 1), wire)
    return wire


@cotangent_body.register
def _(body: OuterProduct, inputs):
    b, xs, gs = _cotangent_builder(body, inputs)
    i, j = body.i, body.j
    ri, rj = inputs[i].rank, inputs[j].rank
    g1, g2 = b.copy(gs[0])
    dxi = _contract_tail(b, b.outer(g1, xs[j]), ri, rj)
    dxj = _contract_head(b, b.outer(xs[i], g2), ri)
    rest = iter(gs[1:])
    order = [dxi if k == i else dxj if k == j else next(rest) for k in range(body.arity)]
    return b.build(order)


@cotangent_body.register
def _(body: Pool, inputs):
    if body.mode == "mean":
        return _linear_cotangent(body, inputs)
    b, (x,), (g,) = _cotangent_builder(body, inputs)
    return b.build([b.outer(b.apply1(MaxMask(), x), g)])


@cotangent_body.register
def _(body: MaxMask, inputs):
    raise NotDifferentiable("maxmask is piecewise constant; no derivative rule")


@cotangent_body.register
def _(body: Diagram, inputs):
    from .transforms import reverse_transform
    return reverse_transform(body)


def cotangent_cell(cell: Cell, inputs: Shapes) -> Diagram:
    """Reverse rule for a scoped cell as a diagram [x.., g..] -> [dx..].

    Under an inner scope the shared inputs receive the sum of their
    per-instance cotangents.
    """
    n = len(inputs)
    outputs = cell_type(cell, tuple(inputs))
    if not cell.broadcasts:
        return cotangent_body(cell.body, tuple(inputs))
    scope, rest = cell.broadcasts[0], cell.broadcasts[1:]
    inner = cotangent_cell(Cell(cell.body, rest), strip_scope(scope, tuple(inputs)))
    targets = None if scope.outer else tuple(scope.targets) + tuple(range(n, n + len(outputs)))
    lifted = Cell(inner, (BroadcastScope(scope.axis, targets),))
    sections = [(lifted,)]
    if not scope.outer and any(not scope.carries(k) for k in range(n)):
        sections.append(tuple(Cell(Identity()) if scope.carries(k) else Cell(SumAxis(0)) for k in range(n)))
    return Diagram(f"R{_name(cell.body)}_over_{scope.axis}", "x", DataShape(tuple(inputs) + tuple(outputs)),
                   DataShape(tuple(inputs)), tuple(sections))


def adjoint_or_cotangent(cell: Cell, inputs: Shapes) -> Tuple[Diagram, bool]:
    """Reverse rule for a cell and whether it needs the forward values."""
    if is_linear(_stripped(cell.body)):
        return adjoint_cell(Cell(_stripped(cell.body), cell.broadcasts), tuple(inputs)), False
    return cotangent_cell(cell, tuple(inputs)), True
