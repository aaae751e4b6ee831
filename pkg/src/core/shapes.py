"""
Shape inference.

Local typing rules for every primitive, broadcast-scope stripping for cells,
section tiling and whole-diagram boundary inference.
"""

import logging
from functools import singledispatch
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import ConvArithmeticError, SegmentOutOfRange, ShapeMismatch
from .ir import (
    Add, Axis, AxisLen, AxisTranspose, Body, BroadcastScope, Cell, ConstScalar, ConvTensor,
    Copy, Cup, DataShape, Delete, Diag, Diagram, ElementWise, Identity, IndexKet, LinearParam,
    MaxMask, OuterProduct, Pool, Primitive, Section, SegmentSwap, SoftMax, SumAxis, TensorShape,
    Unit, View, body_arity,
)

logger = logging.getLogger(__name__)

Shapes = Tuple[TensorShape, ...]


def conv_out_extent(x: int, k: int, s: int, d: int, pad: int) -> int:
    """floor((x + 2·pad - d·(k-1) - 1) / s) + 1, the number of valid output positions."""
    if min(x, k, s, d) < 1 or pad < 0:
        raise ConvArithmeticError(
            f"convolution parameters out of range (x={x}, k={k}, s={s}, d={d}, pad={pad})")
    span = x + 2 * pad - d * (k - 1) - 1
    if span < 0:
        raise ConvArithmeticError(
            f"kernel of extent {d * (k - 1) + 1} does not fit input of extent {x + 2 * pad}")
    return span // s + 1


def infer_pad(x: int, k: int, s: int, d: int, out: int) -> int:
    """Smallest zero padding giving the declared output extent."""
    for pad in range(0, d * (k - 1) + s * out + 1):
        try:
            if conv_out_extent(x, k, s, d, pad) == out:
                return pad
        except ConvArithmeticError:
            continue
    raise ConvArithmeticError(
        f"no padding yields output extent {out} from x={x}, k={k}, s={s}, d={d}")


def _check_position(value: int, limit: int, what: str) -> None:
    if not 0 <= value < limit:
        raise SegmentOutOfRange(f"{what} {value} out of range (0..{limit - 1})")


def _one(inputs: Shapes, kind: str) -> TensorShape:
    if len(inputs) != 1:
        raise SegmentOutOfRange(f"{kind} takes one segment, got {len(inputs)}")
    return inputs[0]


@singledispatch
def primitive_type(prim: Primitive, inputs: Shapes) -> Shapes:
    """Output shapes of a primitive body given its (scope-stripped) input shapes."""
    raise TypeError(f"no typing rule for {type(prim).__name__}")


@primitive_type.register
def _(prim: Identity, inputs: Shapes) -> Shapes:
    return (_one(inputs, "identity"),)


@primitive_type.register
def _(prim: Copy, inputs: Shapes) -> Shapes:
    x = _one(inputs, "copy")
    return (x, x)


@primitive_type.register
def _(prim: Delete, inputs: Shapes) -> Shapes:
    _one(inputs, "delete")
    return ()


@primitive_type.register
def _(prim: SegmentSwap, inputs: Shapes) -> Shapes:
    out = list(inputs)
    out[prim.i], out[prim.j] = out[prim.j], out[prim.i]
    return tuple(out)


@primitive_type.register
def _(prim: AxisTranspose, inputs: Shapes) -> Shapes:
    x = _one(inputs, "transpose")
    if sorted(prim.perm) != list(range(x.rank)):
        raise ShapeMismatch("transpose", f"a permutation of {x.rank} axes", list(prim.perm))
    return (TensorShape(tuple(x.axes[p] for p in prim.perm)),)


def _axis_pair(x: TensorShape, p: int, q: int, kind: str) -> None:
    _check_position(p, x.rank, f"{kind} axis")
    _check_position(q, x.rank, f"{kind} axis")
    if p >= q:
        raise SegmentOutOfRange(f"{kind} needs two distinct axes with p < q, got {p}, {q}")
    if x.axes[p].n != x.axes[q].n:
        raise ShapeMismatch(f"{kind} axes {p} and {q}", x.axes[p].n, x.axes[q].n)


@primitive_type.register
def _(prim: Diag, inputs: Shapes) -> Shapes:
    x = _one(inputs, "diag")
    _axis_pair(x, prim.p, prim.q, "diag")
    return (x.without(prim.q),)


@primitive_type.register
def _(prim: View, inputs: Shapes) -> Shapes:
    x = _one(inputs, "view")
    if not x.matches(prim.source):
        raise ShapeMismatch("view source", prim.source, x)
    if prim.source.size != prim.target.size:
        raise ShapeMismatch(
            "view", f"{prim.source.size} elements", f"{prim.target.size} elements in {prim.target}")
    return (prim.target,)


@primitive_type.register
def _(prim: IndexKet, inputs: Shapes) -> Shapes:
    x = _one(inputs, "index")
    _check_position(prim.axis, x.rank, "index axis")
    _check_position(prim.index, x.axes[prim.axis].n, "index value")
    return (x.without(prim.axis),)


def _pair_run(inputs: Shapes, i: int, j: int, kind: str) -> Tuple[TensorShape, TensorShape, Shapes]:
    if i == j:
        raise SegmentOutOfRange(f"{kind} needs two distinct segments")
    a, b = inputs[i], inputs[j]
    rest = tuple(s for k, s in enumerate(inputs) if k not in (i, j))
    return a, b, rest


@primitive_type.register
def _(prim: OuterProduct, inputs: Shapes) -> Shapes:
    a, b, rest = _pair_run(inputs, prim.i, prim.j, "outer")
    return (TensorShape(a.axes + b.axes),) + rest


@primitive_type.register
def _(prim: Add, inputs: Shapes) -> Shapes:
    a, b, rest = _pair_run(inputs, prim.i, prim.j, "add")
    if not a.matches(b):
        raise ShapeMismatch("add", a, b)
    return (a,) + rest


@primitive_type.register
def _(prim: Cup, inputs: Shapes) -> Shapes:
    x = _one(inputs, "cup")
    _axis_pair(x, prim.p, prim.q, "cup")
    return (x.without(prim.p, prim.q),)


@primitive_type.register
def _(prim: Unit, inputs: Shapes) -> Shapes:
    x = _one(inputs, "unit")
    return (TensorShape(x.axes + (prim.axis, prim.axis)),)


@primitive_type.register
def _(prim: ElementWise, inputs: Shapes) -> Shapes:
    return (_one(inputs, "ew"),)


@primitive_type.register
def _(prim: SoftMax, inputs: Shapes) -> Shapes:
    x = _one(inputs, "softmax")
    if x.rank != 1:
        raise ShapeMismatch("softmax", "a rank-1 segment (broadcast the other axes)", x)
    return (x,)


@primitive_type.register
def _(prim: SumAxis, inputs: Shapes) -> Shapes:
    x = _one(inputs, "sum")
    _check_position(prim.axis, x.rank, "sum axis")
    return (x.without(prim.axis),)


@primitive_type.register
def _(prim: LinearParam, inputs: Shapes) -> Shapes:
    x = _one(inputs, "linear")
    source, target = (prim.target, prim.source) if prim.transposed else (prim.source, prim.target)
    if not x.matches(source):
        raise ShapeMismatch(f"linear {prim.name} input", source, x)
    return (target,)


def _conv_check(prim: ConvTensor) -> None:
    r = prim.rank
    for name in ("extent", "kernel", "stride", "dilation", "pad"):
        if len(getattr(prim, name)) != r:
            raise ConvArithmeticError(f"conv {name} needs {r} values, got {len(getattr(prim, name))}")
    if prim.labels and len(prim.labels) != r:
        raise ConvArithmeticError(f"conv out= needs {r} labels")


def conv_output_extents(prim: ConvTensor) -> Tuple[int, ...]:
    return tuple(
        conv_out_extent(x, k, s, d, p)
        for x, k, s, d, p in zip(prim.extent, prim.kernel, prim.stride, prim.dilation, prim.pad))


def _labelled(values: Sequence[int], labels: Sequence[str], tandem: str) -> Tuple[Axis, ...]:
    group = tandem if len(values) > 1 else None
    names = list(labels) if labels else [None] * len(values)
    return tuple(Axis(AxisLen(name, v), tandem=group) for name, v in zip(names, values))


@primitive_type.register
def _(prim: ConvTensor, inputs: Shapes) -> Shapes:
    x = _one(inputs, "conv")
    _conv_check(prim)
    ys = conv_output_extents(prim)
    y_axes = _labelled(ys, () if prim.transposed else prim.labels, "y")
    k_axes = _labelled(prim.kernel, (), "k")
    x_axes = _labelled(prim.extent, prim.labels if prim.transposed else (), "x")
    if prim.transposed:
        expected = TensorShape(y_axes + k_axes)
        if not x.matches(expected):
            raise ShapeMismatch("transposed conv input", expected, x)
        return (TensorShape(x_axes),)
    if x.extents != tuple(prim.extent):
        raise ShapeMismatch("conv input", TensorShape(x_axes), x)
    return (TensorShape(y_axes + k_axes),)


@primitive_type.register
def _(prim: Pool, inputs: Shapes) -> Shapes:
    _one(inputs, "pool")
    if prim.mode not in ("max", "mean"):
        raise ShapeMismatch("pool", "max or mean", prim.mode)
    return (TensorShape(),)


@primitive_type.register
def _(prim: ConstScalar, inputs: Shapes) -> Shapes:
    if inputs:
        raise SegmentOutOfRange("const takes no input segments")
    return (TensorShape(),)


@primitive_type.register
def _(prim: MaxMask, inputs: Shapes) -> Shapes:
    return (_one(inputs, "maxmask"),)


@primitive_type.register
def _(prim: Diagram, inputs: Shapes) -> Shapes:
    return tuple(infer_shapes(prim, inputs=DataShape(tuple(inputs)))[-1])


def strip_scope(scope: BroadcastScope, inputs: Shapes) -> Shapes:
    """Remove a scope's leading axis from the segments that carry it."""
    if scope.targets is not None:
        for t in scope.targets:
            _check_position(t, len(inputs), "broadcast target")
    stripped = []
    for pos, shape in enumerate(inputs):
        if not scope.carries(pos):
            stripped.append(shape)
            continue
        if shape.rank == 0 or shape.axes[0].n != scope.axis.n:
            lead = shape.axes[0].n if shape.rank else "no axis"
            raise ShapeMismatch(f"broadcast over {scope.axis} on segment {pos}", scope.axis.n, lead)
        stripped.append(TensorShape(shape.axes[1:]))
    return tuple(stripped)


def body_inputs(cell: Cell, inputs: Shapes) -> Shapes:
    """Input shapes seen by the cell body once every scope is stripped."""
    for scope in cell.broadcasts:
        inputs = strip_scope(scope, inputs)
    return inputs


def cell_type(cell: Cell, inputs: Shapes) -> Shapes:
    """Output shapes of a scoped cell."""
    arity = body_arity(cell.body)
    if len(inputs) != arity:
        raise SegmentOutOfRange(f"cell expects {arity} segments, got {len(inputs)}")
    outputs = body_type(cell.body, body_inputs(cell, inputs))
    for scope in reversed(cell.broadcasts):
        outputs = tuple(s.prepend(scope.axis) for s in outputs)
    return outputs


def body_type(body: Body, inputs: Shapes) -> Shapes:
    return primitive_type(body, tuple(inputs))


def section_type(section: Section, state: DataShape) -> DataShape:
    total = sum(c.arity for c in section)
    if total != len(state):
        raise SegmentOutOfRange(
            f"section covers {total} segments but the boundary has {len(state)}")
    pos, out = 0, []
    for cell in section:
        n = cell.arity
        out.extend(cell_type(cell, tuple(state.segments[pos:pos + n])))
        pos += n
    return DataShape(tuple(out))


def infer_shapes(diagram: Diagram, env: Optional[Dict[str, int]] = None,
                 inputs: Optional[DataShape] = None) -> List[DataShape]:
    """Every boundary DataShape of a diagram, domain first and codomain last.

    ``env`` rebinds symbolic axis lengths first. ``inputs`` lets a caller type
    a nested diagram against the shapes actually flowing into it.
    """
    if env:
        from .compose import rebind
        diagram = rebind(diagram, env)
    state = diagram.domain
    if inputs is not None:
        if not inputs.matches(state):
            raise ShapeMismatch(f"input of {diagram.name}", state, inputs)
    boundaries = [state]
    for k, section in enumerate(diagram.sections):
        try:
            state = section_type(section, state)
        except ShapeMismatch as exc:
            exc.position = f"section {k} of {diagram.name}: {exc.position}"
            exc.message = f"shape mismatch at {exc.position}: expected {exc.expected}, found {exc.found}"
            raise
        boundaries.append(state)
    if not state.matches(diagram.codomain):
        raise ShapeMismatch(f"codomain of {diagram.name}", diagram.codomain, state)
    return boundaries
