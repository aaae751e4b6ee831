"""
Lowering: SourceAst -> named, validated Diagrams.

Placement rules:
- ``copy k`` / ``delete k`` act on segment k; ``swap``/``outer``/``add i j``
  act on the run min(i,j)..max(i,j) with run-relative indices.
- ``const`` consumes nothing and inserts its output at segment 0.
- ``call`` consumes as many leading segments as the callee's domain has.
- every other op acts on segment 0; untouched segments get identity cells.
- ``par`` branches take consecutive segments, each as many as its first step
  needs (an empty branch passes one segment through); leftovers pass through.
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from ..core.errors import (
    ConvArithmeticError, DiagramError, DiagramSyntaxError, DuplicateName, SegmentOutOfRange,
    ShapeMismatch, UnboundAxis, UndefinedName,
)
from ..core.ir import (
    IDENTITY, Add, Axis, AxisLen, AxisTranspose, Body, BroadcastScope, Cell, ConstScalar,
    ConvTensor, Copy, Cup, DataShape, Delete, Diag, Diagram, ElementWise, ELEMENTWISE_NAMES,
    Identity, IndexKet, LinearParam, MaxMask, OuterProduct, PARAMETRIC_ELEMENTWISE, Pool, Section,
    SegmentSwap, SoftMax, SumAxis, TensorShape, Unit, View, identity_cells,
)
from ..core.shapes import body_inputs, conv_out_extent, infer_pad, infer_shapes, section_type
from .grammar import parse
from .syntax_tree import (
    AxesBlock, AxisNode, AxisRef, DiagramDecl, MapPrefix, OpNode, ParamDecl, ShapeNode, SourceAst,
    Step,
)

logger = logging.getLogger(__name__)


@dataclass
class _Context:
    env: Dict[str, int]
    params: Dict[str, LinearParam]
    diagrams: Dict[str, Diagram]
    owner: str = ""
    par_count: int = 0


def lower_axis(node: AxisNode, env: Dict[str, int]) -> Axis:
    try:
        if node.name is not None:
            if node.name not in env:
                raise UnboundAxis(node.name, node.span)
            return Axis(AxisLen(node.name, env[node.name]), node.width)
        return Axis(AxisLen(None, node.value), node.width)
    except DiagramError as exc:
        raise exc.with_span(node.span)


def lower_shape(node: ShapeNode, env: Dict[str, int]) -> TensorShape:
    return TensorShape(tuple(lower_axis(a, env) for a in node.axes))


def _dshape(nodes: Sequence[ShapeNode], env: Dict[str, int]) -> DataShape:
    return DataShape(tuple(lower_shape(n, env) for n in nodes))


def lower(ast: SourceAst, bindings: Optional[Dict[str, int]] = None) -> Dict[str, Diagram]:
    """Lower every diagram of a file, in file order.

    ``bindings`` override (or add to) the file's ``axes`` declarations.
    """
    env: Dict[str, int] = {}
    for block in (i for i in ast.items if isinstance(i, AxesBlock)):
        for decl in block.decls:
            if decl.name in env:
                raise DuplicateName(f"axis '{decl.name}' declared twice", decl.span)
            env[decl.name] = decl.value
    env.update(bindings or {})

    params: Dict[str, LinearParam] = {}
    for decl in (i for i in ast.items if isinstance(i, ParamDecl)):
        if decl.name in params:
            raise DuplicateName(f"parameter '{decl.name}' declared twice", decl.span)
        params[decl.name] = LinearParam(decl.name, lower_shape(decl.source, env),
                                        lower_shape(decl.target, env), decl.bias)

    ctx = _Context(env, params, {})
    for decl in ast.diagrams:
        if decl.name in ctx.diagrams:
            raise DuplicateName(f"diagram '{decl.name}' defined twice", decl.span)
        ctx.diagrams[decl.name] = _lower_diagram(decl, ctx)
    return dict(ctx.diagrams)


def _lower_diagram(decl: DiagramDecl, ctx: _Context) -> Diagram:
    ctx.owner, ctx.par_count = decl.name, 0
    domain = _dshape(decl.domain, ctx.env)
    codomain = _dshape(decl.codomain, ctx.env)
    sections, state = _lower_steps(decl.steps, domain, ctx)
    if not state.matches(codomain):
        raise ShapeMismatch(f"codomain of {decl.name}", codomain, state, decl.span)
    diagram = Diagram(decl.name, decl.input_name, domain, codomain, tuple(sections))
    try:
        infer_shapes(diagram)
    except DiagramError as exc:
        raise exc.with_span(decl.span)
    logger.debug("lowered %s: %d sections", decl.name, len(sections))
    return diagram


def _lower_steps(steps: Sequence[Step], state: DataShape, ctx: _Context) -> Tuple[List[Section], DataShape]:
    sections: List[Section] = []
    for step in steps:
        try:
            section = _lower_step(step, state, ctx)
            state = section_type(section, state)
        except DiagramError as exc:
            raise exc.with_span(step.op.span)
        sections.append(section)
    return sections, state


def _placement(op: OpNode, ctx: _Context) -> Tuple[int, int]:
    """(run start, run length) of an op."""
    kind, args = op.kind, op.args
    if kind in ("copy", "delete"):
        if args[0] < 0:
            raise SegmentOutOfRange(f"{kind} segment {args[0]} is negative")
        return args[0], 1
    if kind in ("swap", "outer", "add"):
        i, j = args
        if i < 0 or j < 0 or i == j:
            raise SegmentOutOfRange(f"{kind} needs two distinct non-negative segments, got {i} {j}")
        return min(i, j), abs(i - j) + 1
    if kind == "const":
        return 0, 0
    if kind == "call":
        return 0, len(_callee(args[0], ctx).domain)
    if kind == "par":
        return 0, _par_arity(op, ctx)
    return 0, 1


def _branch_arity(branch: Sequence[Step], ctx: _Context) -> int:
    if not branch:
        return 1
    start, arity = _placement(branch[0].op, ctx)
    return start + arity


def _par_arity(op: OpNode, ctx: _Context) -> int:
    return sum(_branch_arity(b, ctx) for b in op.args[0])


def _callee(name: str, ctx: _Context) -> Diagram:
    if name not in ctx.diagrams:
        raise UndefinedName(f"diagram '{name}' is not defined before this call")
    return ctx.diagrams[name]


def _scope(prefix: MapPrefix, ctx: _Context) -> BroadcastScope:
    axis = lower_axis(prefix.axis, ctx.env)
    return BroadcastScope(axis, prefix.targets)


def _lower_step(step: Step, state: DataShape, ctx: _Context) -> Section:
    op = step.op
    start, arity = _placement(op, ctx)
    if start + arity > len(state):
        raise SegmentOutOfRange(
            f"{op.kind} needs segments {start}..{start + arity - 1} but the boundary has {len(state)}")
    scopes = tuple(_scope(p, ctx) for p in step.prefixes)
    rest = len(state) - start - arity

    if op.kind == "par":
        if not scopes:
            return _lower_par(op, state, ctx)
        run = body_inputs(Cell(Identity(), scopes), tuple(state.segments[:arity]))
        inner_state = DataShape(tuple(run))
        name = f"{ctx.owner}_par{ctx.par_count}"
        cells = _lower_par(op, inner_state, ctx)
        nested = Diagram(name, "x", inner_state, section_type(cells, inner_state), (cells,))
        return (Cell(nested, scopes),) + identity_cells(rest)

    run = tuple(state.segments[start:start + arity])
    inputs = body_inputs(Cell(Identity(), scopes), run)
    body = _lower_op(op, inputs, ctx)
    return identity_cells(start) + (Cell(body, scopes),) + identity_cells(rest)


def _lower_par(op: OpNode, state: DataShape, ctx: _Context) -> Section:
    """Cells tiling ``state``: one run per branch, then pass-through identities."""
    number = ctx.par_count
    ctx.par_count += 1
    cells: List[Cell] = []
    pos = 0
    for b, branch in enumerate(op.args[0]):
        arity = _branch_arity(branch, ctx)
        if pos + arity > len(state):
            raise SegmentOutOfRange(
                f"par branch {b} needs {arity} segments from {pos} but the boundary has {len(state)}")
        sub = DataShape(state.segments[pos:pos + arity])
        if not branch:
            cells.append(IDENTITY)
        elif len(branch) == 1:
            try:
                cells.extend(_lower_step(branch[0], sub, ctx))
            except DiagramError as exc:
                raise exc.with_span(branch[0].op.span)
        else:
            sections, out = _lower_steps(branch, sub, ctx)
            nested = Diagram(f"{ctx.owner}_par{number}_{b}", "x", sub, out, tuple(sections))
            cells.append(Cell(nested))
        pos += arity
    return tuple(cells) + identity_cells(len(state) - pos)


def _resolve(refs: Sequence[AxisRef], shape: TensorShape) -> List[int]:
    """Axis positions for refs; a repeated name picks its next unused occurrence."""
    used: List[int] = []
    for ref in refs:
        if isinstance(ref, int):
            used.append(ref)
            continue
        for i, axis in enumerate(shape.axes):
            if axis.name == ref and i not in used:
                used.append(i)
                break
        else:
            raise UndefinedName(f"axis '{ref}' does not occur (again) in {shape}")
    return used


def _lower_op(op: OpNode, inputs: Sequence[TensorShape], ctx: _Context) -> Body:
    kind, args = op.kind, op.args
    first = inputs[0] if inputs else TensorShape()
    if kind in ("linear", "linearT"):
        template = ctx.params.get(args[0])
        if template is None:
            raise UndefinedName(f"parameter '{args[0]}' is not declared")
        if kind == "linearT":
            return LinearParam(template.name, template.source, template.target, False, True)
        return LinearParam(template.name, template.source, template.target,
                           template.bias and not args[1])
    if kind == "ew":
        fn, arg = args
        if fn not in ELEMENTWISE_NAMES:
            raise UndefinedName(f"element-wise function '{fn}' is not a builtin")
        if (fn in PARAMETRIC_ELEMENTWISE) != (arg is not None):
            expected = f"{fn}(number)" if fn in PARAMETRIC_ELEMENTWISE else fn
            raise DiagramSyntaxError(op.span.line, op.span.col, (expected,), f"ew {fn}")
        return ElementWise(fn, arg)
    if kind == "softmax":
        return SoftMax()
    if kind == "maxmask":
        return MaxMask()
    if kind == "copy":
        return Copy()
    if kind == "delete":
        return Delete()
    if kind in ("swap", "outer", "add"):
        i, j = args
        low = min(i, j)
        cls = {"swap": SegmentSwap, "outer": OuterProduct, "add": Add}[kind]
        return cls(i - low, j - low)
    if kind == "transpose":
        return AxisTranspose(tuple(args))
    if kind in ("diag", "cup"):
        p, q = sorted(_resolve(args, first))
        return Diag(p, q) if kind == "diag" else Cup(p, q)
    if kind == "view":
        return View(lower_shape(args[0], ctx.env), lower_shape(args[1], ctx.env))
    if kind == "index":
        return IndexKet(_resolve(args[:1], first)[0], args[1])
    if kind == "unit":
        return Unit(lower_axis(args[0], ctx.env))
    if kind == "sum":
        return SumAxis(_resolve(args, first)[0])
    if kind == "pool":
        return Pool(args[0])
    if kind == "const":
        return ConstScalar(float(args[0]))
    if kind == "call":
        callee = _callee(args[0], ctx)
        logger.debug("%s: nesting call to %s", ctx.owner, callee.name)
        return callee
    if kind in ("conv", "convT"):
        return _lower_conv(op, first, ctx)
    raise UndefinedName(f"unknown operation '{kind}'")


def _lower_conv(op: OpNode, x: TensorShape, ctx: _Context) -> ConvTensor:
    rank, kernel, stride, dilation, pad, out = op.args
    for name, values in (("k", kernel), ("s", stride), ("d", dilation), ("pad", pad or kernel)):
        if len(values) != rank:
            raise ConvArithmeticError(f"{op.kind} {name}= needs {rank} values, got {len(values)}")
    out_axes = tuple(lower_axis(a, ctx.env) for a in out) if out is not None else None
    if out_axes is not None and len(out_axes) != rank:
        raise ConvArithmeticError(f"{op.kind} out= needs {rank} axes, got {len(out_axes)}")
    labels = tuple(a.name for a in out_axes) if out_axes and all(a.name for a in out_axes) else ()

    if op.kind == "conv":
        if x.rank != rank:
            raise ShapeMismatch("conv input", f"a rank-{rank} segment", x)
        extent, produced = x.extents, None
        if out_axes is not None:
            produced = tuple(a.n for a in out_axes)
    else:
        if out_axes is None:
            raise DiagramSyntaxError(op.span.line, op.span.col, ("out=",), "convT without out=")
        if x.rank != 2 * rank:
            raise ShapeMismatch("transposed conv input", f"a rank-{2 * rank} segment", x)
        extent = tuple(a.n for a in out_axes)
        produced = x.extents[:rank]

    if pad is None:
        if produced is None:
            pad = (0,) * rank
        else:
            pad = tuple(infer_pad(*args) for args in zip(extent, kernel, stride, dilation, produced))
            logger.debug("%s: inferred pad=%s for %s", ctx.owner, pad, op.kind)
    elif produced is not None:
        got = tuple(conv_out_extent(*args) for args in zip(extent, kernel, stride, dilation, pad))
        if got != tuple(produced):
            raise ConvArithmeticError(
                f"{op.kind} with pad={','.join(map(str, pad))} gives extent {got}, declared {tuple(produced)}")
    return ConvTensor(rank, tuple(extent), tuple(kernel), tuple(stride), tuple(dilation), tuple(pad),
                      op.kind == "convT", labels)


def compile_source(text: str, bindings: Optional[Dict[str, int]] = None) -> Dict[str, Diagram]:
    """parse + lower."""
    return lower(parse(text), bindings)


def compile_file(path: str, bindings: Optional[Dict[str, int]] = None) -> Dict[str, Diagram]:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    logger.debug("compiling %s", os.path.basename(path))
    return compile_source(text, bindings)
