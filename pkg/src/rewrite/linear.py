"""
Adjoints and associated transposes of linear cells.

``adjoint_cell`` builds the matrix-transpose operator of a linear cell
(scopes included) as a small diagram; reverse-mode differentiation uses it.
``associated_transpose`` builds the unit/cup plumbing that moves chosen axes
across a single-segment linear cell and records what it did so the snake
rules can collapse it back to a direct primitive.
"""

import logging
from dataclasses import dataclass
from functools import singledispatch
from typing import List, Optional, Sequence, Tuple

from ..core.builder import DiagramBuilder
from ..core.compose import broadcast, compose_all, identity, stack
from ..core.errors import BadAxisMove, DiagramError, NotLinear
from ..core.ir import (
    IDENTITY, Add, AxisTranspose, Body, BroadcastScope, Cell, ConvTensor, Copy, Cup, DataShape, Delete,
    Diag, Diagram, ElementWise, Identity, IndexKet, LinearParam, Pool, SegmentSwap, SumAxis,
    TensorShape, Unit, View, body_arity, cell_runs, is_identity_cell,
)
from ..core.linearity import is_linear
from ..core.shapes import body_inputs, body_type, cell_type, infer_shapes, strip_scope

logger = logging.getLogger(__name__)

Shapes = Tuple[TensorShape, ...]


def _move_last_to(rank: int, position: int) -> Tuple[int, ...]:
    """Permutation taking the last of ``rank`` axes to ``position``."""
    rest = list(range(rank - 1))
    return tuple(rest[:position] + [rank - 1] + rest[position:])


def _transpose(b: DiagramBuilder, wire: str, perm: Sequence[int]) -> str:
    perm = tuple(perm)
    if perm == tuple(range(len(perm))):
        return wire
    return b.apply1(AxisTranspose(perm), wire)


def _name(body: Body) -> str:
    return body.name if isinstance(body, Diagram) else body.kind


# ---------------------------------------------------------------------------
# Adjoints
# ---------------------------------------------------------------------------

@singledispatch
def adjoint_body(prim: Body, inputs: Shapes) -> Diagram:
    """Transpose of a linear body: a diagram from its output shapes to its input shapes."""
    raise NotLinear(f"{_name(prim)} has no adjoint")


def _builder(prim: Body, inputs: Shapes) -> Tuple[DiagramBuilder, List[str]]:
    outputs = body_type(prim, inputs)
    b = DiagramBuilder(f"{_name(prim)}_adjoint", DataShape(tuple(outputs)), "g")
    return b, list(b.inputs)


@adjoint_body.register
def _(prim: Identity, inputs):
    return identity(DataShape(tuple(inputs)), "identity_adjoint", "g")


@adjoint_body.register
def _(prim: Copy, inputs):
    b, (g1, g2) = _builder(prim, inputs)
    return b.build([b.apply1(Add(0, 1), g1, g2)])


@adjoint_body.register
def _(prim: Delete, inputs):
    b, _ = _builder(prim, inputs)
    return b.build([b.const(0.0, inputs[0].axes)])


@adjoint_body.register
def _(prim: SegmentSwap, inputs):
    b, wires = _builder(prim, inputs)
    return b.build(b.apply(prim, wires))


@adjoint_body.register
def _(prim: AxisTranspose, inputs):
    inverse = [0] * len(prim.perm)
    for k, p in enumerate(prim.perm):
        inverse[p] = k
    b, (g,) = _builder(prim, inputs)
    return b.build([_transpose(b, g, inverse)])


@adjoint_body.register
def _(prim: Diag, inputs):
    r = inputs[0].rank
    b, (g,) = _builder(prim, inputs)
    g = b.apply1(Unit(inputs[0].axes[prim.q]), g)
    g = b.apply1(Diag(prim.p, r - 1), g)
    return b.build([_transpose(b, g, _move_last_to(r, prim.q))])


@adjoint_body.register
def _(prim: View, inputs):
    b, (g,) = _builder(prim, inputs)
    return b.build([b.apply1(View(prim.target, prim.source), g)])


@adjoint_body.register
def _(prim: IndexKet, inputs):
    r = inputs[0].rank
    axis = inputs[0].axes[prim.axis]
    b, (g,) = _builder(prim, inputs)
    basis = b.apply1(IndexKet(0, prim.index), b.apply1(Unit(axis), b.const(1.0)))
    g = b.outer(g, basis)
    return b.build([_transpose(b, g, _move_last_to(r, prim.axis))])


@adjoint_body.register
def _(prim: Cup, inputs):
    r = inputs[0].rank
    b, (g,) = _builder(prim, inputs)
    g = b.apply1(Unit(inputs[0].axes[prim.p]), g)
    rest = iter(range(r - 2))
    perm = [r - 2 if k == prim.p else r - 1 if k == prim.q else next(rest) for k in range(r)]
    return b.build([_transpose(b, g, perm)])


@adjoint_body.register
def _(prim: Unit, inputs):
    r = inputs[0].rank
    b, (g,) = _builder(prim, inputs)
    return b.build([b.apply1(Cup(r, r + 1), g)])


@adjoint_body.register
def _(prim: ElementWise, inputs):
    if not is_linear(prim):
        raise NotLinear(f"ew {prim.label} is not linear")
    b, (g,) = _builder(prim, inputs)
    return b.build([b.apply1(prim, g)])


@adjoint_body.register
def _(prim: Add, inputs):
    b, wires = _builder(prim, inputs)
    g, rest = wires[0], iter(wires[1:])
    g1, g2 = b.copy(g)
    order = [g1 if k == prim.i else g2 if k == prim.j else next(rest) for k in range(prim.arity)]
    return b.build(order)


@adjoint_body.register
def _(prim: SumAxis, inputs):
    r = inputs[0].rank
    b, (g,) = _builder(prim, inputs)
    ones = b.const(1.0, [inputs[0].axes[prim.axis]])
    g = b.outer(g, ones)
    return b.build([_transpose(b, g, _move_last_to(r, prim.axis))])


@adjoint_body.register
def _(prim: LinearParam, inputs):
    if not is_linear(prim):
        raise NotLinear(f"linear {prim.name} has a bias and is affine, not linear")
    b, (g,) = _builder(prim, inputs)
    flipped = LinearParam(prim.name, prim.source, prim.target, False, not prim.transposed)
    return b.build([b.apply1(flipped, g)])


@adjoint_body.register
def _(prim: ConvTensor, inputs):
    b, (g,) = _builder(prim, inputs)
    return b.build([b.apply1(flip_conv(prim), g)])


@adjoint_body.register
def _(prim: Pool, inputs):
    if prim.mode != "mean":
        raise NotLinear("pool max is not linear")
    b, (g,) = _builder(prim, inputs)
    size = inputs[0].size
    spread = b.const(1.0 / size, inputs[0].axes)
    return b.build([b.outer(g, spread)])


@adjoint_body.register
def _(prim: Diagram, inputs):
    return adjoint_diagram(prim)


def flip_conv(prim: ConvTensor) -> ConvTensor:
    return ConvTensor(prim.rank, prim.extent, prim.kernel, prim.stride, prim.dilation, prim.pad,
                      not prim.transposed, ())


def adjoint_cell(cell: Cell, inputs: Shapes) -> Diagram:
    """Adjoint of a scoped cell.

    An outer scope lifts the adjoint unchanged. An inner scope shares its
    non-target inputs across instances, so their cotangents are summed over
    the scope axis.
    """
    if not cell.broadcasts:
        return adjoint_body(cell.body, tuple(inputs))
    scope, rest = cell.broadcasts[0], cell.broadcasts[1:]
    inner = adjoint_cell(Cell(cell.body, rest), strip_scope(scope, tuple(inputs)))
    lifted = broadcast(inner, scope.axis)
    if scope.outer:
        return lifted
    sums = tuple(IDENTITY if scope.carries(k) else Cell(SumAxis(0)) for k in range(len(inputs)))
    if all(is_identity_cell(c) for c in sums):
        return lifted
    return Diagram(lifted.name, lifted.input_name, lifted.domain, DataShape(tuple(inputs)),
                   lifted.sections + (sums,))


def adjoint_diagram(diagram: Diagram) -> Diagram:
    """Adjoint of a linear diagram, sections in reverse order."""
    boundaries = infer_shapes(diagram)
    parts: List[Diagram] = []
    for k in reversed(range(len(diagram.sections))):
        section, state = diagram.sections[k], boundaries[k]
        row: Optional[Diagram] = None
        for pos, cell in cell_runs(section):
            run = tuple(state.segments[pos:pos + cell.arity])
            piece = identity(DataShape(run)) if is_identity_cell(cell) else adjoint_cell(cell, run)
            row = piece if row is None else stack(row, piece)
        if row is not None:
            parts.append(row)
    name = f"{diagram.name}_adjoint"
    if not parts:
        return identity(diagram.codomain, name, "g")
    result = compose_all(parts, name)
    return Diagram(name, "g", diagram.codomain, diagram.domain, result.sections)


# ---------------------------------------------------------------------------
# Associated transposes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransposeInfo:
    """Provenance of a transpose plumbing diagram"""
    body: Body
    in_shape: TensorShape
    out_shape: TensorShape
    moves_out: Tuple[int, ...]
    moves_in: Tuple[int, ...]

    @property
    def full(self) -> bool:
        return (self.moves_out == tuple(range(self.out_shape.rank))
                and self.moves_in == tuple(range(self.in_shape.rank)))


def parse_moves(spec: Optional[str], in_rank: int, out_rank: int) -> Tuple[Tuple[int, ...], Tuple[int, ...]]:
    """``full`` | ``out:i,j`` | ``in:i`` | ``out:i;in:j`` -> (output axes, input axes)."""
    spec = (spec or "full").strip()
    if spec == "full":
        return tuple(range(out_rank)), tuple(range(in_rank))
    moves_out: List[int] = []
    moves_in: List[int] = []
    for part in spec.split(";"):
        side, _, values = part.partition(":")
        try:
            indices = [int(v) for v in values.split(",") if v.strip()]
        except ValueError as exc:
            raise BadAxisMove(f"bad axis list in move spec '{part}'") from exc
        if side.strip() == "out":
            moves_out.extend(indices)
        elif side.strip() == "in":
            moves_in.extend(indices)
        else:
            raise BadAxisMove(f"move spec '{part}' must start with 'out:' or 'in:'")
    return tuple(moves_out), tuple(moves_in)


def associated_transpose(cell: Cell, in_shape: TensorShape, moves_out: Sequence[int],
                         moves_in: Sequence[int]) -> Diagram:
    """Plumbing realizing F^T for a single-segment linear cell F: [A] -> [O].

    Output axes ``moves_out`` move to the input side, input axes ``moves_in``
    to the output side: F^T: [O_moved, A_kept] -> [A_moved, O_kept].
    """
    if cell.broadcasts or body_arity(cell.body) != 1:
        raise BadAxisMove("only unscoped single-segment cells can be transposed")
    if not is_linear(cell.body):
        raise NotLinear(f"{_name(cell.body)} is not linear")
    outputs = cell_type(cell, (in_shape,))
    if len(outputs) != 1:
        raise BadAxisMove(f"{_name(cell.body)} has {len(outputs)} outputs; transposes need one")
    out_shape = outputs[0]
    moves_out, moves_in = tuple(moves_out), tuple(moves_in)
    for what, moves, rank in (("output", moves_out, out_shape.rank), ("input", moves_in, in_shape.rank)):
        if len(set(moves)) != len(moves) or any(not 0 <= m < rank for m in moves):
            raise BadAxisMove(f"{what} axes {list(moves)} are not distinct positions below {rank}")

    kept_in = [t for t in range(in_shape.rank) if t not in moves_in]
    kept_out = [j for j in range(out_shape.rank) if j not in moves_out]
    domain = TensorShape(tuple(out_shape.axes[m] for m in moves_out) + tuple(in_shape.axes[t] for t in kept_in))
    name = f"{_name(cell.body)}_T"
    b = DiagramBuilder(name, DataShape((domain,)), "x")
    (wire,) = b.inputs
    labels: List[Tuple[str, int]] = [("m", m) for m in moves_out] + [("a", t) for t in kept_in]
    for t in moves_in:
        wire = b.apply1(Unit(in_shape.axes[t]), wire)
        labels += [("n", t), ("a", t)]
    target = [("n", t) for t in moves_in] + [("m", m) for m in moves_out] + [("a", t) for t in range(in_shape.rank)]
    wire = _transpose(b, wire, [labels.index(lab) for lab in target])
    lead = [in_shape.axes[t] for t in moves_in] + [out_shape.axes[m] for m in moves_out]
    wire = b.apply1(cell.body, wire, broadcasts=tuple(BroadcastScope(a) for a in lead))
    labels = [("n", t) for t in moves_in] + [("m", m) for m in moves_out] + [("o", j) for j in range(out_shape.rank)]
    for m in moves_out:
        p, q = sorted((labels.index(("m", m)), labels.index(("o", m))))
        wire = b.apply1(Cup(p, q), wire)
        labels = [lab for k, lab in enumerate(labels) if k not in (p, q)]
    result = b.build([wire])
    info = TransposeInfo(cell.body, in_shape, out_shape, moves_out, moves_in)
    logger.debug("built transpose plumbing for %s with %d sections", name, len(result.sections))
    return Diagram(result.name, result.input_name, result.domain, result.codomain, result.sections, info)


def direct_transpose(info: TransposeInfo) -> Optional[Body]:
    """Single primitive equal to a full transpose, when there is one."""
    if not info.full:
        return None
    body = info.body
    if isinstance(body, Diagram) and isinstance(body.transpose_of, TransposeInfo) and body.transpose_of.full:
        return body.transpose_of.body
    if isinstance(body, LinearParam) and not body.bias:
        return LinearParam(body.name, body.source, body.target, False, not body.transposed)
    if isinstance(body, ConvTensor):
        return flip_conv(body)
    if isinstance(body, Unit):
        r = info.in_shape.rank
        return Cup(r, r + 1)
    if isinstance(body, View):
        return View(body.target, body.source)
    if isinstance(body, AxisTranspose):
        inverse = [0] * len(body.perm)
        for k, p in enumerate(body.perm):
            inverse[p] = k
        return AxisTranspose(tuple(inverse))
    if isinstance(body, ElementWise) and is_linear(body):
        return body
    if isinstance(body, Identity):
        return body
    return None


def recover_transpose(diagram: Diagram) -> Optional[TransposeInfo]:
    """Provenance of a full transpose plumbing, read back from its structure
    when ``transpose_of`` was lost (a diagram recompiled from source)."""
    if isinstance(diagram.transpose_of, TransposeInfo):
        return diagram.transpose_of
    if len(diagram.domain) != 1 or len(diagram.codomain) != 1:
        return None
    boundaries = infer_shapes(diagram)
    for s, section in enumerate(diagram.sections):
        for pos, cell in cell_runs(section):
            if not cell.broadcasts or isinstance(cell.body, Diagram) or body_arity(cell.body) != 1:
                continue
            if not is_linear(cell.body):
                continue
            (in_shape,) = body_inputs(cell, (boundaries[s].segments[pos],))
            (out_shape,) = body_type(cell.body, (in_shape,))
            try:
                candidate = associated_transpose(Cell(cell.body), in_shape, tuple(range(out_shape.rank)),
                                                 tuple(range(in_shape.rank)))
            except DiagramError:
                continue
            if (candidate.domain, candidate.codomain, candidate.sections) == (
                    diagram.domain, diagram.codomain, diagram.sections):
                return candidate.transpose_of
    return None
