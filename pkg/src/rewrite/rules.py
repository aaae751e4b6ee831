"""
Semantics-preserving diagram rewrites.

Every rule returns a RewriteResult; ``applied`` is False when nothing
matched and the diagram comes back unchanged.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from ..config import get_current_config
from ..core.builder import DiagramBuilder
from ..core.compose import sequential_cells
from ..core.errors import BadAxisMove, NotLinear, NotMultilinear, SegmentOutOfRange
from ..core.ir import (
    IDENTITY, AxisTranspose, BroadcastScope, Cell, Cup, DataShape, Diag, Diagram, IndexKet,
    OuterProduct, Section, SumAxis, TensorShape, Unit, View, cell_at, cell_runs, identity_cells,
    is_identity_cell, is_identity_section, parse_address,
)
from ..core.linearity import cell_is_linear
from ..core.shapes import body_inputs, cell_type, infer_shapes, primitive_type, section_type
from .linear import associated_transpose, direct_transpose, parse_moves, recover_transpose

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewriteResult:
    diagram: Diagram
    applied: bool
    detail: str = ""


def _with_sections(diagram: Diagram, sections: Sequence[Section]) -> Diagram:
    return Diagram(diagram.name, diagram.input_name, diagram.domain, diagram.codomain,
                   tuple(sections), diagram.transpose_of)


def _drop_identity_sections(sections: Sequence[Section]) -> List[Section]:
    return [s for s in sections if not is_identity_section(s)]


def cell_inputs(diagram: Diagram, address: str) -> Tuple[TensorShape, ...]:
    """Input shapes of the addressed cell, relative to its own diagram level."""
    cell_at(diagram, address)
    current = diagram
    inputs: Tuple[TensorShape, ...] = ()
    path = parse_address(address)
    for depth, (s, c) in enumerate(path):
        boundaries = infer_shapes(current)
        pos, cell = cell_runs(current.sections[s])[c]
        inputs = tuple(boundaries[s].segments[pos:pos + cell.arity])
        if depth + 1 < len(path):
            if not isinstance(cell.body, Diagram):
                raise SegmentOutOfRange(f"address {address} descends into a primitive")
            current = cell.body
    return inputs


def _cell_domain(cell: Cell) -> Tuple[TensorShape, ...]:
    shapes = list(cell.body.domain.segments)
    for scope in reversed(cell.broadcasts):
        shapes = [s.prepend(scope.axis) if scope.carries(k) else s for k, s in enumerate(shapes)]
    return tuple(shapes)


def replace_cell(diagram: Diagram, address: str, new_cell: Cell, retype: bool = False) -> Diagram:
    """Swap the addressed cell for ``new_cell``.

    With ``retype`` the new cell may change type; the enclosing domain is
    patched when the cell sits in the first section and every codomain is
    re-inferred.
    """
    cell_at(diagram, address)
    return _replace(diagram, parse_address(address), new_cell, retype)


def _replace(diagram: Diagram, path, new_cell: Cell, retype: bool) -> Diagram:
    (s, c), rest = path[0], path[1:]
    section = list(diagram.sections[s])
    old = section[c]
    if rest:
        new = Cell(_replace(old.body, rest, new_cell, retype), old.broadcasts)
    else:
        new = new_cell
    section[c] = new
    sections = diagram.sections[:s] + (tuple(section),) + diagram.sections[s + 1:]
    if not retype:
        return _with_sections(diagram, sections)
    domain = diagram.domain
    if s == 0 and isinstance(new.body, Diagram):
        pos = cell_runs(diagram.sections[0])[c][0]
        segments = domain.segments
        domain = DataShape(segments[:pos] + _cell_domain(new) + segments[pos + old.arity:])
    state = domain
    for section_cells in sections:
        state = section_type(section_cells, state)
    return Diagram(diagram.name, diagram.input_name, domain, state, sections, diagram.transpose_of)


# ---------------------------------------------------------------------------
# Snake reduction
# ---------------------------------------------------------------------------

def _collapse_cells(diagram: Diagram) -> Tuple[List[Section], int]:
    """Collapse transpose plumbing and recurse into nested diagrams."""
    count = 0
    sections = []
    for section in diagram.sections:
        cells = []
        for cell in section:
            body = cell.body
            if isinstance(body, Diagram):
                info = recover_transpose(body)
                direct = direct_transpose(info) if info is not None else None
                if direct is not None:
                    cell = Cell(direct, cell.broadcasts)
                    count += 1
                else:
                    inner = snake_reduce(body)
                    if inner.applied:
                        cell = Cell(inner.diagram, cell.broadcasts)
                        count += 1
            cells.append(cell)
        sections.append(tuple(cells))
    return sections, count


def _output_positions(section: Section, state: DataShape) -> List[int]:
    positions, out = [], 0
    for pos, cell in cell_runs(section):
        positions.append(out)
        out += len(cell_type(cell, tuple(state.segments[pos:pos + cell.arity])))
    return positions


def _find_snake(diagram: Diagram) -> Optional[Tuple[int, int, int, Cell]]:
    """First unit;cup pair: (section, unit cell index, cup cell index, replacement)."""
    boundaries = infer_shapes(diagram)
    for k in range(len(diagram.sections) - 1):
        first, second = diagram.sections[k], diagram.sections[k + 1]
        out_positions = _output_positions(first, boundaries[k])
        cup_at = {pos: (idx, cell) for idx, (pos, cell) in enumerate(cell_runs(second))}
        for idx, (pos, cell) in enumerate(cell_runs(first)):
            if not isinstance(cell.body, Unit) or cell.broadcasts:
                continue
            r = boundaries[k].segments[pos].rank
            hit = cup_at.get(out_positions[idx])
            if hit is None:
                continue
            cup_idx, cup = hit
            if not isinstance(cup.body, Cup) or cup.broadcasts:
                continue
            p, q = cup.body.p, cup.body.q
            if p >= r or q not in (r, r + 1):
                continue
            perm = tuple(a for a in range(r) if a != p) + (p,)
            replacement = IDENTITY if p == r - 1 else Cell(AxisTranspose(perm))
            return k, idx, cup_idx, replacement
    return None


def snake_reduce(diagram: Diagram) -> RewriteResult:
    """Apply the zigzag identities until none match.

    A unit followed by a cup on one of its fresh axes becomes an axis
    transpose (identity when nothing moves); transpose plumbing collapses to
    the direct primitive where one exists, and a transpose of a transpose
    collapses to the original cell. Identity sections are dropped.
    """
    sections, count = _collapse_cells(diagram)
    current = _with_sections(diagram, sections)
    while True:
        hit = _find_snake(current)
        if hit is None:
            break
        k, unit_idx, cup_idx, replacement = hit
        first, second = list(current.sections[k]), list(current.sections[k + 1])
        first[unit_idx] = IDENTITY
        second[cup_idx] = replacement
        new = current.sections[:k] + (tuple(first), tuple(second)) + current.sections[k + 2:]
        current = _with_sections(current, new)
        count += 1
    kept = _drop_identity_sections(current.sections)
    applied = count > 0 or len(kept) != len(diagram.sections)
    if not applied:
        return RewriteResult(diagram, False, "no snake found")
    logger.debug("snake_reduce on %s: %d reductions", diagram.name, count)
    return RewriteResult(_with_sections(current, kept), True, f"{count} reductions")


# ---------------------------------------------------------------------------
# Naturality
# ---------------------------------------------------------------------------

_LEADING_AXIS_OPS = (SumAxis, IndexKet, Diag, Cup, AxisTranspose)


def _leading_only(prim, lead: int) -> bool:
    """The primitive touches only the first ``lead`` axes of its segment."""
    if isinstance(prim, (SumAxis, IndexKet)):
        return prim.axis < lead
    if isinstance(prim, (Diag, Cup)):
        return prim.q < lead
    if isinstance(prim, AxisTranspose):
        return all(prim.perm[k] == k for k in range(lead, len(prim.perm)))
    return False


def _active(section: Section) -> List[Tuple[int, int, Cell]]:
    return [(idx, pos, cell) for idx, (pos, cell) in enumerate(cell_runs(section))
            if not is_identity_cell(cell)]


def _count_preserving(section: Section, state: DataShape) -> bool:
    for pos, cell in cell_runs(section):
        if len(cell_type(cell, tuple(state.segments[pos:pos + cell.arity]))) != cell.arity:
            return False
    return True


def _covered(section: Section) -> set:
    return {p for _, pos, cell in _active(section) for p in range(pos, pos + cell.arity)}


def naturality_swap(diagram: Diagram, index: int) -> RewriteResult:
    """Exchange sections ``index`` and ``index + 1``.

    Two cases commute: cells on disjoint segments, and a broadcast cell
    followed by an op acting only on the broadcast axes, which slides ahead
    of the cell with the scope axes rewritten.
    """
    if not 0 <= index < len(diagram.sections) - 1:
        raise SegmentOutOfRange(f"no section pair at {index} in {diagram.name}")
    first, second = diagram.sections[index], diagram.sections[index + 1]
    if is_identity_section(first) or is_identity_section(second):
        return RewriteResult(diagram, False, "identity neighbor")
    for _, _, cell in _active(first) + _active(second):
        if not cell_is_linear(cell):
            raise NotLinear(f"naturality needs linear cells; {getattr(cell.body, 'kind', 'diagram')} is not")
    boundaries = infer_shapes(diagram)

    if (_count_preserving(first, boundaries[index]) and _count_preserving(second, boundaries[index + 1])
            and not _covered(first) & _covered(second)):
        swapped = diagram.sections[:index] + (second, first) + diagram.sections[index + 2:]
        result = _with_sections(diagram, swapped)
        infer_shapes(result)
        return RewriteResult(result, True, "disjoint segments")

    a, b = _active(first), _active(second)
    if len(a) == 1 and len(b) == 1 and a[0][1] == b[0][1]:
        x_idx, pos, x = a[0]
        _, _, y = b[0]
        lead = len(x.broadcasts)
        if (lead and x.arity == 1 and all(s.outer for s in x.broadcasts) and not y.broadcasts
                and isinstance(y.body, _LEADING_AXIS_OPS) and _leading_only(y.body, lead)):
            shape = boundaries[index].segments[pos]
            new_lead = primitive_type(y.body, (TensorShape(shape.axes[:lead]),))[0]
            moved = Cell(x.body, tuple(BroadcastScope(axis) for axis in new_lead.axes))
            new_second = list(first)
            new_second[x_idx] = moved
            swapped = diagram.sections[:index] + (second, tuple(new_second)) + diagram.sections[index + 2:]
            result = _with_sections(diagram, swapped)
            infer_shapes(result)
            return RewriteResult(result, True, "broadcast naturality")
    return RewriteResult(diagram, False, "no naturality pattern")


# ---------------------------------------------------------------------------
# Associated transpose
# ---------------------------------------------------------------------------

def transpose_linear(diagram: Diagram, address: str, moves: Optional[str] = None) -> RewriteResult:
    """Replace a linear cell by the plumbing realizing its associated transpose.

    The cell changes type, so the diagram is retyped around it: sections
    after the cell must accept the new outputs.
    """
    cell = cell_at(diagram, address)
    inputs = cell_inputs(diagram, address)
    if len(inputs) != 1:
        raise BadAxisMove(f"cell {address} spans {len(inputs)} segments; transposes need one")
    out = cell_type(cell, inputs)
    moves_out, moves_in = parse_moves(moves, inputs[0].rank, out[0].rank if len(out) == 1 else 0)
    plumbing = associated_transpose(cell, inputs[0], moves_out, moves_in)
    result = replace_cell(diagram, address, Cell(plumbing), retype=True)
    return RewriteResult(result, True, f"transposed {address} moving out={list(moves_out)} in={list(moves_in)}")


# ---------------------------------------------------------------------------
# Multilinear factorization
# ---------------------------------------------------------------------------

def _to_back(b: DiagramBuilder, wire: str, count: int) -> str:
    """Move the first ``count`` axes behind the rest."""
    rank = b.shape(wire).rank
    if count in (0, rank):
        return wire
    return b.apply1(AxisTranspose(tuple(range(count, rank)) + tuple(range(count))), wire)


def _split_steps(cell: Cell, inputs: Tuple[TensorShape, ...]):
    wrapper = Diagram("factor", "x", DataShape(inputs), DataShape(cell_type(cell, inputs)), ((cell,),))
    pre: Dict[int, List[Cell]] = {0: [], 1: []}
    merge = None
    post: List[Cell] = []
    for start, step, step_inputs in sequential_cells(wrapper):
        single = step.arity == 1 and len(cell_type(step, step_inputs)) == 1
        if merge is None and single and start in (0, 1) and cell_is_linear(step):
            pre[start].append(step)
        elif merge is None and isinstance(step.body, OuterProduct) and start == 0 and step.arity == 2:
            merge = (step, step_inputs)
        elif merge is not None and single and start == 0 and cell_is_linear(step):
            post.append(step)
        else:
            raise NotMultilinear(
                f"{getattr(step.body, 'kind', 'diagram')} at segment {start} breaks the outer-then-linear form")
    if merge is None:
        raise NotMultilinear("no outer product merges the two operands")
    return pre, merge, post


def _peephole(diagram: Diagram) -> Diagram:
    """diag p q ; sum p -> cup p q"""
    out: List[Section] = []
    for section in diagram.sections:
        if out and len(section) == 1 and len(out[-1]) == 1:
            prev, cur = out[-1][0], section[0]
            if (isinstance(prev.body, Diag) and isinstance(cur.body, SumAxis) and not prev.broadcasts
                    and not cur.broadcasts and cur.body.axis == prev.body.p):
                out[-1] = (Cell(Cup(prev.body.p, prev.body.q)),)
                continue
        out.append(section)
    return _with_sections(diagram, out)


def factor_multilinear(diagram: Diagram, address: str) -> RewriteResult:
    """Rewrite a two-operand multilinear cell as an outer product followed by
    one linear map on the combined tensor.

    Linear maps applied to either operand before the merge are broadcast over
    the other operand's axes; zipped (Hadamard) scope axes become diagonals.
    """
    cell = cell_at(diagram, address)
    inputs = cell_inputs(diagram, address)
    if len(inputs) != 2 or len(cell_type(cell, inputs)) != 1:
        raise NotMultilinear(f"cell {address} is not a two-operand, one-result cell")
    pre, (merge, merge_inputs), post = _split_steps(cell, inputs)
    if not pre[0] and not pre[1] and not merge.broadcasts:
        return RewriteResult(diagram, False, "already factored")

    name = cell.body.name if isinstance(cell.body, Diagram) else cell.body.kind
    b = DiagramBuilder(f"{name}_factored", DataShape(inputs))
    x, y = b.inputs
    x_rank = inputs[0].rank
    wire = b.outer(x, y)
    for step in pre[1]:
        lead = tuple(BroadcastScope(a) for a in b.shape(wire).axes[:x_rank])
        wire = b.apply1(step.body, wire, broadcasts=lead + step.broadcasts)
    if pre[0]:
        y_rank = b.shape(wire).rank - x_rank
        wire = _to_back(b, wire, x_rank)
        for step in pre[0]:
            lead = tuple(BroadcastScope(a) for a in b.shape(wire).axes[:y_rank])
            wire = b.apply1(step.body, wire, broadcasts=lead + step.broadcasts)
        x_rank = b.shape(wire).rank - y_rank
        wire = _to_back(b, wire, y_rank)
    scopes = merge.broadcasts
    for level, scope in enumerate(scopes):
        if not scope.carries(0) and not scope.carries(1):
            raise NotMultilinear(f"scope over {scope.axis} replicates the merge")
    x_carried = [lvl for lvl, s in enumerate(scopes) if s.carries(0)]
    y_carried = [lvl for lvl, s in enumerate(scopes) if s.carries(1)]
    x_core = merge_inputs[0].rank - len(x_carried)
    y_core = merge_inputs[1].rank - len(y_carried)
    labels = ([("s", lvl) for lvl in x_carried] + [("x", t) for t in range(x_core)]
              + [("t", lvl) for lvl in y_carried] + [("y", t) for t in range(y_core)])
    for lvl in y_carried:
        if lvl in x_carried:
            p, q = labels.index(("s", lvl)), labels.index(("t", lvl))
            wire = b.apply1(Diag(p, q), wire)
            del labels[q]
        else:
            labels[labels.index(("t", lvl))] = ("s", lvl)
    cores = [("x", t) for t in range(x_core)], [("y", t) for t in range(y_core)]
    first, second = cores if merge.body.i == 0 else cores[::-1]
    target = [("s", lvl) for lvl in range(len(scopes))] + first + second
    perm = tuple(labels.index(lab) for lab in target)
    if perm != tuple(range(len(perm))):
        wire = b.apply1(AxisTranspose(perm), wire)
    for step in post:
        wire = b.apply1(step.body, wire, broadcasts=step.broadcasts)
    factored = _peephole(b.build([wire]))
    result = replace_cell(diagram, address, Cell(factored))
    infer_shapes(result)
    return RewriteResult(result, True, f"factored {address} through an outer product")


# ---------------------------------------------------------------------------
# Unit axes and normal form
# ---------------------------------------------------------------------------

def _squeeze(shape: TensorShape) -> TensorShape:
    return TensorShape(tuple(a for a in shape.axes if a.n != 1))


def _view(source: TensorShape, target: TensorShape) -> Cell:
    if source.extents == target.extents:
        return IDENTITY
    return Cell(View(source, target))


def _is_view_section(section: Section) -> bool:
    return all(is_identity_cell(c) or (isinstance(c.body, View) and not c.broadcasts) for c in section)


def _fuse_views(sections: List[Section]) -> List[Section]:
    out: List[Section] = []
    for section in sections:
        if out and _is_view_section(out[-1]) and _is_view_section(section):
            fused = []
            for a, b in zip(out[-1], section):
                if is_identity_cell(a):
                    fused.append(b)
                elif is_identity_cell(b):
                    fused.append(a)
                else:
                    fused.append(_view(a.body.source, b.body.target))
            out[-1] = tuple(fused)
            continue
        out.append(section)
    return _drop_identity_sections(out)


def drop_unit_axes(diagram: Diagram) -> RewriteResult:
    """Remove length-1 axes from every boundary.

    Length-1 broadcast scopes disappear; a primitive that needs a length-1
    axis gets a view on each side. The result is flat (nested diagrams are
    inlined) and its domain and codomain are the squeezed originals.
    """
    domain = DataShape(tuple(_squeeze(s) for s in diagram.domain.segments))
    codomain = DataShape(tuple(_squeeze(s) for s in diagram.codomain.segments))
    changed = domain != diagram.domain or codomain != diagram.codomain
    state = list(domain.segments)
    sections: List[Section] = []
    for start, cell, inputs in sequential_cells(diagram):
        kept = tuple(s for s in cell.broadcasts if s.axis.n != 1)
        core = body_inputs(cell, inputs)
        needed = tuple(
            TensorShape(tuple(s.axis for s in kept if s.carries(k)) + core[k].axes)
            for k in range(len(inputs)))
        new_cell = Cell(cell.body, kept)
        outputs = cell_type(new_cell, needed)
        pre = tuple(_view(state[start + k], needed[k]) for k in range(len(inputs)))
        post = tuple(_view(o, _squeeze(o)) for o in outputs)
        if len(kept) != len(cell.broadcasts) or any(not is_identity_cell(c) for c in pre + post):
            changed = True
        before = len(state) - start - len(inputs)
        sections.append(identity_cells(start) + pre + identity_cells(before))
        sections.append(identity_cells(start) + (new_cell,) + identity_cells(before))
        state[start:start + len(inputs)] = [_squeeze(o) for o in outputs]
        after = len(state) - start - len(outputs)
        sections.append(identity_cells(start) + post + identity_cells(after))
    if not changed:
        return RewriteResult(diagram, False, "no unit axes")
    result = Diagram(diagram.name, diagram.input_name, domain, codomain, tuple(_fuse_views(sections)))
    infer_shapes(result)
    return RewriteResult(result, True, "unit axes dropped")


def normalize(diagram: Diagram, max_passes: Optional[int] = None) -> RewriteResult:
    """snake_reduce and drop_unit_axes to a fixpoint."""
    limit = max_passes or get_current_config().rewrite.normalize_max_passes
    current = snake_reduce(diagram).diagram
    current = drop_unit_axes(current).diagram
    passes = 0
    for passes in range(1, limit + 1):
        step = snake_reduce(current)
        if not step.applied:
            break
        current = step.diagram
    else:
        logger.warning("normalize stopped after %d passes on %s", limit, diagram.name)
    return RewriteResult(current, current != diagram, f"normal form after {passes} passes")


RuleFn = Callable[..., RewriteResult]


def _need_at(at: Optional[str], rule: str) -> str:
    if at is None:
        raise SegmentOutOfRange(f"rule {rule} needs --at")
    return at


RULES: Dict[str, RuleFn] = {
    "snake": lambda d, at=None, moves=None: snake_reduce(d),
    "naturality": lambda d, at=None, moves=None: naturality_swap(d, int(_need_at(at, "naturality").split(".")[0])),
    "transpose": lambda d, at=None, moves=None: transpose_linear(d, _need_at(at, "transpose"), moves),
    "factor": lambda d, at=None, moves=None: factor_multilinear(d, _need_at(at, "factor")),
    "units": lambda d, at=None, moves=None: drop_unit_axes(d),
    "normalize": lambda d, at=None, moves=None: normalize(d),
}
