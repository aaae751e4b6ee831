"""
Diagram composition: sequential, parallel (stack) and broadcast lifting,
plus axis rebinding and flattening of nested diagrams.
"""

import dataclasses
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .errors import SegmentOutOfRange, ShapeMismatch
from .ir import (
    Axis, AxisLen, BroadcastScope, Cell, DataShape, Diagram, Primitive, Section, TensorShape,
    body_arity, identity_cells, is_identity_cell,
)
from .shapes import cell_type, section_type

logger = logging.getLogger(__name__)


def identity(domain: DataShape, name: str = "id", input_name: str = "x") -> Diagram:
    """The empty-bodied diagram: domain = codomain, zero sections."""
    return Diagram(name, input_name, domain, domain, ())


def from_cell(cell: Cell, domain: DataShape, at: int = 0, name: str = "cell",
              input_name: str = "x") -> Diagram:
    """Single-section diagram applying one cell at run position ``at``."""
    if at < 0 or at + cell.arity > len(domain):
        raise SegmentOutOfRange(f"cell at {at} with arity {cell.arity} exceeds {len(domain)} segments")
    section = identity_cells(at) + (cell,) + identity_cells(len(domain) - at - cell.arity)
    codomain = section_type(section, domain)
    return Diagram(name, input_name, domain, codomain, (section,))


def from_primitive(prim: Primitive, domain: DataShape, at: int = 0, name: Optional[str] = None,
                   broadcasts: Sequence[BroadcastScope] = ()) -> Diagram:
    return from_cell(Cell(prim, tuple(broadcasts)), domain, at, name or prim.kind)


def compose_seq(f: Diagram, g: Diagram, name: Optional[str] = None) -> Diagram:
    """f ; g (f first). The codomain of f must unify with the domain of g."""
    if not f.codomain.matches(g.domain):
        raise ShapeMismatch(f"composition {f.name} ; {g.name}", g.domain, f.codomain)
    return Diagram(name or f.name, f.input_name, f.domain, g.codomain, f.sections + g.sections)


def compose_all(parts: Sequence[Diagram], name: Optional[str] = None) -> Diagram:
    result = parts[0]
    for part in parts[1:]:
        result = compose_seq(result, part, name)
    return result


def stack(f: Diagram, g: Diagram, name: Optional[str] = None) -> Diagram:
    """f × g on concatenated tuples, sections row-aligned.

    The shorter diagram is padded with identity sections.
    """
    depth = max(len(f.sections), len(g.sections))
    sections = []
    for k in range(depth):
        left = f.sections[k] if k < len(f.sections) else identity_cells(len(f.codomain))
        right = g.sections[k] if k < len(g.sections) else identity_cells(len(g.codomain))
        sections.append(left + right)
    return Diagram(name or f"{f.name}_{g.name}", f.input_name, f.domain + g.domain,
                   f.codomain + g.codomain, tuple(sections))


def _lift_shape(shape: DataShape, axis: Axis, targets: Optional[Sequence[int]] = None) -> DataShape:
    return DataShape(tuple(
        s.prepend(axis) if targets is None or k in targets else s
        for k, s in enumerate(shape.segments)))


def broadcast(f: Diagram, axis: Axis, name: Optional[str] = None) -> Diagram:
    """Lift f over a new leading axis on every segment: G'(x)[i,:] = G(x[i,:]).

    Applied cell by cell, so broadcast(f;g) = broadcast(f);broadcast(g).
    """
    scope = BroadcastScope(axis)
    sections = tuple(
        tuple(c if is_identity_cell(c) and not c.broadcasts else
              Cell(c.body, (scope,) + c.broadcasts) for c in section)
        for section in f.sections)
    return Diagram(name or f.name, f.input_name, _lift_shape(f.domain, axis),
                   _lift_shape(f.codomain, axis), sections)


def inner_broadcast(f: Diagram, axis: Axis, target: int, name: Optional[str] = None) -> Diagram:
    """Lift f over an axis carried by one input segment; the others are shared.

    Result(x, y)[i,:] = f(x[i,:], y) for target 0.
    """
    return multi_broadcast(f, axis, (target,), name)


def multi_broadcast(f: Diagram, axis: Axis, targets: Sequence[int],
                    name: Optional[str] = None) -> Diagram:
    targets = tuple(targets)
    for t in targets:
        if not 0 <= t < len(f.domain):
            raise SegmentOutOfRange(f"broadcast target {t} outside {len(f.domain)} segments")
    cell = Cell(f, (BroadcastScope(axis, targets),))
    domain = _lift_shape(f.domain, axis, targets)
    codomain = _lift_shape(f.codomain, axis)
    return Diagram(name or f"{f.name}_over_{axis}", f.input_name, domain, codomain, ((cell,),))


def rebind(obj: Any, env: Dict[str, int]) -> Any:
    """Replace symbolic axis values throughout an IR value."""
    if isinstance(obj, AxisLen):
        return obj.bind(env)
    if isinstance(obj, tuple):
        return tuple(rebind(item, env) for item in obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        changes = {f.name: rebind(getattr(obj, f.name), env)
                   for f in dataclasses.fields(obj) if f.name != "transpose_of" and f.init}
        return dataclasses.replace(obj, **changes)
    return obj


Step = Tuple[int, Cell, Tuple[TensorShape, ...]]


def sequential_cells(diagram: Diagram) -> List[Step]:
    """Flatten a diagram into (run start, cell, input shapes) steps, one per
    non-identity cell, with nested diagrams inlined.

    A nested diagram under broadcast scopes is expanded by pushing the scopes
    onto its inner cells; each scope targets whichever inner segments still
    carry its axis and every inner output gains it.
    """
    steps: List[Step] = []
    state = [(shape, ()) for shape in diagram.domain.segments]
    _flatten(diagram.sections, state, (), 0, steps)
    return steps


def _full(core: TensorShape, carried: Tuple[int, ...], prefix: Tuple[BroadcastScope, ...]) -> TensorShape:
    return TensorShape(tuple(prefix[lvl].axis for lvl in carried) + core.axes)


def _flatten(sections: Sequence[Section], state: List[Tuple[TensorShape, Tuple[int, ...]]],
             prefix: Tuple[BroadcastScope, ...], offset: int, steps: List[Step]):
    """Walk sections of one nesting level.

    ``state`` holds (core shape, carried prefix levels) per local segment;
    the full shape is the carried prefix axes followed by the core.
    """
    every = tuple(range(len(prefix)))
    for section in sections:
        done: List[Tuple[TensorShape, Tuple[int, ...]]] = []
        pos = 0
        for cell in section:
            n = body_arity(cell.body)
            run = state[pos:pos + n]
            lifted = []
            for level, scope in enumerate(prefix):
                holders = tuple(k for k, (_, carried) in enumerate(run) if level in carried)
                lifted.append(BroadcastScope(scope.axis, None if len(holders) == n else holders))
            start = offset + len(done)
            if isinstance(cell.body, Diagram):
                inner_prefix = tuple(lifted) + cell.broadcasts
                inner_state = [
                    (core, tuple(lvl for lvl, s in enumerate(inner_prefix) if s.carries(k)))
                    for k, core in enumerate(cell.body.domain.segments)]
                inner_sections = cell.body.sections or (identity_cells(n),)
                outs = _flatten(inner_sections, inner_state, inner_prefix, start, steps)
                own = tuple(s.axis for s in cell.broadcasts)
                for core, _ in outs:
                    done.append((TensorShape(own + core.axes), every))
            else:
                full = Cell(cell.body, tuple(lifted) + cell.broadcasts)
                inputs = tuple(_full(core, carried, prefix) for core, carried in run)
                outputs = cell_type(full, inputs)
                if not is_identity_cell(full):
                    steps.append((start, full, inputs))
                for shape in outputs:
                    done.append((TensorShape(shape.axes[len(prefix):]), every))
            pos += n
        state = done
    return state
