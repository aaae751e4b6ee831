"""
Label-based diagram construction.

DiagramBuilder tracks named wires (one per tuple segment) and emits the
SegmentSwap plumbing needed to bring a cell's operands together, so code that
generates diagrams (derivatives, transposes, factorizations) can be written
in terms of values instead of segment positions.
"""

import itertools
import logging
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import SegmentOutOfRange
from .ir import (
    Axis, Body, BroadcastScope, Cell, ConstScalar, Copy, DataShape, Delete, Diagram, ElementWise,
    OuterProduct, SegmentSwap, SumAxis, TensorShape, body_arity, identity_cells,
)
from .shapes import cell_type

logger = logging.getLogger(__name__)


class DiagramBuilder:
    """Incrementally build a Diagram from wire-level operations.

    Usage:
        b = DiagramBuilder("f", domain)
        x, = b.inputs
        y, z = b.copy(x)
        out = b.hadamard(y, z)
        diagram = b.build([out])
    """

    def __init__(self, name: str, domain: DataShape, input_name: str = "x"):
        self.name = name
        self.input_name = input_name
        self.domain = domain
        self._ids = itertools.count()
        self.order: List[str] = []
        self.shapes: Dict[str, TensorShape] = {}
        self.sections: List[Tuple[Cell, ...]] = []
        self.inputs = [self._new(shape) for shape in domain.segments]

    def _new(self, shape: TensorShape) -> str:
        wire = f"w{next(self._ids)}"
        self.order.append(wire)
        self.shapes[wire] = shape
        return wire

    def shape(self, wire: str) -> TensorShape:
        return self.shapes[wire]

    def _swap_to(self, wire: str, target: int) -> None:
        current = self.order.index(wire)
        if current == target:
            return
        lo, hi = sorted((current, target))
        cell = Cell(SegmentSwap(0, hi - lo))
        self.sections.append(identity_cells(lo) + (cell,) + identity_cells(len(self.order) - hi - 1))
        self.order[lo], self.order[hi] = self.order[hi], self.order[lo]

    def _gather(self, wires: Sequence[str]) -> None:
        if len(set(wires)) != len(wires):
            raise SegmentOutOfRange(f"wire used twice in one cell: {list(wires)}")
        for wire in wires:
            if wire not in self.order:
                raise SegmentOutOfRange(f"wire {wire} is not live")
        for target, wire in enumerate(wires):
            self._swap_to(wire, target)

    def apply(self, body: Body, wires: Sequence[str],
              broadcasts: Sequence[BroadcastScope] = ()) -> List[str]:
        """Apply a cell to the given wires (in order) and return its output wires."""
        wires = list(wires)
        if len(wires) != body_arity(body):
            raise SegmentOutOfRange(
                f"{getattr(body, 'kind', 'diagram')} takes {body_arity(body)} wires, got {len(wires)}")
        self._gather(wires)
        cell = Cell(body, tuple(broadcasts))
        outputs = cell_type(cell, tuple(self.shapes[w] for w in wires))
        self.sections.append((cell,) + identity_cells(len(self.order) - len(wires)))
        for wire in wires:
            del self.shapes[wire]
        rest = self.order[len(wires):]
        self.order = []
        new = [self._new(shape) for shape in outputs]
        self.order = new + rest
        return new

    def apply1(self, body: Body, *wires: str, broadcasts: Sequence[BroadcastScope] = ()) -> str:
        out = self.apply(body, wires, broadcasts)
        if len(out) != 1:
            raise SegmentOutOfRange(f"expected one output wire, got {len(out)}")
        return out[0]

    def copy(self, wire: str, count: int = 2) -> List[str]:
        copies = [wire]
        while len(copies) < count:
            last = copies.pop()
            copies.extend(self.apply(Copy(), [last]))
        return copies

    def delete(self, *wires: str) -> None:
        for wire in wires:
            self.apply(Delete(), [wire])

    def const(self, value: float, axes: Sequence[Axis] = ()) -> str:
        """Constant tensor: a scalar constant broadcast over the given axes."""
        scopes = tuple(BroadcastScope(a) for a in axes)
        return self.apply(ConstScalar(float(value)), [], scopes)[0]

    def outer(self, a: str, b: str) -> str:
        return self.apply1(OuterProduct(0, 1), a, b)

    def hadamard(self, a: str, b: str) -> str:
        """Element-wise product of equal-shaped wires (outer product of scalars, zipped)."""
        scopes = tuple(BroadcastScope(axis) for axis in self.shapes[a].axes)
        return self.apply1(OuterProduct(0, 1), a, b, broadcasts=scopes)

    def ew(self, fn: str, wire: str, arg: Optional[float] = None) -> str:
        return self.apply1(ElementWise(fn, arg), wire)

    def sum_all(self, wire: str) -> str:
        for _ in range(self.shapes[wire].rank):
            wire = self.apply1(SumAxis(0), wire)
        return wire

    def dot(self, a: str, b: str) -> str:
        """Full contraction ⟨a, b⟩ of equal-shaped wires."""
        return self.sum_all(self.hadamard(a, b))

    def build(self, outputs: Sequence[str], name: Optional[str] = None) -> Diagram:
        """Delete every other live wire, order the outputs and return the diagram."""
        outputs = list(outputs)
        dead = [w for w in self.order if w not in outputs]
        if dead:
            section = tuple(Cell(Delete()) if w in dead else identity_cells(1)[0] for w in self.order)
            self.sections.append(section)
            for wire in dead:
                del self.shapes[wire]
            self.order = [w for w in self.order if w not in dead]
        self._gather(outputs)
        codomain = DataShape(tuple(self.shapes[w] for w in self.order))
        logger.debug("built %s with %d sections", name or self.name, len(self.sections))
        return Diagram(name or self.name, self.input_name, self.domain, codomain,
                       tuple(self.sections))
