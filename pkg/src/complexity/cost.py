"""
Operation-count cost model.

Time counts multiply-accumulate work per primitive, multiplied by the length
of every broadcast scope around it. Space counts the elements on each
boundary. Both are polynomials over the named axes (sympy); unnamed axes
contribute their concrete length.

Conventions: softmax over n costs 3n; pure data movement (copy, delete,
swap, transpose, diag, view, index, unit, const) costs 0.
"""

import logging
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Any, Dict, List, Optional, Tuple

import sympy as sp

from ..core.errors import ShapeMismatch
from ..core.ir import (
    Add, Axis, AxisTranspose, Body, Cell, ConstScalar, ConvTensor, Copy, Cup, DataShape, Delete, Diag,
    Diagram, ElementWise, Identity, IndexKet, LinearParam, MaxMask, OuterProduct, Pool, SegmentSwap,
    SoftMax, SumAxis, TensorShape, Unit, View, cell_runs, is_identity_cell,
)
from ..core.shapes import body_inputs, body_type, infer_shapes

logger = logging.getLogger(__name__)

CONVENTIONS = "softmax over n counts 3n; data movement counts 0; space counts boundary elements only"


def axis_symbol(axis: Axis) -> sp.Expr:
    if axis.name is None:
        return sp.Integer(axis.n)
    return sp.Symbol(axis.name, positive=True, integer=True)


def shape_size(shape: TensorShape) -> sp.Expr:
    return sp.Mul(*[axis_symbol(a) for a in shape.axes])


def boundary_size(state: DataShape) -> sp.Expr:
    return sp.Add(*[shape_size(s) for s in state.segments])


@dataclass(frozen=True)
class CostPoly:
    """Polynomial over axis symbols with nonnegative integer coefficients"""
    expr: sp.Expr = sp.Integer(0)

    def __add__(self, other: "CostPoly") -> "CostPoly":
        return CostPoly(sp.expand(self.expr + other.expr))

    def __mul__(self, other: "CostPoly") -> "CostPoly":
        return CostPoly(sp.expand(self.expr * other.expr))

    @property
    def symbols(self) -> List[str]:
        return sorted(str(s) for s in self.expr.free_symbols)

    def evaluate(self, bindings: Dict[str, int]) -> int:
        values = {s: bindings[str(s)] for s in self.expr.free_symbols if str(s) in bindings}
        value = self.expr.subs(values)
        if value.free_symbols:
            raise ShapeMismatch("cost evaluation", "bindings for every axis", sorted(map(str, value.free_symbols)))
        return int(value)

    def degree(self, name: str) -> int:
        symbol = sp.Symbol(name, positive=True, integer=True)
        if symbol not in self.expr.free_symbols:
            return 0
        return int(sp.degree(sp.expand(self.expr), symbol))

    def __str__(self) -> str:
        return sp.sstr(sp.expand(self.expr), order="grlex")


ZERO = CostPoly(sp.Integer(0))


# ---------------------------------------------------------------------------
# Base costs
# ---------------------------------------------------------------------------

@singledispatch
def base_cost(body: Body, inputs: Tuple[TensorShape, ...]) -> sp.Expr:
    """Work for one unbroadcast application of a body."""
    raise TypeError(f"no cost rule for {type(body).__name__}")


for _free in (Identity, Copy, Delete, SegmentSwap, AxisTranspose, Diag, View, IndexKet, Unit, ConstScalar):
    base_cost.register(_free, lambda body, inputs: sp.Integer(0))


@base_cost.register
def _(body: LinearParam, inputs):
    work = shape_size(body.source) * shape_size(body.target)
    if body.bias:
        work += shape_size(body.target)
    return work


@base_cost.register(ElementWise)
@base_cost.register(MaxMask)
@base_cost.register(Pool)
@base_cost.register(Cup)
@base_cost.register(SumAxis)
def _(body, inputs):
    return shape_size(inputs[0])


@base_cost.register
def _(body: SoftMax, inputs):
    return 3 * shape_size(inputs[0])


@base_cost.register
def _(body: Add, inputs):
    return shape_size(inputs[body.i])


@base_cost.register
def _(body: OuterProduct, inputs):
    return shape_size(inputs[body.i]) * shape_size(inputs[body.j])


@base_cost.register
def _(body: ConvTensor, inputs):
    if body.transposed:
        y_axes = inputs[0].axes[:body.rank]
    else:
        y_axes = body_type(body, inputs)[0].axes[:body.rank]
    work = sp.Integer(1)
    for axis, k in zip(y_axes, body.kernel):
        work *= axis_symbol(axis) * k
    return work


@base_cost.register
def _(body: Diagram, inputs):
    return time_cost(body).expr


def cell_cost(cell: Cell, inputs: Tuple[TensorShape, ...]) -> CostPoly:
    if is_identity_cell(cell):
        return ZERO
    work = base_cost(cell.body, body_inputs(cell, inputs))
    for scope in cell.broadcasts:
        work = work * axis_symbol(scope.axis)
    return CostPoly(sp.expand(work))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def section_costs(diagram: Diagram) -> List[CostPoly]:
    boundaries = infer_shapes(diagram)
    costs = []
    for k, section in enumerate(diagram.sections):
        total = ZERO
        for pos, cell in cell_runs(section):
            total = total + cell_cost(cell, tuple(boundaries[k].segments[pos:pos + cell.arity]))
        costs.append(total)
    return costs


def time_cost(diagram: Diagram) -> CostPoly:
    total = ZERO
    for cost in section_costs(diagram):
        total = total + cost
    return total


def boundary_costs(diagram: Diagram) -> List[CostPoly]:
    return [CostPoly(sp.expand(boundary_size(state))) for state in infer_shapes(diagram)]


def axis_bindings(diagram: Diagram) -> Dict[str, int]:
    """Value of every named axis seen on any boundary, nested diagrams included."""
    found: Dict[str, int] = {}

    def visit(d: Diagram) -> None:
        for state in infer_shapes(d):
            for shape in state.segments:
                for axis in shape.axes:
                    if axis.name is not None:
                        found.setdefault(axis.name, axis.n)
        for section in d.sections:
            for cell in section:
                for scope in cell.broadcasts:
                    if scope.axis.name is not None:
                        found.setdefault(scope.axis.name, scope.axis.n)
                if isinstance(cell.body, Diagram):
                    visit(cell.body)

    visit(diagram)
    return found


def _space_candidates(diagram: Diagram) -> List[CostPoly]:
    """Every boundary, plus every boundary inside a nested diagram seen next to
    the segments that bypass it; a scoped nested body counts once per instance."""
    boundaries = infer_shapes(diagram)
    found = [CostPoly(sp.expand(boundary_size(state))) for state in boundaries]
    for k, section in enumerate(diagram.sections):
        for pos, cell in cell_runs(section):
            if not isinstance(cell.body, Diagram):
                continue
            segments = boundaries[k].segments
            outside = sp.Add(*[shape_size(s) for i, s in enumerate(segments) if not pos <= i < pos + cell.arity])
            instances = sp.Mul(*[axis_symbol(scope.axis) for scope in cell.broadcasts])
            for inner in _space_candidates(cell.body):
                found.append(CostPoly(sp.expand(outside + instances * inner.expr)))
    return found


def space_cost(diagram: Diagram, bindings: Optional[Dict[str, int]] = None) -> Tuple[CostPoly, List[CostPoly]]:
    """(peak, per-boundary). The peak is the largest candidate at the bindings,
    nested boundaries included."""
    per_boundary = boundary_costs(diagram)
    values = dict(axis_bindings(diagram), **(bindings or {}))
    candidates = _space_candidates(diagram)
    peak = max(candidates, key=lambda c: c.evaluate(values)) if candidates else ZERO
    return peak, per_boundary


@dataclass
class CostReport:
    name: str
    sections: List[CostPoly]
    boundaries: List[CostPoly]
    total_time: CostPoly
    peak_space: CostPoly
    bindings: Dict[str, int] = field(default_factory=dict)

    @property
    def time_value(self) -> int:
        return self.total_time.evaluate(self.bindings)

    @property
    def space_value(self) -> int:
        return self.peak_space.evaluate(self.bindings)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "diagram": self.name,
            "sections": [{"time": str(c), "value": c.evaluate(self.bindings)} for c in self.sections],
            "boundaries": [str(c) for c in self.boundaries],
            "boundary_values": [c.evaluate(self.bindings) for c in self.boundaries],
            "total_time": str(self.total_time),
            "total_time_value": self.time_value,
            "peak_space": str(self.peak_space),
            "peak_space_value": self.space_value,
            "bindings": dict(sorted(self.bindings.items())),
            "conventions": CONVENTIONS,
        }


def cost_report(diagram: Diagram, bindings: Optional[Dict[str, int]] = None) -> CostReport:
    values = dict(axis_bindings(diagram), **(bindings or {}))
    sections = section_costs(diagram)
    peak, per_boundary = space_cost(diagram, values)
    total = ZERO
    for cost in sections:
        total = total + cost
    logger.debug("cost of %s: time %s, peak space %s", diagram.name, total, peak)
    return CostReport(diagram.name, sections, per_boundary, total, peak, values)


def compare(first: Diagram, second: Diagram, bindings: Optional[Dict[str, int]] = None) -> Dict[str, Any]:
    """Side-by-side cost of two diagrams with the same type."""
    if not first.domain.matches(second.domain):
        raise ShapeMismatch(f"domain of {second.name}", first.domain, second.domain)
    if not first.codomain.matches(second.codomain):
        raise ShapeMismatch(f"codomain of {second.name}", first.codomain, second.codomain)
    values = {**axis_bindings(first), **axis_bindings(second), **(bindings or {})}
    a, b = cost_report(first, values), cost_report(second, values)
    time_ratio = a.time_value / b.time_value if b.time_value else (1.0 if a.time_value == 0 else float("inf"))
    space_ratio = a.space_value / b.space_value if b.space_value else 1.0
    return {
        "first": a.to_dict(),
        "second": b.to_dict(),
        "time_ratio": time_ratio,
        "space_ratio": space_ratio,
        "bindings": dict(sorted(values.items())),
    }
