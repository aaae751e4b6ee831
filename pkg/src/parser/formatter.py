"""
Canonical printer: Diagram -> .ncd source text.

Nested diagram bodies are printed as their own definitions ahead of the
diagram that calls them. A section with one non-identity cell prints as a
plain step when the step syntax can place it; anything else prints as a
``par`` block with one branch per cell (identity cells as empty branches).
"""

import logging
from typing import Dict, List

from ..core.ir import (
    Add, AxisTranspose, Body, BroadcastScope, Cell, ConstScalar, ConvTensor, Copy, Cup, DataShape,
    Delete, Diag, Diagram, ElementWise, IndexKet, LinearParam, MaxMask, OuterProduct, Pool, Section,
    SegmentSwap, SoftMax, SumAxis, Unit, View, cell_runs, collect_axis_names, collect_params,
    is_identity_cell, iter_cells,
)
from ..core.shapes import conv_output_extents

logger = logging.getLogger(__name__)


def _ints(values) -> str:
    return ",".join(str(v) for v in values)


def _dshape(shape: DataShape) -> str:
    return " | ".join(str(s) for s in shape.segments)


def _scope(scope: BroadcastScope) -> str:
    targets = "" if scope.targets is None else "@" + _ints(scope.targets)
    return f"map {scope.axis}{targets}: "


class _Printer:
    def __init__(self, root: Diagram):
        self.root = root
        self.names: Dict[int, str] = {}
        self.taken: Dict[str, Diagram] = {}
        self.defs: List[str] = []
        self.params = collect_params(root)

    def name_of(self, diagram: Diagram) -> str:
        key = id(diagram)
        if key in self.names:
            return self.names[key]
        for name, other in self.taken.items():
            if other == diagram:
                self.names[key] = name
                return name
        name, n = diagram.name, 2
        while name in self.taken:
            name, n = f"{diagram.name}_{n}", n + 1
        if name != diagram.name:
            logger.debug("renamed nested diagram %s to %s", diagram.name, name)
        self.taken[name] = diagram
        self.names[key] = name
        self.defs.append(self.definition(diagram, name))
        return name

    def body(self, body: Body, start: int = 0) -> str:
        """Step text for a body whose run starts at ``start`` (absolute for copy/delete)."""
        if isinstance(body, Diagram):
            return f"call {self.name_of(body)}"
        if isinstance(body, LinearParam):
            if body.transposed:
                return f"linearT {body.name}"
            declared = self.params.get(body.name)
            nobias = declared is not None and declared.bias and not body.bias
            return f"linear {body.name}" + (" nobias" if nobias else "")
        if isinstance(body, ElementWise):
            return f"ew {body.label}"
        if isinstance(body, SoftMax):
            return "softmax"
        if isinstance(body, MaxMask):
            return "maxmask"
        if isinstance(body, (Copy, Delete)):
            return f"{body.kind} {start}"
        if isinstance(body, (SegmentSwap, OuterProduct, Add)):
            return f"{body.kind} {start + body.i} {start + body.j}"
        if isinstance(body, AxisTranspose):
            return "transpose " + " ".join(str(p) for p in body.perm)
        if isinstance(body, (Diag, Cup)):
            return f"{body.kind} {body.p} {body.q}"
        if isinstance(body, View):
            return f"view {body.source} -> {body.target}"
        if isinstance(body, IndexKet):
            return f"index {body.axis} = {body.index}"
        if isinstance(body, Unit):
            return f"unit {body.axis}"
        if isinstance(body, SumAxis):
            return f"sum {body.axis}"
        if isinstance(body, Pool):
            return f"pool {body.mode}"
        if isinstance(body, ConstScalar):
            return f"const {float(body.value)!r}"
        if isinstance(body, ConvTensor):
            return self.conv(body)
        raise TypeError(f"cannot print {type(body).__name__}")

    @staticmethod
    def conv(body: ConvTensor) -> str:
        kind = "convT" if body.transposed else "conv"
        text = (f"{kind} {body.rank} k={_ints(body.kernel)} s={_ints(body.stride)} "
                f"d={_ints(body.dilation)} pad={_ints(body.pad)}")
        if body.labels:
            text += " out=" + ",".join(body.labels)
        elif body.transposed:
            text += " out=" + _ints(body.extent)
        return text

    def cell(self, cell: Cell, start: int = 0) -> str:
        return "".join(_scope(s) for s in cell.broadcasts) + self.body(cell.body, start)

    def section(self, section: Section, indent: str) -> str:
        runs = cell_runs(section)
        active = [(pos, c) for pos, c in runs if not is_identity_cell(c)]
        if len(active) == 1:
            pos, cell = active[0]
            if pos == 0 or (isinstance(cell.body, (Copy, Delete)) and not cell.broadcasts) or (
                    isinstance(cell.body, (SegmentSwap, OuterProduct, Add)) and not cell.broadcasts):
                return self.cell(cell, pos)
        last = max((k for k, c in enumerate(section) if not is_identity_cell(c)), default=0)
        inner = indent + "  "
        branches = []
        for cell in section[:last + 1]:
            branches.append("" if is_identity_cell(cell) else f"\n{inner}{self.cell(cell)};")
        return "par {" + f"\n{inner}|".join(branches) + f"\n{indent}}}"

    def definition(self, diagram: Diagram, name: str) -> str:
        lines = [f"diagram {name}({diagram.input_name}: {_dshape(diagram.domain)}) -> "
                 f"{_dshape(diagram.codomain)} {{"]
        for section in diagram.sections:
            lines.append(f"  {self.section(section, '  ')};")
        lines.append("}")
        return "\n".join(lines)


def _header(diagram: Diagram) -> List[str]:
    lines = []
    axes = collect_axis_names(diagram)
    for _, cell in iter_cells(diagram):
        prim = cell.body
        if isinstance(prim, ConvTensor) and prim.labels:
            values = prim.extent if prim.transposed else conv_output_extents(prim)
            for label, value in zip(prim.labels, values):
                axes.setdefault(label, value)
    if axes:
        lines.append("axes { " + ", ".join(f"{k} = {v}" for k, v in sorted(axes.items())) + " }")
    for name, prim in sorted(collect_params(diagram).items()):
        lines.append(f"param {name}: {prim.source} -> {prim.target}" + (" +bias" if prim.bias else ""))
    return lines


def format_diagram(diagram: Diagram) -> str:
    """Canonical source text for one diagram and everything it calls.

    ``lower(parse(format_diagram(d)))[d.name] == d`` for diagrams the parser
    can produce.
    """
    printer = _Printer(diagram)
    printer.taken[diagram.name] = diagram
    printer.names[id(diagram)] = diagram.name
    main = printer.definition(diagram, diagram.name)
    parts = _header(diagram) + printer.defs + [main]
    return "\n".join(parts) + "\n"


format = format_diagram


def format_cell(cell: Cell, start: int = 0) -> str:
    """Step text for one cell, scopes included."""
    holder = Diagram("step", "x", DataShape(), DataShape(), ((cell,),))
    return _Printer(holder).cell(cell, start)
