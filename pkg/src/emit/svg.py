"""
Static SVG rendering on a fixed grid.

Boundary k sits at column k: one horizontal wire per axis, segments stacked
top to bottom and separated by a dashed line. Section k is drawn between
boundaries k and k+1 as one glyph group per non-identity cell; identity
cells are plain pass-through wires.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import drawsvg as draw

from ..config import RenderSettings, get_current_config
from ..core.ir import (
    Add, AxisTranspose, ConstScalar, ConvTensor, Copy, Cup, DataShape, Delete, Diag, Diagram,
    ElementWise, IndexKet, LinearParam, MaxMask, OuterProduct, Pool, SegmentSwap, SoftMax, SumAxis,
    Unit, View, cell_runs, is_identity_cell,
)
from ..core.shapes import cell_type, infer_shapes

logger = logging.getLogger(__name__)

STROKE = "#222222"
FILL = "#ffffff"
SCOPE_COLOR = "#555555"


@dataclass(frozen=True)
class _Row:
    top: float
    bottom: float
    wires: Tuple[float, ...]


def _glyph_text(body) -> str:
    if isinstance(body, Diagram):
        return body.name + ("ᵀ" if body.transpose_of is not None else "")
    if isinstance(body, LinearParam):
        mark = "ᵀ" if body.transposed else ""
        return f"L{mark} {body.name}" + (" +" if body.bias else "")
    if isinstance(body, ElementWise):
        return body.label
    if isinstance(body, ConvTensor):
        return "★ᵀ" if body.transposed else "★"
    if isinstance(body, Pool):
        return body.mode
    if isinstance(body, ConstScalar):
        return f"{body.value:g}"
    if isinstance(body, IndexKet):
        return f"{body.index}"
    symbols = {
        Copy: "Δ", Delete: "⊥", SegmentSwap: "⇅", AxisTranspose: "σ", Diag: "diag", Cup: "∪",
        Unit: "∩", View: "view", OuterProduct: "⊗", Add: "+", SumAxis: "Σ", MaxMask: "argmax",
        SoftMax: "◁",
    }
    return symbols.get(type(body), body.kind)


class SvgRenderer:
    """Lays out and draws one diagram."""

    def __init__(self, settings: Optional[RenderSettings] = None):
        self.s = settings or get_current_config().render

    def _layout(self, state: DataShape) -> List[_Row]:
        rows, y = [], float(self.s.margin)
        for k, shape in enumerate(state.segments):
            if k:
                y += self.s.separator_gap
            count = max(shape.rank, 1)
            wires = tuple(y + (i + 0.5) * self.s.row_height for i in range(shape.rank))
            rows.append(_Row(y, y + count * self.s.row_height, wires))
            y += count * self.s.row_height
        return rows

    def _x(self, boundary: int) -> float:
        return self.s.margin + self.s.stub_length / 2 + boundary * self.s.column_width

    def render(self, diagram: Diagram) -> draw.Drawing:
        states = infer_shapes(diagram)
        layouts = [self._layout(state) for state in states]
        bottoms = [rows[-1].bottom if rows else float(self.s.margin + self.s.row_height) for rows in layouts]
        width = 2 * self.s.margin + self.s.stub_length + len(diagram.sections) * self.s.column_width
        height = max(bottoms) + self.s.margin
        d = draw.Drawing(width, height, data_diagram=diagram.name)
        d.append(draw.Rectangle(0, 0, width, height, fill=FILL))
        for k, (state, rows) in enumerate(zip(states, layouts)):
            self._boundary(d, k, state, rows)
        for k, section in enumerate(diagram.sections):
            self._section(d, k, section, states[k], layouts[k], layouts[k + 1])
        return d

    def _boundary(self, d: draw.Drawing, k: int, state: DataShape, rows: List[_Row]) -> None:
        x = self._x(k)
        half = self.s.stub_length / 2
        for shape, row in zip(state.segments, rows):
            for axis, y in zip(shape.axes, row.wires):
                d.append(draw.Line(x - half, y, x + half, y, stroke=STROKE, stroke_width=1.5))
                d.append(draw.Text(
                    str(axis.length), self.s.font_size, x - half, y - 3, fill=STROKE,
                    font_family=self.s.font_family,
                    text_decoration="overline" if axis.width else "none"))
        for upper, lower in zip(rows, rows[1:]):
            y = (upper.bottom + lower.top) / 2
            d.append(draw.Line(x - half, y, x + half, y, stroke=STROKE, stroke_width=1,
                               stroke_dasharray="4,3", data_role="separator"))

    def _section(self, d: draw.Drawing, k: int, section, state: DataShape,
                 before: List[_Row], after: List[_Row]) -> None:
        left = self._x(k) + self.s.stub_length / 2
        right = self._x(k + 1) - self.s.stub_length / 2
        out_pos = 0
        for pos, cell in cell_runs(section):
            width = len(cell_type(cell, tuple(state.segments[pos:pos + cell.arity])))
            if is_identity_cell(cell):
                for y0, y1 in zip(before[pos].wires, after[out_pos].wires):
                    d.append(draw.Line(left, y0, right, y1, stroke=STROKE, stroke_width=1.5))
            else:
                spans = before[pos:pos + cell.arity] + after[out_pos:out_pos + width]
                top = min((r.top for r in spans), default=float(self.s.margin))
                bottom = max((r.bottom for r in spans), default=top + self.s.row_height)
                self._glyph(d, cell, left, right, top, bottom)
            out_pos += width

    def _glyph(self, d: draw.Drawing, cell, left: float, right: float, top: float, bottom: float) -> None:
        body = cell.body
        kind = "diagram" if isinstance(body, Diagram) else body.kind
        group = draw.Group(data_role="cell", data_kind=kind)
        pad = 4.0
        x0, x1, y0, y1 = left + pad, right - pad, top + 2, bottom - 2
        mid = (y0 + y1) / 2
        if isinstance(body, SoftMax):
            group.append(draw.Lines(x1, y0, x1, y1, x0, mid, close=True, fill=FILL, stroke=STROKE))
        elif isinstance(body, (IndexKet, ConstScalar)):
            tip = x1 - (x1 - x0) / 3
            group.append(draw.Lines(x0, y0, tip, y0, x1, mid, tip, y1, x0, y1, close=True,
                                    fill=FILL, stroke=STROKE))
        else:
            group.append(draw.Rectangle(x0, y0, x1 - x0, y1 - y0, rx=3, ry=3, fill=FILL, stroke=STROKE,
                                        stroke_dasharray="3,2" if isinstance(body, Diagram) else "none"))
        weight = "bold" if isinstance(body, LinearParam) else "normal"
        group.append(draw.Text(_glyph_text(body), self.s.font_size, (x0 + x1) / 2, mid, fill=STROKE,
                               font_family=self.s.font_family, font_weight=weight,
                               text_anchor="middle", dominant_baseline="middle"))
        if cell.broadcasts:
            scopes = ", ".join(str(s.axis) + ("" if s.outer else "@" + ",".join(map(str, s.targets)))
                               for s in cell.broadcasts)
            group.append(draw.Text(scopes, self.s.font_size - 2, (x0 + x1) / 2, y0 - 2, fill=SCOPE_COLOR,
                                   font_family=self.s.font_family, text_anchor="middle"))
        d.append(group)


def to_svg(diagram: Diagram, settings: Optional[RenderSettings] = None) -> str:
    """Standalone SVG 1.1 document; identical input gives identical bytes."""
    text = SvgRenderer(settings).render(diagram).as_svg()
    logger.debug("rendered %s: %d bytes", diagram.name, len(text))
    return text
