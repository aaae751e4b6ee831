"""Static linearity table for primitives."""

from functools import singledispatch

from .ir import (
    Add, AxisTranspose, Body, Cell, ConvTensor, Copy, Cup, Delete, Diag, Diagram, ElementWise,
    Identity, IndexKet, LinearParam, Pool, SegmentSwap, SumAxis, Unit, View,
)

LINEAR_ELEMENTWISE = frozenset({"scale", "neg"})

_ALWAYS_LINEAR = (Identity, Copy, Delete, SegmentSwap, AxisTranspose, Diag, View, IndexKet, Cup,
                  Unit, Add, SumAxis, ConvTensor)


@singledispatch
def is_linear(body: Body) -> bool:
    if isinstance(body, _ALWAYS_LINEAR):
        return True
    return False


@is_linear.register
def _(body: LinearParam) -> bool:
    return not body.bias


@is_linear.register
def _(body: ElementWise) -> bool:
    return body.fn in LINEAR_ELEMENTWISE


@is_linear.register
def _(body: Pool) -> bool:
    return body.mode == "mean"


@is_linear.register
def _(body: Diagram) -> bool:
    return all(is_linear(cell.body) for section in body.sections for cell in section)




def cell_is_linear(cell: Cell) -> bool:
    return is_linear(cell.body)
