"""
Whole-diagram derivative transforms and the gradient pipelines built on them.
"""

import logging
from typing import List, Optional, Sequence, Union

import numpy as np

from ..config import get_current_config
from ..core.builder import DiagramBuilder
from ..core.compose import compose_seq
from ..core.errors import NotDifferentiable, NotScalarLoss, TooLarge
from ..core.ir import (
    IDENTITY, Add, AxisTranspose, BroadcastScope, DataShape, Diagram, TensorShape, Unit, View,
    cell_runs, is_identity_cell,
)
from ..core.shapes import infer_shapes
from ..interp.evaluator import evaluate
from ..interp.params import Env, ParamStore
from .rules import adjoint_or_cotangent, interleaved, tangent_cell

logger = logging.getLogger(__name__)

Point = Union[np.ndarray, Sequence[np.ndarray], Env]


def forward_transform(diagram: Diagram) -> Diagram:
    """The paired functor: [x1, u1, ...] -> [y1, v1, ...], one transformed
    section per original section, so transforming f;g equals composing the
    transformed f and g."""
    boundaries = infer_shapes(diagram)
    sections = []
    for s, section in enumerate(diagram.sections):
        cells = []
        for c, (pos, cell) in enumerate(cell_runs(section)):
            if is_identity_cell(cell):
                cells += [IDENTITY, IDENTITY]
                continue
            inputs = tuple(boundaries[s].segments[pos:pos + cell.arity])
            try:
                cells.append(tangent_cell(cell, inputs))
            except NotDifferentiable as exc:
                exc.message = f"cell {s}.{c} of {diagram.name}: {exc.message}"
                raise
        sections.append(tuple(cells))
    result = Diagram(f"{diagram.name}_fwd", diagram.input_name, interleaved(diagram.domain.segments),
                     interleaved(diagram.codomain.segments), tuple(sections))
    logger.debug("forward_transform(%s): %d sections", diagram.name, len(sections))
    return result


def reverse_transform(diagram: Diagram) -> Diagram:
    """[x1..xn, w1..wm] -> [dx1..dxn]: a forward sweep that saves the inputs
    of every non-linear cell, then the reverse rules in reverse section order."""
    n = len(diagram.domain)
    boundaries = infer_shapes(diagram)
    b = DiagramBuilder(f"{diagram.name}_rev", diagram.domain + diagram.codomain, diagram.input_name)
    current = list(b.inputs[:n])
    cotangents = list(b.inputs[n:])
    tape = []
    for s, section in enumerate(diagram.sections):
        row, nxt = [], []
        for c, (pos, cell) in enumerate(cell_runs(section)):
            wires = current[pos:pos + cell.arity]
            if is_identity_cell(cell):
                row.append((None, None, wires, 1))
                nxt += wires
                continue
            inputs = tuple(boundaries[s].segments[pos:pos + cell.arity])
            try:
                rule, needs_values = adjoint_or_cotangent(cell, inputs)
            except NotDifferentiable as exc:
                exc.message = f"cell {s}.{c} of {diagram.name}: {exc.message}"
                raise
            saved, feed = [], []
            for wire in wires:
                if needs_values:
                    kept, fed = b.copy(wire)
                    saved.append(kept)
                    feed.append(fed)
                else:
                    feed.append(wire)
            outputs = b.apply(cell.body, feed, cell.broadcasts)
            row.append((rule, needs_values, saved, len(outputs)))
            nxt += outputs
        tape.append(row)
        current = nxt
    for row in reversed(tape):
        pos, previous = 0, []
        for rule, needs_values, saved, width in row:
            grads = cotangents[pos:pos + width]
            pos += width
            if rule is None:
                previous += grads
            else:
                previous += b.apply(rule, (saved if needs_values else []) + grads)
        cotangents = previous
    result = b.build(cotangents)
    logger.debug("reverse_transform(%s): %d sections", diagram.name, len(result.sections))
    return result


def _is_scalar(shape: DataShape) -> bool:
    return len(shape) == 1 and shape.segments[0].size == 1


def _identity_tensor(b: DiagramBuilder, shape: TensorShape) -> str:
    """δ over [A, A'] from the scalar 1 and one unit per axis of A."""
    wire = b.const(1.0)
    for axis in shape.axes:
        wire = b.apply1(Unit(axis), wire)
    r = shape.rank
    if r > 1:
        perm = tuple(2 * t for t in range(r)) + tuple(2 * t + 1 for t in range(r))
        wire = b.apply1(AxisTranspose(perm), wire)
    return wire


def jacobian_diagram(diagram: Diagram, segment: int = 0) -> Diagram:
    """Tangents of every output along every basis direction of one input segment.

    The point is shared by all instances; the basis tangent carries the
    broadcast axes; every other tangent is zero. Output k is [A, B_k].
    """
    derived = forward_transform(diagram)
    domain = diagram.domain
    shape = domain.segments[segment]
    b = DiagramBuilder(f"{diagram.name}_jac{segment}", domain, diagram.input_name)
    wires = []
    for k, x in enumerate(b.inputs):
        wires.append(x)
        if k == segment:
            wires.append(_identity_tensor(b, shape))
        else:
            wires.append(b.const(0.0, domain.segments[k].axes))
    scopes = tuple(BroadcastScope(axis, (2 * segment + 1,)) for axis in shape.axes)
    outputs = b.apply(derived, wires, scopes)
    return b.build(outputs[1::2])


def grad_pipeline(diagram: Diagram, mode: str = "reverse") -> Diagram:
    """domain -> gradient of the scalar loss with respect to every input segment."""
    if not _is_scalar(diagram.codomain):
        raise NotScalarLoss(f"{diagram.name} ends in {diagram.codomain}; a gradient needs one scalar output")
    if mode == "reverse":
        reverse = reverse_transform(diagram)
        b = DiagramBuilder(f"{diagram.name}_grad", diagram.domain, diagram.input_name)
        xs = list(b.inputs)
        seed = b.const(1.0, diagram.codomain.segments[0].axes)
        return b.build(b.apply(reverse, xs + [seed]))
    if mode != "forward":
        raise ValueError(f"unknown gradient mode {mode!r}")
    b = DiagramBuilder(f"{diagram.name}_grad", diagram.domain, diagram.input_name)
    originals = list(b.inputs)
    grads = []
    for k, shape in enumerate(diagram.domain.segments):
        xs = []
        for pos, wire in enumerate(originals):
            kept, used = b.copy(wire)
            originals[pos] = kept
            xs.append(used)
        (tangent,) = b.apply(jacobian_diagram(diagram, k), xs)
        if b.shape(tangent).extents != shape.extents:
            tangent = b.apply1(View(b.shape(tangent), shape), tangent)
        grads.append(tangent)
    return b.build(grads)


def _point(diagram: Diagram, point: Point, params: Optional[ParamStore]):
    if isinstance(point, Env):
        return list(point.inputs), params or point.params
    if isinstance(point, np.ndarray) and len(diagram.domain) == 1:
        return [point], params
    return list(point), params


def jacobian_materialize(diagram: Diagram, point: Point, params: Optional[ParamStore] = None,
                         limit: Optional[int] = None) -> np.ndarray:
    """(codomain size × domain size) Jacobian at ``point``, one input segment
    at a time through a unit-broadcast forward derivative."""
    limit = limit if limit is not None else get_current_config().interp.materialize_limit
    a, m = diagram.domain.size, diagram.codomain.size
    if a * m > limit:
        raise TooLarge(f"jacobian of {diagram.name} needs {m}x{a} = {a * m} elements (limit {limit})")
    inputs, params = _point(diagram, point, params)
    blocks = []
    for k, shape in enumerate(diagram.domain.segments):
        tangents = evaluate(jacobian_diagram(diagram, k), inputs, params)
        rows = [t.reshape(shape.size, -1).T for t in tangents]
        blocks.append(np.concatenate(rows, axis=0) if rows else np.zeros((0, shape.size)))
    return np.concatenate(blocks, axis=1) if blocks else np.zeros((m, 0))


def scalarize(diagram: Diagram) -> Diagram:
    """diagram ; (sum of every element of every output), a scalar loss."""
    if _is_scalar(diagram.codomain) and diagram.codomain.segments[0].rank == 0:
        return diagram
    b = DiagramBuilder(f"{diagram.name}_total", diagram.codomain, "y")
    sums = [b.sum_all(w) for w in b.inputs]
    total = sums[0] if sums else b.const(0.0)
    for other in sums[1:]:
        total = b.apply1(Add(0, 1), total, other)
    return compose_seq(diagram, b.build([total]), f"{diagram.name}_scalar")


def evaluate_gradient(diagram: Diagram, point: Point, params: Optional[ParamStore] = None,
                      mode: str = "reverse") -> List[np.ndarray]:
    inputs, params = _point(diagram, point, params)
    return evaluate(grad_pipeline(diagram, mode), inputs, params)


def finite_difference_gradient(diagram: Diagram, point: Point, params: Optional[ParamStore] = None,
                               step: Optional[float] = None) -> List[np.ndarray]:
    """Central differences of a scalar loss, one coordinate at a time."""
    if not _is_scalar(diagram.codomain):
        raise NotScalarLoss(f"{diagram.name} ends in {diagram.codomain}; a gradient needs one scalar output")
    h = step if step is not None else get_current_config().interp.fd_step
    inputs, params = _point(diagram, point, params)
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    grads = []
    for k, x in enumerate(inputs):
        grad = np.zeros_like(x)
        for idx in np.ndindex(*x.shape):
            values = []
            for sign in (1.0, -1.0):
                shifted = [y.copy() for y in inputs]
                shifted[k][idx] += sign * h
                values.append(float(evaluate(diagram, shifted, params)[0].sum()))
            grad[idx] = (values[0] - values[1]) / (2 * h)
        grads.append(grad)
    return grads


def relative_error(found: np.ndarray, expected: np.ndarray, clamp: Optional[float] = None) -> float:
    """Largest per-coordinate |found - expected| / max(|expected|, clamp)."""
    clamp = clamp if clamp is not None else get_current_config().interp.fd_clamp
    found, expected = np.asarray(found, dtype=np.float64), np.asarray(expected, dtype=np.float64)
    if found.size == 0:
        return 0.0
    scale = np.maximum(np.abs(expected), clamp)
    return float(np.max(np.abs(found - expected) / scale))
