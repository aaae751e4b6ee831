"""
Contraction-plan emission.

Each non-identity cell of the inlined diagram becomes a step. Runs of
plumbing kernels over multilinear data (outer products, transposes, diags,
cups, sums) are not emitted one by one: they accumulate in a pending
contraction term and leave as a single einsum step when a consumer needs
the value. Everything else is an opaque step evaluated by the interpreter.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import contraction
from ..core.compose import sequential_cells
from ..core.contraction import IndexSource, Term
from ..core.ir import (
    AxisTranspose, Cell, Copy, Cup, Delete, Diag, Diagram, OuterProduct, SegmentSwap, SumAxis,
    TensorShape,
)
from ..core.shapes import cell_type
from ..interp.evaluator import eval_cell
from ..interp.params import Env, ParamStore, check_inputs
from ..parser.formatter import format_cell

logger = logging.getLogger(__name__)

_UNARY_PLUMBING = (AxisTranspose, Diag, Cup, SumAxis)


@dataclass(frozen=True)
class PlanStep:
    index: int
    op: str
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    in_axes: Tuple[Tuple[str, ...], ...]
    out_axes: Tuple[Tuple[str, ...], ...]
    einsum: Optional[str] = None
    detail: str = ""
    cell: Optional[Cell] = field(default=None, compare=False)

    def to_dict(self) -> Dict:
        record = {
            "step": self.index,
            "op": self.op,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "in_axes": [list(a) for a in self.in_axes],
            "out_axes": [list(a) for a in self.out_axes],
        }
        if self.einsum is not None:
            record["index"] = self.einsum
        if self.detail:
            record["detail"] = self.detail
        return record


@dataclass
class Plan:
    name: str
    inputs: List[str]
    outputs: List[str]
    steps: List[PlanStep]
    shapes: Dict[str, TensorShape]

    def contractions(self) -> List[str]:
        return [s.einsum for s in self.steps if s.einsum is not None]

    def to_jsonl(self) -> str:
        """One JSON object per step; an empty plan is the empty string."""
        return "".join(json.dumps(s.to_dict(), sort_keys=True) + "\n" for s in self.steps)


def _labels(shape: TensorShape) -> Tuple[str, ...]:
    return tuple(str(a) for a in shape.axes)


class _Planner:
    def __init__(self, diagram: Diagram):
        self.diagram = diagram
        self.source = IndexSource()
        self.shapes: Dict[str, TensorShape] = {}
        self.steps: List[PlanStep] = []
        self._count = 0

    def register(self, shape: TensorShape) -> str:
        name = f"t{self._count}"
        self._count += 1
        self.shapes[name] = shape
        return name

    def leaf(self, register: str) -> Term:
        return contraction.leaf(register, self.shapes[register], self.source)

    def materialize(self, term: Term) -> str:
        if term.trivial:
            return term.operands[0][0]
        out = self.register(term.shape)
        inputs = tuple(contraction.registers(term))
        self.steps.append(PlanStep(
            len(self.steps), "einsum", inputs, (out,),
            tuple(_labels(self.shapes[r]) for r in inputs), (_labels(term.shape),),
            contraction.index_string(term)))
        return out

    def opaque(self, cell: Cell, run: Sequence[Term], inputs: Tuple[TensorShape, ...]) -> List[Term]:
        regs = tuple(self.materialize(t) for t in run)
        outputs = cell_type(cell, inputs)
        outs = tuple(self.register(s) for s in outputs)
        self.steps.append(PlanStep(
            len(self.steps), cell.body.kind if not isinstance(cell.body, Diagram) else "call",
            regs, outs, tuple(_labels(s) for s in inputs), tuple(_labels(s) for s in outputs),
            None, format_cell(cell), cell))
        return [self.leaf(r) for r in outs]

    def fuse(self, cell: Cell, run: List[Term]) -> Optional[List[Term]]:
        """Terms after a plumbing cell, or None when the cell needs data."""
        body, scopes = cell.body, cell.broadcasts
        lead = len(scopes)
        if isinstance(body, (Copy, Delete) + _UNARY_PLUMBING):
            if not all(s.carries(0) for s in scopes):
                return None
            (term,) = run
            if isinstance(body, Copy):
                reg = self.materialize(term)
                return [self.leaf(reg), self.leaf(reg)]
            if isinstance(body, Delete):
                return []
            if isinstance(body, AxisTranspose):
                return [contraction.transpose(term, body.perm, lead)]
            if isinstance(body, Diag):
                return [contraction.diag(term, lead + body.p, lead + body.q)]
            if isinstance(body, Cup):
                return [contraction.cup(term, lead + body.p, lead + body.q)]
            return [contraction.sum_axis(term, lead + body.axis)]
        if isinstance(body, SegmentSwap):
            if not all(s.outer for s in scopes):
                return None
            swapped = list(run)
            swapped[body.i], swapped[body.j] = run[body.j], run[body.i]
            return swapped
        if isinstance(body, OuterProduct) and body.arity == 2:
            return self.outer(cell, run)
        return None

    def outer(self, cell: Cell, run: List[Term]) -> Optional[List[Term]]:
        scopes = cell.broadcasts
        if any(not s.carries(0) and not s.carries(1) for s in scopes):
            return None
        x, y = run
        x_levels = [lvl for lvl, s in enumerate(scopes) if s.carries(0)]
        y_levels = [lvl for lvl, s in enumerate(scopes) if s.carries(1)]
        x_lead = dict(zip(x_levels, x.out))
        y_lead = dict(zip(y_levels, y.out))
        shared = []
        for lvl, scope in enumerate(scopes):
            if lvl in x_lead:
                shared.append(x_lead[lvl])
                if lvl in y_lead:
                    y = y.rename(y_lead[lvl], x_lead[lvl])
            else:
                shared.append(y_lead[lvl])
        x_body = (x.out[len(x_levels):], x.axes[len(x_levels):])
        y_body = (y.out[len(y_levels):], y.axes[len(y_levels):])
        first, second = (x_body, y_body) if cell.body.i == 0 else (y_body, x_body)
        out = tuple(shared) + first[0] + second[0]
        axes = tuple(s.axis for s in scopes) + first[1] + second[1]
        return [contraction.product(x, y, out, axes)]

    def run(self) -> "Plan":
        inputs = [self.register(s) for s in self.diagram.domain.segments]
        state = [self.leaf(r) for r in inputs]
        for start, cell, shapes in sequential_cells(self.diagram):
            run = state[start:start + cell.arity]
            result = self.fuse(cell, run)
            if result is None:
                result = self.opaque(cell, run, shapes)
            state = state[:start] + result + state[start + cell.arity:]
        outputs = [self.materialize(t) for t in state]
        logger.debug("plan for %s: %d steps, %d contractions", self.diagram.name, len(self.steps),
                     sum(1 for s in self.steps if s.einsum))
        return Plan(self.diagram.name, inputs, outputs, self.steps, self.shapes)


def to_plan(diagram: Diagram) -> Plan:
    """Lower a diagram to contraction and kernel steps over named registers."""
    return _Planner(diagram).run()


def run_plan(plan: Plan, diagram: Diagram, inputs, params: Optional[ParamStore] = None) -> List[np.ndarray]:
    """Execute a plan: numpy.einsum for contractions, the interpreter for the rest."""
    if isinstance(inputs, Env):
        params = inputs.params if params is None else params
        inputs = inputs.inputs
    params = params or ParamStore()
    values: Dict[str, np.ndarray] = dict(zip(plan.inputs, check_inputs(diagram, inputs)))
    for step in plan.steps:
        args = [values[r] for r in step.inputs]
        if step.einsum is not None:
            results = [np.einsum(step.einsum, *args)]
        else:
            results = eval_cell(step.cell, args, params)
        for reg, value in zip(step.outputs, results):
            values[reg] = np.asarray(value, dtype=np.float64)
    return [values[r] for r in plan.outputs]
