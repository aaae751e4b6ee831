"""
Reference dense-tensor interpreter.

Sections execute left to right. Broadcast scopes loop over their axis,
except that a run of purely outer scopes over a primitive is executed as one
batched numpy call over the leading axes (same values, same reduction order
per instance). Every value is a float64 ndarray; a scalar is a 0-d array.
"""

import logging
import math
from functools import singledispatch
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import get_current_config
from ..core.errors import EnvMismatch, NotLinear, TooLarge
from ..core.ir import (
    Add, AxisTranspose, Body, BroadcastScope, Cell, ConstScalar, ConvTensor, Copy, Cup, Delete,
    Diag, Diagram, ElementWise, Identity, IndexKet, LinearParam, MaxMask, OuterProduct, Pool,
    Primitive, SegmentSwap, SoftMax, SumAxis, Unit, View, body_arity,
)
from ..core.linearity import is_linear
from ..core.shapes import conv_output_extents
from .params import Env, ParamStore, check_inputs

logger = logging.getLogger(__name__)

Tensors = List[np.ndarray]

_erf = np.vectorize(math.erf, otypes=[np.float64])
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + _erf(x / _SQRT2))


def _dgelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + _erf(x / _SQRT2)) + x * np.exp(-0.5 * x * x) * _INV_SQRT_2PI


ELEMENTWISE: Dict[str, Callable[[np.ndarray, Optional[float]], np.ndarray]] = {
    "relu": lambda x, c: np.maximum(x, 0.0),
    "gelu": lambda x, c: _gelu(x),
    "exp": lambda x, c: np.exp(x),
    "neg": lambda x, c: -x,
    "scale": lambda x, c: x * c,
    "addc": lambda x, c: x + c,
    "recip": lambda x, c: 1.0 / x,
    "sqrt": lambda x, c: np.sqrt(x),
    # derivatives of the builtins above
    "drelu": lambda x, c: (x > 0.0).astype(np.float64),
    "dgelu": lambda x, c: _dgelu(x),
    "drecip": lambda x, c: -1.0 / (x * x),
    "dsqrt": lambda x, c: 0.5 / np.sqrt(x),
}


@singledispatch
def eval_prim(prim: Primitive, inputs: Tensors, params: ParamStore, lead: Tuple[int, ...]) -> Tensors:
    """Evaluate a primitive whose inputs share ``lead`` leading batch axes."""
    raise NotImplementedError(f"no evaluation rule for {type(prim).__name__}")


@eval_prim.register
def _(prim: Identity, inputs, params, lead):
    return [inputs[0]]


@eval_prim.register
def _(prim: Copy, inputs, params, lead):
    return [inputs[0], inputs[0].copy()]


@eval_prim.register
def _(prim: Delete, inputs, params, lead):
    return []


@eval_prim.register
def _(prim: SegmentSwap, inputs, params, lead):
    out = list(inputs)
    out[prim.i], out[prim.j] = out[prim.j], out[prim.i]
    return out


@eval_prim.register
def _(prim: AxisTranspose, inputs, params, lead):
    L = len(lead)
    return [np.transpose(inputs[0], tuple(range(L)) + tuple(L + p for p in prim.perm))]


@eval_prim.register
def _(prim: Diag, inputs, params, lead):
    L = len(lead)
    d = np.diagonal(inputs[0], axis1=L + prim.p, axis2=L + prim.q)
    return [np.ascontiguousarray(np.moveaxis(d, -1, L + prim.p))]


@eval_prim.register
def _(prim: View, inputs, params, lead):
    return [inputs[0].reshape(tuple(lead) + prim.target.extents)]


@eval_prim.register
def _(prim: IndexKet, inputs, params, lead):
    return [np.take(inputs[0], prim.index, axis=len(lead) + prim.axis)]


def _pair(prim, inputs):
    rest = [x for k, x in enumerate(inputs) if k not in (prim.i, prim.j)]
    return inputs[prim.i], inputs[prim.j], rest


@eval_prim.register
def _(prim: OuterProduct, inputs, params, lead):
    a, b, rest = _pair(prim, inputs)
    L = len(lead)
    ra, rb = a.ndim - L, b.ndim - L
    left = a.reshape(a.shape + (1,) * rb)
    right = b.reshape(b.shape[:L] + (1,) * ra + b.shape[L:])
    return [left * right] + rest


@eval_prim.register
def _(prim: Add, inputs, params, lead):
    a, b, rest = _pair(prim, inputs)
    return [a + b] + rest


@eval_prim.register
def _(prim: Cup, inputs, params, lead):
    L = len(lead)
    return [np.trace(inputs[0], axis1=L + prim.p, axis2=L + prim.q)]


@eval_prim.register
def _(prim: Unit, inputs, params, lead):
    x = inputs[0]
    return [x[..., None, None] * np.eye(prim.axis.n)]


@eval_prim.register
def _(prim: ElementWise, inputs, params, lead):
    fn = ELEMENTWISE.get(prim.fn)
    if fn is None:
        raise EnvMismatch(f"unknown element-wise function '{prim.fn}'")
    return [np.asarray(fn(inputs[0], prim.arg), dtype=np.float64)]


@eval_prim.register
def _(prim: SoftMax, inputs, params, lead):
    x = inputs[0]
    e = np.exp(x - np.max(x, axis=-1, keepdims=True))
    return [e / np.sum(e, axis=-1, keepdims=True)]


@eval_prim.register
def _(prim: SumAxis, inputs, params, lead):
    return [np.sum(inputs[0], axis=len(lead) + prim.axis)]


@eval_prim.register
def _(prim: LinearParam, inputs, params, lead):
    x, L = inputs[0], len(lead)
    w = params.weight(prim)
    rs, rt = prim.source.rank, prim.target.rank
    if prim.transposed:
        return [np.tensordot(x, w, axes=(list(range(L, L + rt)), list(range(rs, rs + rt))))]
    y = np.tensordot(x, w, axes=(list(range(L, L + rs)), list(range(rs))))
    if prim.bias:
        y = y + params.bias(prim)
    return [y]


def _conv_indices(prim: ConvTensor) -> Tuple[np.ndarray, ...]:
    """Padded-input index for every (y.., k..) position, one array per spatial dim."""
    ys = conv_output_extents(prim)
    r = prim.rank
    grid = np.indices(ys + tuple(prim.kernel))
    return tuple(prim.stride[d] * grid[d] + prim.dilation[d] * grid[r + d] for d in range(r))


@eval_prim.register
def _(prim: ConvTensor, inputs, params, lead):
    x, L, r = inputs[0], len(lead), prim.rank
    idx = _conv_indices(prim)
    padded = tuple(e + 2 * p for e, p in zip(prim.extent, prim.pad))
    if not prim.transposed:
        xp = np.pad(x, [(0, 0)] * L + [(p, p) for p in prim.pad])
        return [xp[(Ellipsis,) + idx]]
    # scatter-add: move batch axes last so np.add.at indexes the spatial axes directly
    moved = np.moveaxis(x, tuple(range(L)), tuple(range(x.ndim - L, x.ndim))) if L else x
    out = np.zeros(padded + tuple(lead))
    np.add.at(out, idx, moved)
    crop = tuple(slice(p, p + e) for p, e in zip(prim.pad, prim.extent))
    out = out[crop]
    if L:
        out = np.moveaxis(out, tuple(range(r, r + L)), tuple(range(L)))
    return [np.ascontiguousarray(out)]


@eval_prim.register
def _(prim: Pool, inputs, params, lead):
    x, L = inputs[0], len(lead)
    axes = tuple(range(L, x.ndim))
    reduce = np.max if prim.mode == "max" else np.mean
    return [np.asarray(reduce(x, axis=axes), dtype=np.float64)]


@eval_prim.register
def _(prim: ConstScalar, inputs, params, lead):
    return [np.full(tuple(lead), float(prim.value))]


@eval_prim.register
def _(prim: MaxMask, inputs, params, lead):
    x, L = inputs[0], len(lead)
    flat = x.reshape(tuple(lead) + (-1,))
    first = np.argmax(flat, axis=-1)
    mask = np.zeros_like(flat)
    np.put_along_axis(mask, first[..., None], 1.0, axis=-1)
    return [mask.reshape(x.shape)]


def _eval_body(body: Body, inputs: Tensors, params: ParamStore, lead: Tuple[int, ...]) -> Tensors:
    if isinstance(body, Diagram):
        return evaluate(body, inputs, params)
    return eval_prim(body, inputs, params, lead)


def _eval_scoped(body: Body, scopes: Sequence[BroadcastScope], inputs: Tensors,
                 params: ParamStore) -> Tensors:
    if not scopes:
        return _eval_body(body, inputs, params, ())
    if not isinstance(body, Diagram) and all(s.outer for s in scopes):
        lead = tuple(s.axis.n for s in scopes)
        return eval_prim(body, inputs, params, lead)
    scope, rest = scopes[0], scopes[1:]
    instances = []
    for i in range(scope.axis.n):
        sliced = [x[i] if scope.carries(k) else x for k, x in enumerate(inputs)]
        instances.append(_eval_scoped(body, rest, sliced, params))
    count = len(instances[0])
    return [np.stack([inst[o] for inst in instances]) for o in range(count)]


def eval_cell(cell: Cell, inputs: Tensors, params: Optional[ParamStore] = None) -> Tensors:
    """Evaluate one scoped cell on its input run."""
    return _eval_scoped(cell.body, cell.broadcasts, list(inputs), params or ParamStore())


def eval_section(section, state: Tensors, params: ParamStore) -> Tensors:
    pos, out = 0, []
    for cell in section:
        n = body_arity(cell.body)
        out.extend(eval_cell(cell, state[pos:pos + n], params))
        pos += n
    return out


def evaluate(diagram: Diagram, inputs, params: Optional[ParamStore] = None) -> Tensors:
    """Run a diagram. ``inputs`` is an Env or a sequence of arrays (one per domain segment)."""
    if isinstance(inputs, Env):
        params = inputs.params if params is None else params
        inputs = inputs.inputs
    params = params or ParamStore()
    state = check_inputs(diagram, inputs)
    for section in diagram.sections:
        state = eval_section(section, state, params)
    return state


def run(diagram: Diagram, env: Env) -> Tensors:
    return evaluate(diagram, env.inputs, env.params)


def _split(vector: np.ndarray, diagram: Diagram) -> Tensors:
    parts, pos = [], 0
    for shape in diagram.domain.segments:
        n = shape.size
        parts.append(vector[pos:pos + n].reshape(shape.extents))
        pos += n
    return parts


def materialize_linear(diagram: Diagram, params: Optional[ParamStore] = None,
                       limit: Optional[int] = None) -> np.ndarray:
    """Matrix (codomain size × domain size) of a linear diagram, built column by
    column from basis vectors."""
    if not is_linear(diagram):
        raise NotLinear(f"{diagram.name} contains non-linear cells")
    limit = limit if limit is not None else get_current_config().interp.materialize_limit
    a, b = diagram.domain.size, diagram.codomain.size
    if a * b > limit:
        raise TooLarge(f"materializing {diagram.name} needs {b}x{a} = {a * b} elements (limit {limit})")
    columns = []
    for k in range(a):
        basis = np.zeros(a)
        basis[k] = 1.0
        outputs = evaluate(diagram, _split(basis, diagram), params)
        columns.append(np.concatenate([o.ravel() for o in outputs]) if outputs else np.zeros(0))
    matrix = np.stack(columns, axis=1) if columns else np.zeros((b, 0))
    logger.debug("materialized %s as %s matrix", diagram.name, matrix.shape)
    return matrix
