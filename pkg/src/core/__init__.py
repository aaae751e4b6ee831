"""Core diagram IR: shapes, primitives, typing, composition and construction"""
from .errors import (
    Span,
    DiagramError,
    ShapeMismatch,
    UnboundAxis,
    ConvArithmeticError,
    SegmentOutOfRange,
    DiagramSyntaxError,
    UndefinedName,
    DuplicateName,
    NotLinear,
    BadAxisMove,
    NotMultilinear,
    NotDifferentiable,
    NotScalarLoss,
    TooLarge,
    EnvMismatch,
    TensorFormatError,
)
from .ir import (
    AxisLen,
    Axis,
    TensorShape,
    DataShape,
    Primitive,
    Identity,
    Copy,
    Delete,
    SegmentSwap,
    AxisTranspose,
    Diag,
    View,
    IndexKet,
    OuterProduct,
    Cup,
    Unit,
    ElementWise,
    SoftMax,
    Add,
    SumAxis,
    LinearParam,
    ConvTensor,
    Pool,
    ConstScalar,
    MaxMask,
    BroadcastScope,
    Cell,
    Diagram,
    IDENTITY,
    ELEMENTWISE_NAMES,
    PARAMETRIC_ELEMENTWISE,
    make_axis,
    shape_of,
    data_of,
    body_arity,
    cell_at,
    cell_runs,
    iter_cells,
    collect_params,
    collect_axis_names,
    is_identity_cell,
    is_identity_section,
    identity_cells,
)
from .shapes import (
    conv_out_extent,
    infer_pad,
    primitive_type,
    cell_type,
    body_inputs,
    section_type,
    infer_shapes,
)
from .compose import (
    identity,
    from_cell,
    from_primitive,
    compose_seq,
    compose_all,
    stack,
    broadcast,
    inner_broadcast,
    multi_broadcast,
    rebind,
    sequential_cells,
)
from .builder import DiagramBuilder
from .contraction import EINSUM_SYMBOLS, IndexSource, Term, index_string
from .linearity import LINEAR_ELEMENTWISE, is_linear, cell_is_linear

__all__ = [
    'Span',
    'DiagramError',
    'ShapeMismatch',
    'UnboundAxis',
    'ConvArithmeticError',
    'SegmentOutOfRange',
    'DiagramSyntaxError',
    'UndefinedName',
    'DuplicateName',
    'NotLinear',
    'BadAxisMove',
    'NotMultilinear',
    'NotDifferentiable',
    'NotScalarLoss',
    'TooLarge',
    'EnvMismatch',
    'TensorFormatError',
    'AxisLen',
    'Axis',
    'TensorShape',
    'DataShape',
    'Primitive',
    'Identity',
    'Copy',
    'Delete',
    'SegmentSwap',
    'AxisTranspose',
    'Diag',
    'View',
    'IndexKet',
    'OuterProduct',
    'Cup',
    'Unit',
    'ElementWise',
    'SoftMax',
    'Add',
    'SumAxis',
    'LinearParam',
    'ConvTensor',
    'Pool',
    'ConstScalar',
    'MaxMask',
    'BroadcastScope',
    'Cell',
    'Diagram',
    'IDENTITY',
    'ELEMENTWISE_NAMES',
    'PARAMETRIC_ELEMENTWISE',
    'make_axis',
    'shape_of',
    'data_of',
    'body_arity',
    'cell_at',
    'cell_runs',
    'iter_cells',
    'collect_params',
    'collect_axis_names',
    'is_identity_cell',
    'is_identity_section',
    'identity_cells',
    'conv_out_extent',
    'infer_pad',
    'primitive_type',
    'cell_type',
    'body_inputs',
    'section_type',
    'infer_shapes',
    'identity',
    'from_cell',
    'from_primitive',
    'compose_seq',
    'compose_all',
    'stack',
    'broadcast',
    'inner_broadcast',
    'multi_broadcast',
    'rebind',
    'sequential_cells',
    'DiagramBuilder',
    'EINSUM_SYMBOLS',
    'IndexSource',
    'Term',
    'index_string',
    'LINEAR_ELEMENTWISE',
    'is_linear',
    'cell_is_linear',
]
