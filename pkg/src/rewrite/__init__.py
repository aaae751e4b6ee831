"""Diagram rewriting: adjoints, associated transposes and the rule set"""
from .linear import (
    TransposeInfo,
    adjoint_body,
    adjoint_cell,
    adjoint_diagram,
    associated_transpose,
    direct_transpose,
    recover_transpose,
    flip_conv,
    parse_moves,
)
from .rules import (
    RewriteResult,
    RULES,
    cell_inputs,
    replace_cell,
    snake_reduce,
    naturality_swap,
    transpose_linear,
    factor_multilinear,
    drop_unit_axes,
    normalize,
)

__all__ = [
    'TransposeInfo',
    'adjoint_body',
    'adjoint_cell',
    'adjoint_diagram',
    'associated_transpose',
    'direct_transpose',
    'recover_transpose',
    'flip_conv',
    'parse_moves',
    'RewriteResult',
    'RULES',
    'cell_inputs',
    'replace_cell',
    'snake_reduce',
    'naturality_swap',
    'transpose_linear',
    'factor_multilinear',
    'drop_unit_axes',
    'normalize',
]
