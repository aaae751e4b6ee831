"""Forward and reverse derivative transforms over diagrams"""
from .rules import (
    DERIVATIVE_OF,
    interleaved,
    tangent_body,
    tangent_cell,
    cotangent_body,
    cotangent_cell,
)
from .transforms import (
    forward_transform,
    reverse_transform,
    jacobian_diagram,
    grad_pipeline,
    jacobian_materialize,
    scalarize,
    evaluate_gradient,
    finite_difference_gradient,
    relative_error,
)

__all__ = [
    'DERIVATIVE_OF',
    'interleaved',
    'tangent_body',
    'tangent_cell',
    'cotangent_body',
    'cotangent_cell',
    'forward_transform',
    'reverse_transform',
    'jacobian_diagram',
    'grad_pipeline',
    'jacobian_materialize',
    'scalarize',
    'evaluate_gradient',
    'finite_difference_gradient',
    'relative_error',
]
