"""Time and space cost polynomials over axis lengths"""
from .cost import (
    CONVENTIONS,
    CostPoly,
    CostReport,
    axis_symbol,
    axis_bindings,
    base_cost,
    cell_cost,
    section_costs,
    time_cost,
    boundary_costs,
    space_cost,
    cost_report,
    compare,
)

__all__ = [
    'CONVENTIONS',
    'CostPoly',
    'CostReport',
    'axis_symbol',
    'axis_bindings',
    'base_cost',
    'cell_cost',
    'section_costs',
    'time_cost',
    'boundary_costs',
    'space_cost',
    'cost_report',
    'compare',
]
