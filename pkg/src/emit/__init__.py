"""Back ends: contraction plans and SVG pictures"""
from .plan import PlanStep, Plan, to_plan, run_plan
from .svg import SvgRenderer, to_svg

__all__ = [
    'PlanStep',
    'Plan',
    'to_plan',
    'run_plan',
    'SvgRenderer',
    'to_svg',
]
