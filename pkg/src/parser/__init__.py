"""The .ncd source language: tokens, grammar, lowering to IR and canonical printing"""
from .syntax_tree import (
    AxisNode,
    ShapeNode,
    AxisDecl,
    AxesBlock,
    ParamDecl,
    MapPrefix,
    OpNode,
    Step,
    DiagramDecl,
    SourceAst,
    unparse,
)
from .lexer import tokenize
from .grammar import parse, parse_step
from .lower import lower, lower_axis, lower_shape, compile_source, compile_file
from .formatter import format_cell, format_diagram

__all__ = [
    'AxisNode',
    'ShapeNode',
    'AxisDecl',
    'AxesBlock',
    'ParamDecl',
    'MapPrefix',
    'OpNode',
    'Step',
    'DiagramDecl',
    'SourceAst',
    'unparse',
    'tokenize',
    'parse',
    'parse_step',
    'lower',
    'lower_axis',
    'lower_shape',
    'compile_source',
    'compile_file',
    'format_diagram',
    'format_cell',
]
