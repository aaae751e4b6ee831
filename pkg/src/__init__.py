"""
ncdc - Neural Circuit Diagram Compiler - Source Package
Typed string diagrams for deep learning models: parse, check, rewrite,
differentiate, cost, evaluate and render
"""

__version__ = "0.1.0"

# Package structure:
# - src/config/     : JSON settings with dataclass sections
# - src/core/       : IR, shape typing, composition, builder, contraction algebra, errors
# - src/parser/     : .ncd lexer, grammar, lowering and canonical printer
# - src/rewrite/    : adjoints, associated transposes and rewrite rules
# - src/autodiff/   : forward and reverse derivative transforms
# - src/complexity/ : symbolic time and space costs
# - src/interp/     : reference interpreter, tensor files and oracles
# - src/emit/       : contraction plans and SVG rendering
# - src/corpus/     : manifest of transcribed architectures and their checks
# - src/main.py     : command line entry point
