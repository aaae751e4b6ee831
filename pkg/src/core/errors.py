"""
Diagram Errors

Every user-facing failure of the compiler is a DiagramError subclass. Each
carries a short machine code (used in CLI diagnostics as ``error[code]``) and
an optional source span so the command line can point at the offending token.
"""

from dataclasses import dataclass
from typing import Any, Optional, Sequence


@dataclass(frozen=True)
class Span:
    """1-based line/column position inside a .ncd source file"""
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


class DiagramError(Exception):
    """Base class for all diagram compilation, rewrite and evaluation errors"""
    code = "diagram"

    def __init__(self, message: str, span: Optional[Span] = None):
        super().__init__(message)
        self.message = message
        self.span = span

    def with_span(self, span: Optional[Span]) -> "DiagramError":
        """Attach a span unless a more precise one is already present."""
        if self.span is None and span is not None:
            self.span = span
        return self

    def __str__(self) -> str:
        return self.message


class ShapeMismatch(DiagramError):
    """Two shapes that must agree do not (composition, cup, view, add...)"""
    code = "shape"

    def __init__(self, position: str, expected: Any, found: Any, span: Optional[Span] = None):
        self.position = position
        self.expected = expected
        self.found = found
        super().__init__(f"shape mismatch at {position}: expected {expected}, found {found}", span)


class UnboundAxis(DiagramError):
    """A symbolic axis has no concrete length in the compilation environment"""
    code = "unbound-axis"

    def __init__(self, name: str, span: Optional[Span] = None):
        self.name = name
        super().__init__(f"axis '{name}' is not bound to a length", span)


class ConvArithmeticError(DiagramError):
    """Convolution parameters produce an empty or inconsistent output extent"""
    code = "conv"


class SegmentOutOfRange(DiagramError):
    """A step addresses a tuple segment or axis position that does not exist"""
    code = "segment"


class DiagramSyntaxError(DiagramError):
    """Source text does not match the grammar"""
    code = "syntax"

    def __init__(self, line: int, col: int, expected: Sequence[str], found: str = ""):
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        detail = f"unexpected {found}" if found else "syntax error"
        if self.expected:
            detail += f", expected one of: {', '.join(self.expected)}"
        super().__init__(detail, Span(line, col))


class UndefinedName(DiagramError):
    """Reference to an undeclared diagram, parameter or axis"""
    code = "undefined"


class DuplicateName(DiagramError):
    """A diagram, parameter or axis is declared twice in one file"""
    code = "duplicate"


class NotLinear(DiagramError):
    """A linear-only rewrite or materialization met a non-linear cell"""
    code = "not-linear"


class BadAxisMove(DiagramError):
    """An associated-transpose request names axes the cell does not have"""
    code = "axis-move"


class NotMultilinear(DiagramError):
    """The addressed cell cannot be factored as outer product then linear map"""
    code = "not-multilinear"


class NotDifferentiable(DiagramError):
    """A cell has no derivative rule"""
    code = "not-differentiable"


class NotScalarLoss(DiagramError):
    """Gradient pipelines need a single scalar codomain"""
    code = "not-scalar"


class TooLarge(DiagramError):
    """A materialization would exceed the configured element limit"""
    code = "too-large"


class EnvMismatch(DiagramError):
    """Interpreter inputs or parameters do not match the diagram"""
    code = "env"


class TensorFormatError(DiagramError):
    """A .t tensor file is malformed"""
    code = "tensor-format"
