"""
Syntax tree for .ncd sources.

Nodes are frozen dataclasses; spans are excluded from equality so two trees
parsed from differently laid-out text compare equal when they say the same
thing. ``unparse`` renders a tree back to source text.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

from ..core.errors import Span

AxisRef = Union[int, str]


@dataclass(frozen=True)
class AxisNode:
    name: Optional[str] = None
    value: Optional[int] = None
    width: bool = False
    span: Optional[Span] = field(default=None, compare=False)

    def __str__(self) -> str:
        return ("~" if self.width else "") + (self.name if self.name is not None else str(self.value))


@dataclass(frozen=True)
class ShapeNode:
    axes: Tuple[AxisNode, ...] = ()
    span: Optional[Span] = field(default=None, compare=False)

    def __str__(self) -> str:
        return "[" + ", ".join(str(a) for a in self.axes) + "]"


@dataclass(frozen=True)
class AxisDecl:
    name: str
    value: int
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class AxesBlock:
    decls: Tuple[AxisDecl, ...] = ()
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class ParamDecl:
    name: str
    source: ShapeNode
    target: ShapeNode
    bias: bool = False
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class MapPrefix:
    """``map axis:`` (outer) or ``map axis@k,..:`` (inner, run-relative targets)"""
    axis: AxisNode
    targets: Optional[Tuple[int, ...]] = None
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class OpNode:
    """One operation. ``args`` depends on ``kind``:

    linear (name, nobias) | linearT (name,) | ew (fn, arg) | copy/delete (k,)
    swap/outer/add (i, j) | transpose perm | diag/cup (ref, ref) | view (src, dst)
    index (ref, i) | unit (axis,) | sum (ref,) | pool (mode,) | const (value,)
    call (name,) | conv/convT (rank, k, s, d, pad|None, out|None) | par (branches,)
    """
    kind: str
    args: Tuple = ()
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class Step:
    prefixes: Tuple[MapPrefix, ...]
    op: OpNode
    span: Optional[Span] = field(default=None, compare=False)


@dataclass(frozen=True)
class DiagramDecl:
    name: str
    input_name: str
    domain: Tuple[ShapeNode, ...]
    codomain: Tuple[ShapeNode, ...]
    steps: Tuple[Step, ...] = ()
    span: Optional[Span] = field(default=None, compare=False)


Item = Union[AxesBlock, ParamDecl, DiagramDecl]


@dataclass(frozen=True)
class SourceAst:
    items: Tuple[Item, ...] = ()

    @property
    def diagrams(self) -> Tuple[DiagramDecl, ...]:
        return tuple(i for i in self.items if isinstance(i, DiagramDecl))


# ---------------------------------------------------------------------------
# Unparsing
# ---------------------------------------------------------------------------

def _ints(values) -> str:
    return ",".join(str(v) for v in values)


def _dshape(shapes: Tuple[ShapeNode, ...]) -> str:
    return " | ".join(str(s) for s in shapes)


def unparse_op(op: OpNode, indent: str = "") -> str:
    kind, args = op.kind, op.args
    if kind == "linear":
        return f"linear {args[0]}" + (" nobias" if args[1] else "")
    if kind == "linearT":
        return f"linearT {args[0]}"
    if kind == "ew":
        return f"ew {args[0]}" + (f"({args[1]!r})" if args[1] is not None else "")
    if kind in ("softmax", "maxmask"):
        return kind
    if kind in ("copy", "delete", "sum", "call"):
        return f"{kind} {args[0]}"
    if kind in ("swap", "outer", "add", "diag", "cup"):
        return f"{kind} {args[0]} {args[1]}"
    if kind == "transpose":
        return "transpose " + " ".join(str(p) for p in args)
    if kind == "view":
        return f"view {args[0]} -> {args[1]}"
    if kind == "index":
        return f"index {args[0]} = {args[1]}"
    if kind == "unit":
        return f"unit {args[0]}"
    if kind == "pool":
        return f"pool {args[0]}"
    if kind == "const":
        return f"const {args[0]!r}"
    if kind in ("conv", "convT"):
        rank, k, s, d, pad, out = args
        text = f"{kind} {rank} k={_ints(k)} s={_ints(s)} d={_ints(d)}"
        if pad is not None:
            text += f" pad={_ints(pad)}"
        if out is not None:
            text += " out=" + ",".join(str(a) for a in out)
        return text
    if kind == "par":
        inner = indent + "  "
        branches = []
        for branch in args[0]:
            branches.append("".join(f"\n{inner}{unparse_step(s, inner)};" for s in branch))
        return "par {" + f"\n{inner}|".join(branches) + f"\n{indent}}}"
    raise ValueError(f"unknown op kind {kind}")


def unparse_step(step: Step, indent: str = "") -> str:
    prefix = ""
    for m in step.prefixes:
        targets = f"@{_ints(m.targets)}" if m.targets is not None else ""
        prefix += f"map {m.axis}{targets}: "
    return prefix + unparse_op(step.op, indent)


def unparse(ast: SourceAst) -> str:
    """Source text for a tree; parsing it again yields an equal tree."""
    out = []
    for item in ast.items:
        if isinstance(item, AxesBlock):
            body = ", ".join(f"{d.name} = {d.value}" for d in item.decls)
            out.append(f"axes {{ {body} }}" if body else "axes { }")
        elif isinstance(item, ParamDecl):
            out.append(f"param {item.name}: {item.source} -> {item.target}" + (" +bias" if item.bias else ""))
        else:
            head = (f"diagram {item.name}({item.input_name}: {_dshape(item.domain)}) -> "
                    f"{_dshape(item.codomain)} {{")
            body = "".join(f"\n  {unparse_step(s, '  ')};" for s in item.steps)
            out.append(head + body + "\n}")
    return "\n".join(out) + "\n"
