"""
Parser combinator grammar for .ncd sources (funcparserlib).

    file    := (axes | param | diagram)*
    axes    := "axes" "{" [ident "=" INT ("," ident "=" INT)*] "}"
    param   := "param" ident ":" shape "->" shape ["+" "bias"]
    diagram := "diagram" ident "(" ident ":" dshape ")" "->" dshape "{" (step ";")* "}"
    dshape  := shape ("|" shape)*
    shape   := "[" [axis ("," axis)*] "]"
    axis    := ["~"] (ident | INT)
    step    := ("map" axis ["@" INT ("," INT)*] ":")* op
"""

import logging
from typing import Sequence

from funcparserlib.lexer import Token
from funcparserlib.parser import NoParseError, finished, forward_decl, many, maybe, oneplus, some

from ..core.errors import DiagramSyntaxError, Span
from .lexer import tokenize
from .syntax_tree import (
    AxesBlock, AxisDecl, AxisNode, DiagramDecl, MapPrefix, OpNode, ParamDecl, ShapeNode, SourceAst,
    Step,
)

logger = logging.getLogger(__name__)


def _span(token: Token) -> Span:
    return Span(*token.start)


def kw(word: str):
    return some(lambda t: t.type == "name" and t.value == word).named(f"'{word}'")


def op(symbol: str):
    return some(lambda t: t.type == "op" and t.value == symbol).named(f"'{symbol}'")


ident = some(lambda t: t.type == "name").named("identifier")
int_tok = some(lambda t: t.type == "int").named("integer")
integer = int_tok >> (lambda t: int(t.value))
number = (some(lambda t: t.type in ("int", "float")) >> (lambda t: float(t.value))).named("number")
ints = integer + many(-op(",") + integer) >> (lambda t: (t[0],) + tuple(t[1]))


def _axis(parts) -> AxisNode:
    tilde, token = parts
    first = tilde or token
    if token.type == "int":
        return AxisNode(None, int(token.value), tilde is not None, _span(first))
    return AxisNode(token.value, None, tilde is not None, _span(first))


axis = maybe(op("~")) + (ident | int_tok) >> _axis
axis.named("axis")


def _shape(parts) -> ShapeNode:
    bracket, body = parts
    axes = () if body is None else (body[0],) + tuple(body[1])
    return ShapeNode(axes, _span(bracket))


shape = op("[") + maybe(axis + many(-op(",") + axis)) + -op("]") >> _shape
dshape = shape + many(-op("|") + shape) >> (lambda t: (t[0],) + tuple(t[1]))
axisref = (integer | (ident >> (lambda t: t.value))).named("axis position or name")


def _op(kind: str, build=lambda rest: tuple(rest)):
    """Wrap the parsed pieces following the keyword token into an OpNode."""
    def make(parts):
        if isinstance(parts, tuple):
            token, rest = parts[0], parts[1:]
        else:
            token, rest = parts, ()
        return OpNode(kind, build(rest), _span(token))
    return make


def _opt_flag(rest):
    return (rest[0].value, rest[1] is not None)


def _ew(rest):
    return (rest[0].value, rest[1])


def _conv(rest):
    rank, k, s, d, pad, out = rest[0]
    return (rank, tuple(k), tuple(s), tuple(d),
            tuple(pad) if pad is not None else None,
            tuple(out) if out is not None else None)


step = forward_decl()
branch = many(step + -op(";")) >> tuple

conv_tail = (
    integer
    + -kw("k") + -op("=") + ints
    + -kw("s") + -op("=") + ints
    + -kw("d") + -op("=") + ints
    + maybe(-kw("pad") + -op("=") + ints)
    + maybe(-kw("out") + -op("=") + (axis + many(-op(",") + axis) >> (lambda t: (t[0],) + tuple(t[1]))))
)

operation = (
    (kw("linear") + ident + maybe(kw("nobias")) >> _op("linear", _opt_flag))
    | (kw("linearT") + ident >> _op("linearT", lambda r: (r[0].value,)))
    | (kw("ew") + ident + maybe(-op("(") + number + -op(")")) >> _op("ew", _ew))
    | (kw("softmax") >> _op("softmax"))
    | (kw("maxmask") >> _op("maxmask"))
    | (kw("copy") + integer >> _op("copy"))
    | (kw("delete") + integer >> _op("delete"))
    | (kw("swap") + integer + integer >> _op("swap"))
    | (kw("transpose") + oneplus(integer) >> _op("transpose", lambda r: tuple(r[0])))
    | (kw("diag") + axisref + axisref >> _op("diag"))
    | (kw("view") + shape + -op("->") + shape >> _op("view"))
    | (kw("index") + axisref + -op("=") + integer >> _op("index"))
    | (kw("outer") + integer + integer >> _op("outer"))
    | (kw("cup") + axisref + axisref >> _op("cup"))
    | (kw("unit") + axis >> _op("unit"))
    | (kw("sum") + axisref >> _op("sum"))
    | (kw("add") + integer + integer >> _op("add"))
    | (kw("convT") + conv_tail >> _op("convT", _conv))
    | (kw("conv") + conv_tail >> _op("conv", _conv))
    | (kw("pool") + (kw("max") | kw("mean")) >> _op("pool", lambda r: (r[0].value,)))
    | (kw("const") + number >> _op("const"))
    | (kw("call") + ident >> _op("call", lambda r: (r[0].value,)))
    | (kw("par") + -op("{") + branch + many(-op("|") + branch) + -op("}")
       >> _op("par", lambda r: ((r[0],) + tuple(r[1]),)))
).named("operation")


def _prefix(parts) -> MapPrefix:
    token, ax, targets = parts
    return MapPrefix(ax, tuple(targets) if targets is not None else None, _span(token))


prefix = kw("map") + axis + maybe(-op("@") + ints) + -op(":") >> _prefix


def _step(parts) -> Step:
    prefixes, operation_node = parts
    span = prefixes[0].span if prefixes else operation_node.span
    return Step(tuple(prefixes), operation_node, span)


step.define(many(prefix) + operation >> _step)


def _axes_block(parts) -> AxesBlock:
    token, body = parts
    decls = () if body is None else (body[0],) + tuple(body[1])
    return AxesBlock(decls, _span(token))


axis_decl = ident + -op("=") + integer >> (lambda t: AxisDecl(t[0].value, t[1], _span(t[0])))
axes_block = kw("axes") + -op("{") + maybe(axis_decl + many(-op(",") + axis_decl)) + -op("}") >> _axes_block


def _param(parts) -> ParamDecl:
    token, name, source, target, bias = parts
    return ParamDecl(name.value, source, target, bias is not None, _span(token))


param_decl = kw("param") + ident + -op(":") + shape + -op("->") + shape + maybe(op("+") + kw("bias")) >> _param


def _diagram(parts) -> DiagramDecl:
    token, name, input_name, domain, codomain, steps = parts
    return DiagramDecl(name.value, input_name.value, domain, codomain, steps, _span(token))


diagram_decl = (
    kw("diagram") + ident + -op("(") + ident + -op(":") + dshape + -op(")")
    + -op("->") + dshape + -op("{") + branch + -op("}")
) >> _diagram

source_file = many(axes_block | param_decl | diagram_decl) + -finished >> (lambda items: SourceAst(tuple(items)))


def _syntax_error(exc: NoParseError, tokens: Sequence[Token], text: str) -> DiagramSyntaxError:
    expected = getattr(exc.state.parser, "name", None)
    expected_set = (expected,) if expected else ()
    if exc.state.max < len(tokens):
        token = tokens[exc.state.max]
        line, col = token.start
        return DiagramSyntaxError(line, col, expected_set, repr(token.value))
    lines = text.splitlines() or [""]
    return DiagramSyntaxError(len(lines), len(lines[-1]) + 1, expected_set, "end of input")


def parse(text: str) -> SourceAst:
    """Parse source text into a SourceAst; comments are discarded."""
    tokens = tokenize(text)
    try:
        return source_file.parse(tokens)
    except NoParseError as exc:
        raise _syntax_error(exc, tokens, text) from None


def parse_step(text: str) -> Step:
    tokens = tokenize(text)
    try:
        return (step + -finished).parse(tokens)
    except NoParseError as exc:
        raise _syntax_error(exc, tokens, text) from None
