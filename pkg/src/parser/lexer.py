"""Tokenizer for .ncd sources."""

from typing import List

from funcparserlib.lexer import LexerError, Token, TokenSpec, make_tokenizer

from ..core.errors import DiagramSyntaxError

TOKEN_SPECS = [
    TokenSpec("comment", r"#[^\n]*"),
    TokenSpec("newline", r"[\r\n]+"),
    TokenSpec("space", r"[ \t]+"),
    TokenSpec("float", r"-?(\d+\.\d*|\.\d+)([eE][-+]?\d+)?|-?\d+[eE][-+]?\d+"),
    TokenSpec("int", r"-?\d+"),
    TokenSpec("name", r"[A-Za-z_][A-Za-z0-9_]*"),
    TokenSpec("op", r"->|[\[\]{}():;,|@=~+]"),
]

_IGNORED = frozenset({"comment", "newline", "space"})

_tokenize = make_tokenizer(TOKEN_SPECS)


def tokenize(text: str) -> List[Token]:
    """Significant tokens of ``text``; comments and whitespace are dropped."""
    try:
        return [t for t in _tokenize(text) if t.type not in _IGNORED]
    except LexerError as exc:
        line, col = exc.place
        lines = text.splitlines()
        found = repr(lines[line - 1][col - 1:col]) if 0 < line <= len(lines) else "character"
        raise DiagramSyntaxError(line, col, ("a token",), found) from exc
