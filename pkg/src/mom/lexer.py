"""Line-oriented tokenizer shared by the story DSL and method definitions."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import DslSyntaxError

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#.*)
  | (?P<number>-?\d+(?:\.\d+)?(?![A-Za-z_]))
  | (?P<ident>[A-Za-z_](?:[A-Za-z0-9_]|-(?=[A-Za-z0-9_]))*)
  | (?P<sym>=>|->|[()\[\]:,=.@])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "number" | "sym"
    text: str
    line: int
    column: int

    def __str__(self) -> str:
        return self.text


def tokenize(line: str, lineno: int = 1) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            raise DslSyntaxError(f"unexpected character {line[pos]!r}", line=lineno, column=pos + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), lineno, pos + 1))
        pos = m.end()
    return tokens


class TokenStream:
    """Cursor over one line's tokens with positioned error reporting."""

    def __init__(self, tokens: list[Token], lineno: int, line_len: int = 0):
        self.tokens = tokens
        self.pos = 0
        self.lineno = lineno
        self.end_column = line_len + 1

    def peek(self, offset: int = 0) -> Token | None:
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else None

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def next(self, what: str = "token") -> Token:
        tok = self.peek()
        if tok is None:
            raise DslSyntaxError(f"expected {what}, found end of line", line=self.lineno,
                                 column=self.end_column)
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next(repr(text))
        if tok.text != text:
            raise self.error(f"expected {text!r}, found {tok.text!r}", tok)
        return tok

    def expect_ident(self, what: str = "identifier") -> Token:
        tok = self.next(what)
        if tok.kind != "ident":
            raise self.error(f"expected {what}, found {tok.text!r}", tok)
        return tok

    def accept(self, text: str) -> Token | None:
        tok = self.peek()
        if tok is not None and tok.text == text and tok.kind == "sym":
            self.pos += 1
            return tok
        return None

    def error(self, message: str, tok: Token | None = None) -> DslSyntaxError:
        tok = tok or self.peek()
        column = tok.column if tok is not None else self.end_column
        return DslSyntaxError(message, line=self.lineno, column=column)
