"""Tokenizer for the pulse description language."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from fractions import Fraction


class PulseWarning(UserWarning):
    pass


class CompileError(Exception):
    """Base class for all compiler errors; str() gives ``line:col: message``."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


class LexError(CompileError):
    pass


class ParseError(CompileError):
    pass


class SemanticError(CompileError):
    pass


class ResourceError(CompileError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, NUMBER, OP, NEWLINE, EOF
    text: str
    line: int
    col: int
    value: Fraction | None = None

    @property
    def end_col(self) -> int:
        return self.col + len(self.text)

    def __repr__(self) -> str:
        return f"Token({self.kind}, {self.text!r}, {self.line}:{self.col})"


_TOKEN = re.compile(
    r"(?P<ws>[ \t]+)"
    r"|(?P<comment>\#[^\r\n]*)"
    r"|(?P<newline>\r\n|\n)"
    r"|(?P<hex>0[xX][0-9A-Fa-f]+)"
    r"|(?P<rational>\d*\.\d+)"
    r"|(?P<int>\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/()={}.])"
)


def _int_value(text: str, line: int, col: int) -> Fraction:
    if len(text) > 1 and text[0] == "0":
        if any(c in "89" for c in text):
            raise LexError(f"invalid octal literal {text!r}", line, col)
        return Fraction(int(text, 8))
    return Fraction(int(text))


def tokenize(source: str) -> list[Token]:
    """Split source into tokens with 1-based line/column positions.

    Lines end with CRLF; a bare LF is accepted with a warning.
    """
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    warned_lf = False
    n = len(source)
    while pos < n:
        m = _TOKEN.match(source, pos)
        col = pos - line_start + 1
        if m is None:
            ch = source[pos]
            if ch == "\r":
                raise LexError("carriage return without line feed", line, col)
            raise LexError(f"illegal character {ch!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        if kind == "newline":
            if text == "\n" and not warned_lf:
                warnings.warn(f"{line}:{col}: bare LF line ending (expected CRLF)", PulseWarning,
                              stacklevel=2)
                warned_lf = True
            tokens.append(Token("NEWLINE", text, line, col))
            line += 1
            line_start = m.end()
        elif kind == "hex":
            tokens.append(Token("NUMBER", text, line, col, Fraction(int(text[2:], 16))))
        elif kind == "rational":
            tokens.append(Token("NUMBER", text, line, col, Fraction(text)))
        elif kind == "int":
            tokens.append(Token("NUMBER", text, line, col, _int_value(text, line, col)))
        elif kind == "ident":
            tokens.append(Token("IDENT", text, line, col))
        elif kind == "op":
            tokens.append(Token("OP", text, line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens
