"""Recursive-descent parser and constant folding for pulse programs."""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

from .lexer import ParseError, PulseWarning, SemanticError, Token, tokenize

Number = Union[Fraction, float]

ALL = "X"  # board / trigger wildcard as written in the source

CLOCK_HZ = 100_000_000
UNITS = {"s": Fraction(1), "ms": Fraction(1, 1000), "us": Fraction(1, 10**6), "ns": Fraction(1, 10**9)}

_TTL = re.compile(r"ttl(0|[1-9][0-9]*)$")
_DAC = re.compile(r"dac(0|[1-9][0-9]*)$")
_DDS = re.compile(r"dds(0|[1-9][0-9]*|X)$")
_PROFILE = re.compile(r"profile(0|[1-9][0-9]*)$")
_TRIGGER = re.compile(r"trigger(0|[1-9][0-9]*|X)$")
_NAME = re.compile(r"[A-Za-z][A-Za-z0-9_]*$")
_KEYWORDS = {"dds_update", "wait", "loop", "sub", "pi"}
_RESERVED_PATTERNS = (_TTL, _DAC, _DDS, _TRIGGER)


def is_reserved(name: str) -> bool:
    return name in _KEYWORDS or any(p.match(name) for p in _RESERVED_PATTERNS)


@dataclass
class Node:
    line: int = field(default=0, kw_only=True, compare=False)
    col: int = field(default=0, kw_only=True, compare=False)


@dataclass
class TtlSet(Node):
    index: int
    value: int


@dataclass
class DacSet(Node):
    index: int
    value: Number


@dataclass
class DdsFreq(Node):
    board: int
    profile: int
    mhz: Number


@dataclass
class DdsPhase(Node):
    board: int
    profile: int
    radians: Number


@dataclass
class DdsProfileSelect(Node):
    board: int
    profile: int


@dataclass
class DdsUpdate(Node):
    board: int | None  # None means all boards


@dataclass
class Wait(Node):
    cycles: int


@dataclass
class WaitTrigger(Node):
    input: int | None  # None means any input


@dataclass
class Loop(Node):
    count: int | None  # None means infinite
    body: list


@dataclass
class SubDef(Node):
    name: str
    body: list


@dataclass
class SubCall(Node):
    name: str


@dataclass
class PulseAst:
    statements: list


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0
        self.subs: set[str] = set()
        self.depth = 0

    # token helpers
    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.i += 1
        return tok

    def error(self, msg: str, tok: Token | None = None, cls=ParseError):
        tok = tok or self.peek()
        return cls(msg, tok.line, tok.col)

    def expect_op(self, op: str) -> Token:
        tok = self.peek()
        if tok.kind != "OP" or tok.text != op:
            raise self.error(f"expected '{op}', found {_describe(tok)}")
        return self.next()

    def at_op(self, op: str) -> bool:
        tok = self.peek()
        return tok.kind == "OP" and tok.text == op

    def skip_newlines(self) -> None:
        while self.peek().kind == "NEWLINE":
            self.i += 1

    # program structure
    def program(self) -> PulseAst:
        stmts = self.statements(top=True)
        if self.peek().kind != "EOF":
            raise self.error(f"unexpected {_describe(self.peek())}")
        return PulseAst(stmts)

    def statements(self, top: bool) -> list:
        out = []
        self.skip_newlines()
        while True:
            tok = self.peek()
            if tok.kind == "EOF" or (tok.kind == "OP" and tok.text == "}"):
                return out
            out.append(self.statement(top))
            tok = self.peek()
            if tok.kind == "NEWLINE":
                self.skip_newlines()
            elif not (tok.kind == "EOF" or (tok.kind == "OP" and tok.text == "}")):
                raise self.error(f"expected end of line, found {_describe(tok)}")

    def block(self) -> list:
        self.expect_op("{")
        body = self.statements(top=False)
        self.expect_op("}")
        return body

    def statement(self, top: bool):
        tok = self.peek()
        if tok.kind != "IDENT":
            raise self.error(f"expected a statement, found {_describe(tok)}")
        word = tok.text
        if (m := _TTL.match(word)):
            return self.ttl(tok, int(m.group(1)))
        if (m := _DAC.match(word)):
            return self.dac(tok, int(m.group(1)))
        if (m := _DDS.match(word)):
            return self.dds(tok, m.group(1))
        if word == "wait":
            return self.wait(tok)
        if word == "loop":
            return self.loop(tok)
        if word == "sub":
            if not top:
                raise self.error("subroutines may only be defined at top level", tok, SemanticError)
            return self.subdef(tok)
        if self.peek(1).kind == "OP" and self.peek(1).text == "(":
            return self.call(tok)
        raise self.error(f"unknown statement {word!r}")

    def ttl(self, tok: Token, index: int):
        self.next()
        if index > 15:
            raise self.error(f"TTL index {index} out of range 0..15", tok, SemanticError)
        self.expect_op("=")
        vtok = self.peek()
        value = self.expr()
        if value not in (0, 1):
            raise self.error("TTL value must be 0 or 1", vtok, SemanticError)
        return TtlSet(index, int(value), line=tok.line, col=tok.col)

    def dac(self, tok: Token, index: int):
        self.next()
        if index > 3:
            raise self.error(f"DAC index {index} out of range 0..3", tok, SemanticError)
        self.expect_op("=")
        vtok = self.peek()
        value = self.expr()
        if not 0 <= value <= 1:
            raise self.error("DAC value must be between 0 and 1", vtok, SemanticError)
        return DacSet(index, value, line=tok.line, col=tok.col)

    def dds(self, tok: Token, board_text: str):
        self.next()
        board = None if board_text == ALL else int(board_text)
        if board is not None and board > 3:
            raise self.error(f"DDS board {board} out of range 0..3", tok, SemanticError)
        self.expect_op(".")
        attr = self.next()
        if attr.kind != "IDENT":
            raise self.error(f"expected DDS attribute, found {_describe(attr)}", attr)
        if attr.text == "update":
            self.expect_op("(")
            self.expect_op(")")
            return DdsUpdate(board, line=tok.line, col=tok.col)
        if board is None:
            raise self.error("board 'X' is only valid with update()", tok, SemanticError)
        profile = 0
        if attr.text == "profile":
            self.expect_op("=")
            ptok = self.peek()
            value = self.expr()
            if value not in (0, 1, 2, 3):
                raise self.error("profile must be an integer 0..3", ptok, SemanticError)
            return DdsProfileSelect(board, int(value), line=tok.line, col=tok.col)
        if (m := _PROFILE.match(attr.text)):
            profile = int(m.group(1))
            if profile > 3:
                raise self.error(f"profile {profile} out of range 0..3", attr, SemanticError)
            self.expect_op(".")
            attr = self.next()
        if attr.kind != "IDENT" or attr.text not in ("frequency", "phase"):
            raise self.error(f"expected 'frequency' or 'phase', found {_describe(attr)}", attr)
        self.expect_op("=")
        vtok = self.peek()
        value = self.expr()
        if attr.text == "frequency":
            if not 0 <= value <= 600:
                raise self.error("frequency must be between 0 and 600 MHz", vtok, SemanticError)
            return DdsFreq(board, profile, value, line=tok.line, col=tok.col)
        return DdsPhase(board, profile, value, line=tok.line, col=tok.col)

    def wait(self, tok: Token):
        self.next()
        nxt = self.peek()
        if nxt.kind == "IDENT" and (m := _TRIGGER.match(nxt.text)):
            self.next()
            inp = None if m.group(1) == ALL else int(m.group(1))
            if inp is not None and inp > 7:
                raise self.error(f"trigger input {inp} out of range 0..7", nxt, SemanticError)
            return WaitTrigger(inp, line=tok.line, col=tok.col)
        cycles = self.duration()
        return Wait(cycles, line=tok.line, col=tok.col)

    def duration(self) -> int:
        vtok = self.peek()
        value = self.expr()
        last = self.toks[self.i - 1]
        unit_tok = self.peek()
        unit = None
        if unit_tok.kind == "IDENT" and unit_tok.line == last.line:
            if unit_tok.text not in UNITS:
                raise self.error(f"unknown time unit {unit_tok.text!r}", unit_tok)
            if unit_tok.col - last.end_col > 1:
                raise self.error("time unit may be separated from the value by one space only",
                                 unit_tok)
            unit = self.next().text
        return duration_cycles(value, unit, vtok)

    def loop(self, tok: Token):
        self.next()
        count = None
        if self.at_op("("):
            self.next()
            ctok = self.peek()
            value = self.expr()
            self.expect_op(")")
            if value < 0 or value != int(value) or isinstance(value, float):
                raise self.error("loop count must be a non-negative integer", ctok, SemanticError)
            count = int(value)
        body = self.block()
        return Loop(count, body, line=tok.line, col=tok.col)

    def subdef(self, tok: Token):
        self.next()
        name_tok = self.next()
        if name_tok.kind != "IDENT":
            raise self.error(f"expected subroutine name, found {_describe(name_tok)}", name_tok)
        name = name_tok.text
        if not _NAME.match(name):
            raise self.error("subroutine names must start with a letter", name_tok, SemanticError)
        if is_reserved(name):
            raise self.error(f"{name!r} is a reserved word", name_tok, SemanticError)
        if name in self.subs:
            raise self.error(f"subroutine {name!r} already defined", name_tok, SemanticError)
        body = self.block()
        # registered after the body: a sub cannot call itself
        self.subs.add(name)
        return SubDef(name, body, line=tok.line, col=tok.col)

    def call(self, tok: Token):
        self.next()
        self.expect_op("(")
        self.expect_op(")")
        if tok.text not in self.subs:
            raise self.error(f"subroutine {tok.text!r} called before definition", tok, SemanticError)
        return SubCall(tok.text, line=tok.line, col=tok.col)

    # constant expressions
    def expr(self) -> Number:
        value = self.term()
        while self.peek().kind == "OP" and self.peek().text in "+-":
            op = self.next().text
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self) -> Number:
        value = self.factor()
        while self.peek().kind == "OP" and self.peek().text in "*/":
            op_tok = self.next()
            rhs = self.factor()
            if op_tok.text == "*":
                value = value * rhs
            else:
                if rhs == 0:
                    raise self.error("division by zero", op_tok, SemanticError)
                value = value / rhs
        return value

    def factor(self) -> Number:
        tok = self.peek()
        if tok.kind == "OP" and tok.text in "+-":
            self.next()
            value = self.factor()
            return value if tok.text == "+" else -value
        if tok.kind == "NUMBER":
            self.next()
            return tok.value
        if tok.kind == "IDENT" and tok.text == "pi":
            self.next()
            return math.pi
        if tok.kind == "OP" and tok.text == "(":
            self.next()
            value = self.expr()
            self.expect_op(")")
            return value
        raise self.error(f"expected a number, found {_describe(tok)}")


def _describe(tok: Token) -> str:
    if tok.kind == "EOF":
        return "end of input"
    if tok.kind == "NEWLINE":
        return "end of line"
    return repr(tok.text)


def duration_cycles(value: Number, unit: str | None, tok: Token | None = None) -> int:
    """Convert a wait value to 10 ns cycles, rounding half up."""
    line, col = (tok.line, tok.col) if tok else (0, 0)
    if value < 0:
        raise SemanticError("wait duration must be >= 0", line, col)
    if unit is None:
        if isinstance(value, float) or value.denominator != 1:
            raise SemanticError("cycle counts must be integers (or give a time unit)", line, col)
        return int(value)
    exact = Fraction(value) * UNITS[unit] * CLOCK_HZ
    cycles = math.floor(exact + Fraction(1, 2))
    if cycles == 0 and exact > 0:
        warnings.warn(f"{line}:{col}: duration shorter than one cycle, rounded up to 10 ns",
                      PulseWarning, stacklevel=3)
        cycles = 1
    return cycles


def parse(tokens: list[Token] | str) -> PulseAst:
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    return _Parser(tokens).program()


def eval_expr(text: str) -> Number:
    """Evaluate a standalone constant expression."""
    p = _Parser(tokenize(text))
    value = p.expr()
    p.skip_newlines()
    if p.peek().kind != "EOF":
        raise p.error(f"unexpected {_describe(p.peek())}")
    return value


def parse_duration(text: str) -> int:
    p = _Parser(tokenize(text))
    cycles = p.duration()
    p.skip_newlines()
    if p.peek().kind != "EOF":
        raise p.error(f"unexpected {_describe(p.peek())}")
    return cycles
