"""Compiler for the pulse description language of the Paul box."""

from .codegen import MAX_DEPTH, compile_ast, compile_source, disassemble, listing
from .isa import FormatError, Instruction, Opcode, Program
from .lexer import (
    CompileError,
    LexError,
    ParseError,
    PulseWarning,
    ResourceError,
    SemanticError,
    Token,
    tokenize,
)
from .parser import PulseAst, eval_expr, parse, parse_duration

__all__ = [
    "MAX_DEPTH", "compile_ast", "compile_source", "disassemble", "listing",
    "FormatError", "Instruction", "Opcode", "Program",
    "CompileError", "LexError", "ParseError", "PulseWarning", "ResourceError",
    "SemanticError", "Token", "tokenize",
    "PulseAst", "eval_expr", "parse", "parse_duration",
]
