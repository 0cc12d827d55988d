"""Binary instruction set of the virtual pulse processor.

File layout (little-endian)::

    header  b"PCP1"  u16 version  u16 flags  u32 count  u32 entry
    body    count x 8-byte instructions: u8 opcode, u8 target, u16 reserved, u32 operand

``entry`` is the index of the first instruction of the main programme;
subroutines are placed before it.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction

MAGIC = b"PCP1"
VERSION = 1
HEADER = struct.Struct("<4sHHII")
INSTR = struct.Struct("<BBHI")
ALL_TARGETS = 0xFF
INFINITE = 1
MAX_OPERAND = 0xFFFFFFFF
DDS_REFERENCE_MHZ = 1200
WORD = 1 << 32


class Opcode(IntEnum):
    TTL = 0x1
    DAC = 0x2
    DDS_FREQ = 0x3
    DDS_PHASE = 0x4
    DDS_PROFILE = 0x5
    DDS_UPDATE = 0x6
    WAIT = 0x7
    WAIT_TRIGGER = 0x8
    LOOP = 0x9
    JMP = 0xA
    ENDLOOP = 0xB
    CALL = 0xC
    RET = 0xD


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class Instruction:
    opcode: int
    target: int = 0
    operand: int = 0

    def encode(self) -> bytes:
        return INSTR.pack(self.opcode, self.target, 0, self.operand)


@dataclass(frozen=True)
class Program:
    instructions: tuple[Instruction, ...]
    entry: int = 0

    def to_bytes(self) -> bytes:
        head = HEADER.pack(MAGIC, VERSION, 0, len(self.instructions), self.entry)
        return head + b"".join(i.encode() for i in self.instructions)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Program":
        if len(data) < HEADER.size:
            raise FormatError("truncated header")
        magic, version, _flags, count, entry = HEADER.unpack_from(data)
        if magic != MAGIC or version != VERSION:
            raise FormatError("not a pulse program binary")
        if len(data) != HEADER.size + count * INSTR.size:
            raise FormatError("instruction count does not match file size")
        if entry > count:
            raise FormatError("entry point outside the programme")
        instrs = []
        for k in range(count):
            op, target, _res, operand = INSTR.unpack_from(data, HEADER.size + k * INSTR.size)
            instrs.append(Instruction(op, target, operand))
        return cls(tuple(instrs), entry)


def frequency_word(mhz) -> int:
    return int(_round_half_up(mhz * WORD / DDS_REFERENCE_MHZ))


def phase_word(radians) -> int:
    return int(_round_half_up(radians * WORD / (2 * math.pi))) % WORD


def dac_word(value) -> int:
    return int(_round_half_up(value * 65535))


def _round_half_up(x) -> int:
    return math.floor(x + (0.5 if isinstance(x, float) else Fraction(1, 2)))
