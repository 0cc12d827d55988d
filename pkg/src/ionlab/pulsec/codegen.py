"""Code generation from the AST and canonical disassembly."""

from __future__ import annotations

from .isa import (
    ALL_TARGETS,
    INFINITE,
    MAX_OPERAND,
    FormatError,
    Instruction,
    Opcode,
    Program,
    dac_word,
    frequency_word,
    phase_word,
)
from .lexer import ResourceError
from .parser import (
    DacSet,
    DdsFreq,
    DdsPhase,
    DdsProfileSelect,
    DdsUpdate,
    Loop,
    PulseAst,
    SubCall,
    SubDef,
    TtlSet,
    Wait,
    WaitTrigger,
    parse,
)

MAX_DEPTH = 32
CRLF = "\r\n"


class _Emitter:
    def __init__(self):
        self.code: list[Instruction] = []
        self.subs: dict[str, int] = {}
        self.sub_depth: dict[str, int] = {}

    def emit(self, op: Opcode, target: int = 0, operand: int = 0) -> None:
        self.code.append(Instruction(int(op), target, operand))

    def block(self, stmts: list, depth: int) -> int:
        """Emit statements; return the deepest stack use reached."""
        deepest = depth
        for node in stmts:
            deepest = max(deepest, self.statement(node, depth))
        return deepest

    def statement(self, node, depth: int) -> int:
        if isinstance(node, TtlSet):
            self.emit(Opcode.TTL, node.index, node.value)
        elif isinstance(node, DacSet):
            self.emit(Opcode.DAC, node.index, dac_word(node.value))
        elif isinstance(node, DdsFreq):
            self.emit(Opcode.DDS_FREQ, node.board << 4 | node.profile, frequency_word(node.mhz))
        elif isinstance(node, DdsPhase):
            self.emit(Opcode.DDS_PHASE, node.board << 4 | node.profile, phase_word(node.radians))
        elif isinstance(node, DdsProfileSelect):
            self.emit(Opcode.DDS_PROFILE, node.board, node.profile)
        elif isinstance(node, DdsUpdate):
            self.emit(Opcode.DDS_UPDATE, ALL_TARGETS if node.board is None else node.board)
        elif isinstance(node, Wait):
            remaining = node.cycles
            while remaining > MAX_OPERAND:
                self.emit(Opcode.WAIT, 0, MAX_OPERAND)
                remaining -= MAX_OPERAND
            self.emit(Opcode.WAIT, 0, remaining)
        elif isinstance(node, WaitTrigger):
            self.emit(Opcode.WAIT_TRIGGER, ALL_TARGETS if node.input is None else node.input)
        elif isinstance(node, Loop):
            return self.loop(node, depth)
        elif isinstance(node, SubCall):
            used = depth + 1 + self.sub_depth[node.name]
            self._check_depth(used, node)
            self.emit(Opcode.CALL, 0, self.subs[node.name])
            return used
        else:
            raise TypeError(f"unexpected node {node!r}")
        return depth

    def loop(self, node: Loop, depth: int) -> int:
        self._check_depth(depth + 1, node)
        if node.count == 0:
            # body is still checked but never executes
            mark = len(self.code)
            used = self.block(node.body, depth + 1)
            del self.code[mark:]
            return used
        if node.count is None:
            start = len(self.code)
            used = self.block(node.body, depth + 1)
            self.emit(Opcode.JMP, INFINITE, start)
            return used
        if node.count > MAX_OPERAND:
            raise ResourceError("loop count exceeds 32 bits", node.line, node.col)
        self.emit(Opcode.LOOP, 0, node.count)
        start = len(self.code)
        used = self.block(node.body, depth + 1)
        self.emit(Opcode.ENDLOOP, 0, start)
        return used

    @staticmethod
    def _check_depth(depth: int, node) -> None:
        if depth > MAX_DEPTH:
            raise ResourceError(f"nesting depth {depth} exceeds the limit of {MAX_DEPTH}",
                                node.line, node.col)


def compile_ast(ast: PulseAst) -> Program:
    """Lower an AST: subroutines first (in definition order), then main."""
    em = _Emitter()
    main = []
    for node in ast.statements:
        if isinstance(node, SubDef):
            em.subs[node.name] = len(em.code)
            em.sub_depth[node.name] = em.block(node.body, 0)
            em.emit(Opcode.RET)
        else:
            main.append(node)
    entry = len(em.code)
    em.block(main, 0)
    return Program(tuple(em.code), entry)


def compile_source(source: str) -> bytes:
    return compile_ast(parse(source)).to_bytes()


def disassemble(data: bytes | Program) -> str:
    """Render a binary as canonical source that recompiles to the same bytes."""
    prog = data if isinstance(data, Program) else Program.from_bytes(data)
    code = prog.instructions
    names: dict[int, str] = {}
    ranges = []
    start = 0
    for addr in range(prog.entry):
        if code[addr].opcode == Opcode.RET:
            names[start] = f"s{len(names)}"
            ranges.append((start, addr))
            start = addr + 1
    if start != prog.entry:
        raise FormatError("subroutine area does not end with RET")

    lines: list[str] = []
    for (a, b) in ranges:
        lines.append(f"sub {names[a]} {{")
        _decode(code, a, b, 1, names, lines)
        lines.append("}")
    _decode(code, prog.entry, len(code), 0, names, lines)
    return "".join(line + CRLF for line in lines)


def _decode(code, a: int, b: int, level: int, names, lines) -> None:
    pad = "    " * level
    p = a
    while p < b:
        # infinite loops starting here: outermost has the furthest JMP
        ends = [j for j in range(p, b) if code[j].opcode == Opcode.JMP and code[j].operand == p]
        if ends:
            j = max(ends)
            if code[j].target != INFINITE:
                raise FormatError(f"unsupported jump at {j}")
            lines.append(pad + "loop {")
            _decode(code, p, j, level + 1, names, lines)
            lines.append(pad + "}")
            p = j + 1
            continue
        ins = code[p]
        op = ins.opcode
        if op == Opcode.LOOP:
            e = _match_endloop(code, p, b)
            lines.append(pad + f"loop ({ins.operand}) {{")
            _decode(code, p + 1, e, level + 1, names, lines)
            lines.append(pad + "}")
            p = e + 1
            continue
        lines.append(pad + _render(ins, names, p))
        p += 1


def _match_endloop(code, p: int, b: int) -> int:
    depth = 0
    for k in range(p, b):
        op = code[k].opcode
        if op == Opcode.LOOP:
            depth += 1
        elif op == Opcode.ENDLOOP:
            depth -= 1
            if depth == 0:
                if code[k].operand != p + 1:
                    raise FormatError(f"ENDLOOP at {k} does not close LOOP at {p}")
                return k
    raise FormatError(f"LOOP at {p} is never closed")


def _render(ins: Instruction, names, addr: int) -> str:
    op, t, v = ins.opcode, ins.target, ins.operand
    if op == Opcode.TTL:
        return f"ttl{t} = {v}"
    if op == Opcode.DAC:
        return f"dac{t} = {v}/65535"
    if op == Opcode.DDS_FREQ:
        return f"dds{t >> 4}.profile{t & 0xF}.frequency = {v}*1200/4294967296"
    if op == Opcode.DDS_PHASE:
        return f"dds{t >> 4}.profile{t & 0xF}.phase = {v}*pi/2147483648"
    if op == Opcode.DDS_PROFILE:
        return f"dds{t}.profile = {v}"
    if op == Opcode.DDS_UPDATE:
        return "ddsX.update()" if t == ALL_TARGETS else f"dds{t}.update()"
    if op == Opcode.WAIT:
        return f"wait {v}"
    if op == Opcode.WAIT_TRIGGER:
        return "wait triggerX" if t == ALL_TARGETS else f"wait trigger{t}"
    if op == Opcode.CALL:
        if v not in names:
            raise FormatError(f"CALL at {addr} targets no subroutine")
        return f"{names[v]}()"
    raise FormatError(f"cannot render opcode {op:#x} at {addr}")


def listing(data: bytes | Program) -> str:
    """Address-annotated instruction dump for ``--disasm``."""
    prog = data if isinstance(data, Program) else Program.from_bytes(data)
    out = [f"; entry {prog.entry}"]
    for k, ins in enumerate(prog.instructions):
        try:
            name = Opcode(ins.opcode).name
        except ValueError:
            name = f"op{ins.opcode:#x}"
        out.append(f"{k:6d}  {name:<12} {ins.target:#04x} {ins.operand}")
    return "\n".join(out) + "\n"
