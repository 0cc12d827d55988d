"""Cycle-accurate virtual Paul box and the Monte-Carlo experiment runner.

Timing model: every instruction starts on an integer 10 ns cycle.  Output
commands and control-flow instructions take one cycle, ``WAIT n`` takes
exactly n cycles, and ``WAIT_TRIGGER`` resumes one cycle after the input
is seen high.  Events are stamped with the cycle on which the instruction
starts.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import TWO_PI
from .motion import (
    COPROPAGATING,
    ORTHOGONAL,
    MotionalDistribution,
    raman_rabi,
    thermal_distribution,
)
from .pulsec.isa import ALL_TARGETS, DDS_REFERENCE_MHZ, INFINITE, WORD, Opcode, Program

CYCLE_S = 10e-9
STACK_DEPTH = 32
N_TTL_OUT, N_TTL_IN, N_DAC, N_DDS, N_PROFILES = 16, 8, 4, 4, 4


class VMFault(RuntimeError):
    pass


class DeadlockError(VMFault):
    """``wait trigger`` can never resume."""


class ExecutionTimeout(VMFault):
    """The programme ran past the configured cycle budget."""


class MappingError(ValueError):
    pass


class InvalidScheduleError(ValueError):
    pass


@dataclass
class DdsBoard:
    freq: list = field(default_factory=lambda: [0] * N_PROFILES)
    phase: list = field(default_factory=lambda: [0] * N_PROFILES)
    profile: int = 0
    live_freq: list = field(default_factory=lambda: [0] * N_PROFILES)
    live_phase: list = field(default_factory=lambda: [0] * N_PROFILES)
    live_profile: int = 0

    def commit(self) -> None:
        self.live_freq = list(self.freq)
        self.live_phase = list(self.phase)
        self.live_profile = self.profile

    @property
    def output(self) -> tuple[float, float]:
        """Live (frequency in MHz, phase in rad)."""
        p = self.live_profile
        return (self.live_freq[p] * DDS_REFERENCE_MHZ / WORD,
                self.live_phase[p] * TWO_PI / WORD)


@dataclass
class BoxState:
    ttl_out: list = field(default_factory=lambda: [False] * N_TTL_OUT)
    ttl_in: list = field(default_factory=lambda: [False] * N_TTL_IN)
    dac: list = field(default_factory=lambda: [0.0] * N_DAC)
    dds: list = field(default_factory=lambda: [DdsBoard() for _ in range(N_DDS)])
    clock: int = 0


@dataclass(frozen=True)
class Event:
    cycle: float
    channel: str
    change: object


@dataclass
class EventTimeline:
    events: list
    total_cycles: int
    final_state: BoxState | None = None

    def on(self, channel: str) -> list:
        return [e for e in self.events if e.channel == channel]


class _Triggers:
    def __init__(self, trace, initial: list):
        self.by_input = {k: ([], []) for k in range(N_TTL_IN)}
        for k in range(N_TTL_IN):
            self.by_input[k][0].append(-1)
            self.by_input[k][1].append(bool(initial[k]))
        for cycle, inp, level in sorted(trace, key=lambda x: x[0]):
            if not 0 <= inp < N_TTL_IN:
                raise ValueError(f"trigger input {inp} out of range")
            cycles, levels = self.by_input[inp]
            cycles.append(int(cycle))
            levels.append(bool(level))

    def first_high(self, inp: int, start: int) -> int | None:
        cycles, levels = self.by_input[inp]
        k = bisect.bisect_right(cycles, start) - 1
        if levels[k]:
            return start
        for j in range(k + 1, len(cycles)):
            if levels[j]:
                return cycles[j]
        return None


def execute(binary, initial: BoxState | None = None, trigger_trace=(),
            timeout_cycles: int = 10**10, max_steps: int = 10**7,
            dds_jitter: bool = False, seed: int | None = None) -> EventTimeline:
    """Run a compiled programme and return its event timeline."""
    prog = binary if isinstance(binary, Program) else Program.from_bytes(binary)
    code = prog.instructions
    st = initial if initial is not None else BoxState()
    trig = _Triggers(trigger_trace, st.ttl_in)
    rng = np.random.default_rng(seed) if dds_jitter else None
    events: list[Event] = []
    stack: list = []
    pc = prog.entry
    clock = st.clock
    steps = 0
    while pc < len(code):
        steps += 1
        if steps > max_steps or clock > timeout_cycles:
            raise ExecutionTimeout(f"no halt after {steps} steps / {clock} cycles")
        ins = code[pc]
        op, t, v = ins.opcode, ins.target, ins.operand
        nxt = pc + 1
        cost = 1
        if op == Opcode.TTL:
            _check(t < N_TTL_OUT, pc, "TTL index")
            st.ttl_out[t] = bool(v)
            events.append(Event(clock, f"ttl{t}", int(bool(v))))
        elif op == Opcode.DAC:
            _check(t < N_DAC, pc, "DAC index")
            st.dac[t] = v / 65535
            events.append(Event(clock, f"dac{t}", st.dac[t]))
        elif op == Opcode.DDS_FREQ or op == Opcode.DDS_PHASE:
            board, prof = t >> 4, t & 0xF
            _check(board < N_DDS and prof < N_PROFILES, pc, "DDS register")
            regs = st.dds[board].freq if op == Opcode.DDS_FREQ else st.dds[board].phase
            regs[prof] = v
        elif op == Opcode.DDS_PROFILE:
            _check(t < N_DDS and v < N_PROFILES, pc, "DDS profile")
            st.dds[t].profile = v
        elif op == Opcode.DDS_UPDATE:
            boards = range(N_DDS) if t == ALL_TARGETS else [t]
            _check(t == ALL_TARGETS or t < N_DDS, pc, "DDS board")
            stamp = clock + (rng.random() if rng is not None else 0)
            for b in boards:
                st.dds[b].commit()
                events.append(Event(stamp, f"dds{b}", st.dds[b].output))
        elif op == Opcode.WAIT:
            cost = v
        elif op == Opcode.WAIT_TRIGGER:
            inputs = range(N_TTL_IN) if t == ALL_TARGETS else [t]
            _check(t == ALL_TARGETS or t < N_TTL_IN, pc, "trigger input")
            hits = [(c, k) for k in inputs if (c := trig.first_high(k, clock)) is not None]
            if not hits:
                raise DeadlockError(f"wait trigger at instruction {pc} never resumes")
            arrival, inp = min(hits)
            if arrival > timeout_cycles:
                raise DeadlockError(f"trigger arrives at {arrival}, after the timeout")
            events.append(Event(arrival, f"trigger{inp}", 1))
            clock = arrival
        elif op == Opcode.LOOP:
            if len(stack) >= STACK_DEPTH:
                raise VMFault("loop stack overflow")
            stack.append(("loop", v))
        elif op == Opcode.ENDLOOP:
            _check(bool(stack) and stack[-1][0] == "loop", pc, "ENDLOOP without LOOP")
            remaining = stack[-1][1] - 1
            if remaining > 0:
                stack[-1] = ("loop", remaining)
                nxt = v
            else:
                stack.pop()
        elif op == Opcode.JMP:
            _check(t == INFINITE, pc, "jump flag")
            nxt = v
        elif op == Opcode.CALL:
            if len(stack) >= STACK_DEPTH:
                raise VMFault("call stack overflow")
            stack.append(("call", pc + 1))
            nxt = v
        elif op == Opcode.RET:
            _check(bool(stack) and stack[-1][0] == "call", pc, "RET without CALL")
            nxt = stack.pop()[1]
        else:
            raise VMFault(f"unknown opcode {op:#x} at {pc}")
        clock += cost
        pc = nxt
    st.clock = clock
    events.sort(key=lambda e: e.cycle)
    return EventTimeline(events, clock, st)


def _check(ok: bool, pc: int, what: str) -> None:
    if not ok:
        raise VMFault(f"invalid {what} at instruction {pc}")


def predict_cycles(binary) -> int:
    """Cycle count of a straight-line programme from the cost table alone."""
    prog = binary if isinstance(binary, Program) else Program.from_bytes(binary)
    total = 0
    for ins in prog.instructions[prog.entry:]:
        if ins.opcode in (Opcode.LOOP, Opcode.ENDLOOP, Opcode.JMP, Opcode.CALL,
                          Opcode.RET, Opcode.WAIT_TRIGGER):
            raise ValueError("programme is not straight-line")
        total += ins.operand if ins.opcode == Opcode.WAIT else 1
    return total


def attenuator_output(dac_value: float) -> float:
    """Relative RF power of the 26 dB log-linear attenuator."""
    if not 0.0 <= dac_value <= 1.0:
        raise ValueError("DAC value must be in [0, 1]")
    return 10.0 ** ((26.0 * dac_value - 26.0) / 10.0)


@dataclass(frozen=True)
class Beam:
    name: str
    ttl: int
    dds: int | None = None
    dac: int | None = None
    intensity: float = 1.0  # W/m^2 at full attenuator output
    i_sat: float | None = None


# intensities in W/m^2 (1 mW/cm^2 = 10 W/m^2)
DEFAULT_BEAMS = (
    Beam("BD", 0, None, None, 2.5e3),
    Beam("BD-detuned", 1, None, None, 2.5e3),
    Beam("RD", 2),
    Beam("repumper", 3),
    Beam("B1", 4, 1, 1, 2.9e6),
    Beam("R1", 5, 2, 2, 6.0e6),
    Beam("R2", 6, 3, 3, 6.0e6),
)


@dataclass(frozen=True)
class ChannelMap:
    beams: tuple = DEFAULT_BEAMS

    def __post_init__(self) -> None:
        ttls = [b.ttl for b in self.beams]
        if len(set(ttls)) != len(ttls):
            raise MappingError("two beams share a TTL index")
        names = [b.name for b in self.beams]
        if len(set(names)) != len(names):
            raise MappingError("duplicate beam name")

    def by_ttl(self, ttl: int) -> Beam | None:
        return next((b for b in self.beams if b.ttl == ttl), None)

    def __getitem__(self, name: str) -> Beam:
        for b in self.beams:
            if b.name == name:
                return b
        raise KeyError(name)


@dataclass(frozen=True)
class PulseInterval:
    start: int
    end: int
    frequency_mhz: float
    intensity: float

    @property
    def duration(self) -> float:
        return (self.end - self.start) * CYCLE_S


def timeline_to_pulses(timeline: EventTimeline, cmap: ChannelMap) -> dict:
    """Per-beam on-intervals with live DDS frequency and calibrated intensity.

    An interval is split when the beam's live DDS output or DAC level
    changes while it is on.
    """
    dds_used = {b.dds for b in cmap.beams if b.dds is not None}
    dac_used = {b.dac for b in cmap.beams if b.dac is not None}
    dds_last: dict = {}
    for e in timeline.events:
        ch = e.channel
        if ch.startswith("ttl") and cmap.by_ttl(int(ch[3:])) is None:
            raise MappingError(f"event on unmapped channel {ch} at cycle {e.cycle}")
        if ch.startswith("dds") and int(ch[3:]) not in dds_used:
            # a broadcast update that leaves an unused board unchanged is harmless
            if e.change != dds_last.get(ch, (0.0, 0.0)):
                raise MappingError(f"event on unmapped channel {ch} at cycle {e.cycle}")
            dds_last[ch] = e.change
        if ch.startswith("dac") and int(ch[3:]) not in dac_used:
            raise MappingError(f"event on unmapped channel {ch} at cycle {e.cycle}")

    out = {}
    for beam in cmap.beams:
        freq, level, on, start = 0.0, 1.0 if beam.dac is None else 0.0, False, 0
        intervals = []

        def close(at):
            if at > start:
                power = attenuator_output(level) if beam.dac is not None else 1.0
                intervals.append(PulseInterval(start, int(at), freq, beam.intensity * power))

        for e in timeline.events:
            cyc = int(math.floor(e.cycle))
            if e.channel == f"ttl{beam.ttl}":
                if e.change and not on:
                    on, start = True, cyc
                elif not e.change and on:
                    close(cyc)
                    on = False
            elif beam.dds is not None and e.channel == f"dds{beam.dds}":
                if on:
                    close(cyc)
                    start = cyc
                freq = e.change[0]
            elif beam.dac is not None and e.channel == f"dac{beam.dac}":
                if on:
                    close(cyc)
                    start = cyc
                level = e.change
        if on:
            close(timeline.total_cycles)
        out[beam.name] = intervals
    return out


@dataclass(frozen=True)
class PhysicsConfig:
    """Physics behind the beams.

    B1+R1 drive co-propagating (carrier only) transitions, B1+R2 the
    orthogonal geometry with Lamb-Dicke parameter ``eta``.  The Raman
    detuning is the DDS difference frequency minus ``raman_resonance_mhz``;
    it selects the nearest sideband order (|k| <= 2).
    """

    base_rabi: float = TWO_PI * 202e3
    eta: float = 0.3
    trap_frequency: float = TWO_PI * 2e6
    temperature: float = 1e-3
    raman_resonance_mhz: float = 0.0
    bright_rate: float = 210e3
    background_rate: float = 210.0
    threshold: int = 1
    leak_probability: float = 0.0
    detection_beam: str = "BD"
    initial: MotionalDistribution | None = None


@dataclass
class ExperimentResult:
    counts: np.ndarray
    bright: np.ndarray  # threshold decision
    state_bright: np.ndarray  # sampled electronic state
    p_bright_model: float

    @property
    def p_bright(self) -> float:
        return float(np.mean(self.bright))

    @property
    def stderr(self) -> float:
        p = self.p_bright
        return math.sqrt(max(p * (1 - p), 1e-300) / len(self.bright))


def _raman_pulses(schedule: dict) -> list:
    """Overlaps of B1 with R1 (co-propagating) or R2 (orthogonal)."""
    pulses = []
    for partner, geometry in (("R1", COPROPAGATING), ("R2", ORTHOGONAL)):
        for a in schedule.get("B1", []):
            for b in schedule.get(partner, []):
                lo, hi = max(a.start, b.start), min(a.end, b.end)
                if hi > lo:
                    pulses.append((lo, hi, geometry, a.frequency_mhz - b.frequency_mhz))
    return sorted(pulses)


def electronic_populations(schedule: dict, physics: PhysicsConfig) -> np.ndarray:
    """Joint (down, up) x n populations after all Raman pulses.

    Each pulse is applied to populations (coherences between pulses are
    dropped), which is exact for a single pulse per repetition.
    """
    dist = physics.initial or thermal_distribution(physics.temperature, physics.trap_frequency)
    pop = np.zeros((2, dist.n_max + 1))
    pop[0] = dist.probs
    n = np.arange(dist.n_max + 1)
    for lo, hi, geometry, diff_mhz in _raman_pulses(schedule):
        tau = (hi - lo) * CYCLE_S
        eta = 0.0 if geometry == COPROPAGATING else physics.eta
        delta = TWO_PI * 1e6 * (diff_mhz - physics.raman_resonance_mhz)
        order = int(np.clip(np.round(delta / physics.trap_frequency), -2, 2)) if eta else 0
        resid = delta - order * physics.trap_frequency
        src = n[(n + order >= 0) & (n + order <= dist.n_max)]
        dst = src + order
        om = raman_rabi(src, dst, eta, physics.base_rabi)
        om_eff2 = om**2 + resid**2
        frac = np.divide(om**2, om_eff2, out=np.zeros_like(om_eff2), where=om_eff2 > 0)
        frac = frac * np.sin(0.5 * np.sqrt(om_eff2) * tau) ** 2
        down, up = pop[0, src].copy(), pop[1, dst].copy()
        pop[0, src] += frac * (up - down)
        pop[1, dst] += frac * (down - up)
    return pop


def run_experiment(schedule: dict, physics: PhysicsConfig | None = None,
                   repetitions: int = 100, rng_seed: int | None = None) -> ExperimentResult:
    """Simulate repetitions of a pulse schedule and photon-count detection."""
    physics = physics or PhysicsConfig()
    windows = schedule.get(physics.detection_beam, [])
    if len(windows) != 1:
        raise InvalidScheduleError(f"need exactly one detection window, found {len(windows)}")
    window = windows[0].duration
    if window <= 0:
        raise InvalidScheduleError("detection window has zero length")
    pop = electronic_populations(schedule, physics)
    p_bright = float(np.clip(pop[0].sum(), 0.0, 1.0))
    rng = np.random.default_rng(rng_seed)
    state = rng.random(repetitions) < p_bright
    if physics.leak_probability:
        state |= rng.random(repetitions) < physics.leak_probability
    rates = np.where(state, physics.bright_rate, physics.background_rate)
    counts = rng.poisson(rates * window)
    return ExperimentResult(counts, counts >= physics.threshold, state, p_bright)


def write_results_csv(path, result: ExperimentResult) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("rep,counts,bright\n")
        for k, (c, b) in enumerate(zip(result.counts, result.bright)):
            fh.write(f"{k},{int(c)},{int(b)}\n")
