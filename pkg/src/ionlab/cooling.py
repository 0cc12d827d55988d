"""Doppler limit and resolved-sideband cooling as deterministic probability flow."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .constants import HBAR, K_B
from .motion import MotionalDistribution, raman_rabi


def doppler_limit(linewidth: float) -> float:
    """Doppler temperature hbar*Gamma/(2 k_B) in kelvin."""
    if not linewidth > 0:
        raise ValueError("linewidth must be > 0")
    return HBAR * linewidth / (2.0 * K_B)


@dataclass(frozen=True)
class CoolingSchedule:
    """Red-sideband pulses addressed at n = start_n, start_n-1, ..., 1.

    ``pulse_calibration`` overrides the pi-time for a target level, either
    as a mapping or a callable; by default tau = pi/|Omega_{n-1,n}|.
    """

    start_n: int = 30
    cycles_per_step: int = 2
    repump_success: float = 1.0
    pulse_calibration: Mapping[int, float] | Callable[[int], float] | None = None

    def __post_init__(self) -> None:
        if self.start_n < 1:
            raise ValueError("start_n must be >= 1")
        if self.cycles_per_step < 1:
            raise ValueError("cycles_per_step must be >= 1")
        if not 0.0 <= self.repump_success <= 1.0:
            raise ValueError("repump_success must be in [0, 1]")

    def targets(self) -> list[int]:
        return list(range(self.start_n, 0, -1))

    def pi_time(self, n: int, eta: float, base_rabi: float) -> float:
        cal = self.pulse_calibration
        if callable(cal):
            return float(cal(n))
        if cal is not None and n in cal:
            return float(cal[n])
        return math.pi / abs(raman_rabi(n - 1, n, eta, base_rabi))


@dataclass
class CoolingResult:
    """``final`` is normalised over the ions still in the cooling cycle;
    ``final_weight`` is their share, so final_weight + lost_population = 1."""

    final: MotionalDistribution
    lost_population: float
    final_weight: float = 1.0
    # per target: (n, population at n before, after, fraction of the
    # pre-step population at n that was not transferred out)
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)

    def __iter__(self):
        # allows ``final, lost = sideband_cool(...)``
        return iter((self.final, self.lost_population))


def sideband_cool(initial: MotionalDistribution, schedule: CoolingSchedule,
                  eta: float, base_rabi: float, n_max: int | None = None) -> CoolingResult:
    """Apply the schedule of red-sideband pulses plus repumping.

    Each pulse acts on all levels at once: level m >= 1 transfers the
    fraction sin^2(Omega_{m-1,m} tau/2), which is repumped to m-1 with
    probability ``repump_success`` and otherwise counted as lost.
    """
    if n_max is not None:
        initial = initial.padded(n_max)
    p = initial.probs.copy()
    m = np.arange(1, len(p))
    om = np.abs(raman_rabi(m - 1, m, eta, base_rabi))
    lost = 0.0
    trace = []
    for n in schedule.targets():
        if n >= len(p):
            continue
        tau = schedule.pi_time(n, eta, base_rabi)
        frac = np.sin(0.5 * om * tau) ** 2
        before = p[n]
        kept = 1.0
        for _ in range(schedule.cycles_per_step):
            moved = p[1:] * frac
            p[1:] -= moved
            p[:-1] += schedule.repump_success * moved
            lost += float((1.0 - schedule.repump_success) * moved.sum())
            kept *= 1.0 - frac[n - 1]
        trace.append((n, float(before), float(p[n]), float(kept)))
    total = p.sum() + lost
    if abs(total - 1.0) > 1e-9:
        raise ArithmeticError(f"population not conserved: {total!r}")
    remaining = p.sum()
    final = MotionalDistribution(p / remaining) if remaining > 0 else MotionalDistribution.point(0)
    return CoolingResult(final, lost, float(remaining), trace)
