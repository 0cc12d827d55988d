"""Squeezing the axial mode of a single ion by a non-adiabatic frequency ramp.

The mode function obeys f'' + w(t)^2 f = 0, starting as the vacuum mode of
the initial frequency.  After the ramp it is projected on the vacuum
modes of the final frequency, giving Bogoliubov coefficients (alpha, beta)
and the squeeze parameter r = arcsinh|beta|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .motion import MotionalDistribution, raman_rabi

SHAPES = ("sudden", "linear", "smooth-step")


class AccuracyError(ArithmeticError):
    """Fixed-step integration is not converged at the requested step."""


class NumericalError(ArithmeticError):
    """Bogoliubov extraction failed the normalisation check."""


@dataclass(frozen=True)
class RampProfile:
    initial_frequency: float
    final_frequency: float
    rise_time: float = 1e-6
    shape: str = "linear"

    def __post_init__(self) -> None:
        if not (self.initial_frequency > 0 and self.final_frequency > 0):
            raise ValueError("ramp frequencies must be > 0")
        if self.rise_time < 0:
            raise ValueError("rise time must be >= 0")
        if self.shape not in SHAPES:
            raise ValueError(f"unknown ramp shape {self.shape!r}")

    @property
    def duration(self) -> float:
        return 0.0 if self.shape == "sudden" else self.rise_time

    def frequency(self, t):
        """Angular frequency at time t (ramp starts at t = 0)."""
        t = np.asarray(t, dtype=float)
        if self.duration == 0:
            x = np.where(t < 0, 0.0, 1.0)
        else:
            x = np.clip(t / self.duration, 0.0, 1.0)
            if self.shape == "smooth-step":
                x = x * x * (3.0 - 2.0 * x)
        w = self.initial_frequency + (self.final_frequency - self.initial_frequency) * x
        return w if w.ndim else float(w)


class _Sequence:
    """Consecutive ramps treated as one frequency profile."""

    def __init__(self, ramps: Sequence[RampProfile]):
        if not ramps:
            raise ValueError("need at least one ramp")
        self.ramps = list(ramps)
        self.starts = np.cumsum([0.0] + [r.duration for r in self.ramps[:-1]])
        self.total = float(self.starts[-1] + self.ramps[-1].duration)

    @property
    def initial_frequency(self) -> float:
        return self.ramps[0].initial_frequency

    @property
    def final_frequency(self) -> float:
        return self.ramps[-1].final_frequency

    def frequency(self, t: float) -> float:
        idx = int(np.searchsorted(self.starts, t, side="right")) - 1
        idx = min(max(idx, 0), len(self.ramps) - 1)
        return float(self.ramps[idx].frequency(t - self.starts[idx]))


def scale_factor(frequency, duration: float, step: float, tol: float = 1e-6):
    """Scale parameter b(t) of the ion crystal under a frequency profile.

    Solves b'' + w(t)^2 b = w(0)^2 / b^2 with b(0) = 1, b'(0) = 0 by RK4.
    The step is validated against a half-step run; a discrepancy above
    ``tol`` raises AccuracyError.  Returns (times, b).
    """
    if callable(frequency):
        freq = frequency
    else:
        freq = frequency.frequency
    if not step > 0 or duration < 0:
        raise ValueError("need step > 0 and duration >= 0")
    w0sq = freq(0.0) ** 2

    def rk4(h: float, n: int):
        b, v = 1.0, 0.0
        out = np.empty(n + 1)
        out[0] = b

        def acc(t, b):
            return w0sq / (b * b) - freq(t) ** 2 * b

        for k in range(n):
            t = k * h
            a1 = acc(t, b)
            b2, v2 = b + 0.5 * h * v, v + 0.5 * h * a1
            a2 = acc(t + 0.5 * h, b2)
            b3, v3 = b + 0.5 * h * v2, v + 0.5 * h * a2
            a3 = acc(t + 0.5 * h, b3)
            b4, v4 = b + h * v3, v + h * a3
            a4 = acc(t + h, b4)
            b, v = (b + h / 6.0 * (v + 2 * v2 + 2 * v3 + v4),
                    v + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4))
            out[k + 1] = b
        return out

    n = max(1, math.ceil(duration / step - 1e-9))
    coarse = rk4(step, n)
    fine = rk4(step / 2, 2 * n)[::2]
    err = float(np.max(np.abs(coarse - fine)))
    if err > tol:
        raise AccuracyError(f"scale factor not converged: step error {err:.3g} > {tol:g}")
    return np.arange(n + 1) * step, coarse


@dataclass(frozen=True)
class SqueezeResult:
    squeeze_parameter: float
    mean_n: float
    occupations: MotionalDistribution
    alpha: complex = 1.0
    beta: complex = 0.0


def squeezed_probabilities(r: float, n_max: int) -> np.ndarray:
    """P(2m) = (2m)!/(4^m (m!)^2) tanh^{2m} r / cosh r, zero for odd n."""
    p = np.zeros(n_max + 1)
    if r == 0:
        p[0] = 1.0
        return p
    m = np.arange(n_max // 2 + 1)
    log_p = (special.gammaln(2 * m + 1) - 2 * m * math.log(2.0) - 2 * special.gammaln(m + 1)
             + 2 * m * math.log(math.tanh(r)) - math.log(math.cosh(r)))
    p[0::2] = np.exp(log_p)
    return p


def _squeezed_dist(r: float, n_max: int | None = None) -> MotionalDistribution:
    if n_max is None:
        # tail weight ~ tanh(r)^n; keep it below 1e-12
        t = math.tanh(r)
        n_max = 50 if t < 1e-3 else max(50, int(math.ceil(2 * 28 / -math.log(t))) + 2)
    p = squeezed_probabilities(r, n_max)
    return MotionalDistribution(p / p.sum())


def squeezed_occupations(mean_n: float, n_max: int | None = None) -> MotionalDistribution:
    if mean_n < 0:
        raise ValueError("mean_n must be >= 0")
    return _squeezed_dist(math.asinh(math.sqrt(mean_n)), n_max)


def bogoliubov(f: complex, df: complex, omega: float) -> tuple[complex, complex]:
    """Project a mode function onto the vacuum modes of frequency omega."""
    c = math.sqrt(omega / 2.0)
    return c * (f + 1j * df / omega), c * (f - 1j * df / omega)


def _advance(rhs, y, t0, t1, max_step, rtol, atol):
    sol = integrate.solve_ivp(rhs, (t0, t1), y, method="DOP853", rtol=rtol, atol=atol,
                              max_step=max_step)
    if not sol.success:
        raise NumericalError(sol.message)
    return sol.y[:, -1]


def mode_squeezing(ramp, mode_coupling: float = 0.0, rtol: float = 1e-10,
                   atol: float = 1e-14, n_max: int | None = None) -> SqueezeResult:
    """Squeezing produced by a ramp (or a sequence of ramps).

    For a single ion the crystal term is absent (``mode_coupling`` = 0).
    A non-zero coupling adds omega_k^2/b^3 with b from the scale equation.
    """
    prof = _Sequence([ramp] if isinstance(ramp, RampProfile) else list(ramp))
    w0, w1 = prof.initial_frequency, prof.final_frequency
    f0 = 1.0 / math.sqrt(2.0 * w0)
    y0 = [f0, 0.0, 0.0, -w0 * f0, 1.0, 0.0]
    kappa2 = mode_coupling**2
    w0sq = w0 * w0

    def rhs(t, y):
        w = prof.frequency(t)
        b = y[4]
        k = w * w + (kappa2 / b**3 if kappa2 else 0.0)
        return [y[2], y[3], -k * y[0], -k * y[1], y[5], w0sq / (b * b) - w * w * b]

    # integrate ramp by ramp so the step limit only applies while w changes
    y = np.array(y0)
    for start, seg in zip(prof.starts, prof.ramps):
        if seg.duration > 0:
            y = _advance(rhs, y, start, start + seg.duration, seg.duration / 20, rtol, atol)
    # one extra period of free evolution in the final potential
    y = _advance(rhs, y, prof.total, prof.total + 2 * math.pi / w1, np.inf, rtol, atol)
    f = complex(y[0], y[1])
    df = complex(y[2], y[3])
    w_final = math.sqrt(w1 * w1 + (kappa2 / y[4] ** 3 if kappa2 else 0.0))
    alpha, beta = bogoliubov(f, df, w_final)
    norm = abs(alpha) ** 2 - abs(beta) ** 2
    if abs(norm - 1.0) > 1e-6:
        raise NumericalError(f"|alpha|^2 - |beta|^2 = {norm!r}")
    r = math.asinh(abs(beta))
    return SqueezeResult(r, math.sinh(r) ** 2, _squeezed_dist(r, n_max), alpha, beta)


def sudden_squeeze(initial_frequency: float, final_frequency: float) -> float:
    return 0.5 * abs(math.log(final_frequency / initial_frequency))


def squeeze_protocol(low: float = 2 * math.pi * 100e3, high: float = 2 * math.pi * 2e6,
                   rise_time: float = 1e-6, adiabatic_factor: float = 100.0) -> list[RampProfile]:
    """Slow smooth decrease high -> low, then a fast linear return to high."""
    down = RampProfile(high, low, adiabatic_factor / low, "smooth-step")
    up = RampProfile(low, high, rise_time, "linear")
    return [down, up]


def readout_protocol(dist: MotionalDistribution, eta: float, base_rabi: float,
                     variant: str = "second-red", carrier_eta: float = 0.0) -> float:
    """Probability of ending bright after a red-sideband pi pulse and a carrier pi pulse.

    The sideband pulse is calibrated on n = k (k = 2 or 1) and moves
    |down, n> to |up, n-k>.  The carrier pulse then swaps the electronic
    states; ``carrier_eta`` = 0 models the co-propagating carrier beams.
    """
    k = {"second-red": 2, "first-red": 1}.get(variant)
    if k is None:
        raise ValueError(f"unknown readout variant {variant!r}")
    n = np.arange(dist.n_max + 1)
    p = dist.probs
    om_rsb = np.zeros(len(n))
    om_rsb[k:] = raman_rabi(n[k:] - k, n[k:], eta, base_rabi)
    tau_rsb = math.pi / abs(raman_rabi(0, k, eta, base_rabi))
    s = np.sin(0.5 * om_rsb * tau_rsb) ** 2
    om_car = raman_rabi(n, n, carrier_eta, base_rabi)
    tau_car = math.pi / abs(raman_rabi(0, 0, carrier_eta, base_rabi))
    c = np.sin(0.5 * om_car * tau_car) ** 2
    c_shift = np.zeros(len(n))
    c_shift[k:] = c[:-k]
    return float(p @ ((1.0 - s) * (1.0 - c) + s * c_shift))


def write_report_csv(path, result: SqueezeResult) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# r={result.squeeze_parameter!r}\n")
        fh.write(f"# mean_n={result.mean_n!r}\n")
        fh.write("n,P_n\n")
        for n, p in enumerate(result.occupations.probs):
            fh.write(f"{n},{float(p)!r}\n")


def read_report_csv(path) -> tuple[float, float, np.ndarray]:
    scalars = {}
    probs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                key, value = line[1:].strip().split("=", 1)
                scalars[key] = float(value)
            elif line and line != "n,P_n":
                probs.append(float(line.split(",")[1]))
    return scalars["r"], scalars["mean_n"], np.array(probs)
