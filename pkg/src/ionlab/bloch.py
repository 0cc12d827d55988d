"""Two-level optical physics: optical Bloch equations and saturation.

All frequencies are angular (rad/s).  The equations carry the laser phase
explicitly as ``exp(+-i*phase(t))`` factors, so that a time-dependent
phase (micromotion) drops in by replacing the phase function.  Because the
detuning already enters through phase(t) = Delta*t, the coherence only
decays at Gamma/2; adding a further i*Delta*rho_ab term would count the
detuning twice.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .constants import C, HBAR


class InvalidInputError(ValueError):
    """Raised for non-finite or out-of-range physical parameters."""


class SteadyStateUndefinedError(ValueError):
    """Raised when a steady state is requested for an undamped system."""


def _check_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise InvalidInputError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class TwoLevelParams:
    rabi: float
    detuning: float
    linewidth: float

    def __post_init__(self) -> None:
        _check_finite(rabi=self.rabi, detuning=self.detuning, linewidth=self.linewidth)
        if self.linewidth < 0:
            raise InvalidInputError("linewidth must be >= 0")


@dataclass(frozen=True)
class DensityMatrix:
    pop_lower: float
    pop_upper: float
    coherence: complex

    @classmethod
    def ground(cls) -> "DensityMatrix":
        return cls(1.0, 0.0, 0j)

    def validate(self, tol: float = 1e-9) -> None:
        if abs(self.pop_lower + self.pop_upper - 1.0) > tol:
            raise InvalidInputError("populations must sum to one")
        if not -tol <= self.pop_upper <= 1.0 + tol:
            raise InvalidInputError("upper population outside [0, 1]")
        if abs(self.coherence) ** 2 > self.pop_lower * self.pop_upper + tol:
            raise InvalidInputError("coherence violates positivity")


@dataclass(frozen=True)
class BlochTrajectory:
    """Sampled solution; ``pop_lower`` is always ``1 - pop_upper``."""

    times: np.ndarray
    pop_upper: np.ndarray
    coherence: np.ndarray

    @property
    def pop_lower(self) -> np.ndarray:
        return 1.0 - self.pop_upper

    def __len__(self) -> int:
        return len(self.times)

    def state(self, index: int) -> DensityMatrix:
        bb = float(self.pop_upper[index])
        return DensityMatrix(1.0 - bb, bb, complex(self.coherence[index]))


def default_step(params: TwoLevelParams) -> float:
    """min(1/(50*Omega_eff), 1/(50*Gamma)), ignoring zero rates."""
    rates = [math.hypot(params.rabi, params.detuning), params.linewidth]
    rates = [r for r in rates if r > 0]
    if not rates:
        raise InvalidInputError("cannot choose a step: all rates are zero")
    return 1.0 / (50.0 * max(rates))


def _integrate(
    rabi: float,
    linewidth: float,
    phase: Callable[[float], float],
    initial: DensityMatrix,
    duration: float,
    step: float,
) -> BlochTrajectory:
    if duration < 0 or not step > 0:
        raise InvalidInputError("need duration >= 0 and step > 0")
    _check_finite(duration=duration, step=step)
    initial.validate()

    half_rabi = 0.5 * rabi
    decay_ab = -0.5 * linewidth

    def rhs(t: float, bb: float, ab: complex) -> tuple[float, complex]:
        rot = cmath.exp(1j * phase(t))
        dbb = rabi * (ab * rot).imag - linewidth * bb
        dab = 1j * half_rabi * rot.conjugate() * (1.0 - 2.0 * bb) + decay_ab * ab
        return dbb, dab

    n_steps = max(0, math.ceil(duration / step - 1e-9))
    times = np.arange(n_steps + 1) * step
    bbs = np.empty(n_steps + 1)
    abs_ = np.empty(n_steps + 1, dtype=complex)
    bb, ab = initial.pop_upper, initial.coherence
    bbs[0], abs_[0] = bb, ab
    h = step
    for k in range(n_steps):
        t = k * h
        k1b, k1a = rhs(t, bb, ab)
        k2b, k2a = rhs(t + 0.5 * h, bb + 0.5 * h * k1b, ab + 0.5 * h * k1a)
        k3b, k3a = rhs(t + 0.5 * h, bb + 0.5 * h * k2b, ab + 0.5 * h * k2a)
        k4b, k4a = rhs(t + h, bb + h * k3b, ab + h * k3a)
        bb += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        ab += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        bbs[k + 1], abs_[k + 1] = bb, ab
    return BlochTrajectory(times, bbs, abs_)


def evolve_bloch(
    params: TwoLevelParams,
    initial: DensityMatrix | None = None,
    duration: float = 0.0,
    step: float | None = None,
) -> BlochTrajectory:
    """Integrate the optical Bloch equations with fixed-step RK4.

    Samples are returned at every multiple of ``step`` from 0 up to the
    first multiple that reaches ``duration``.
    """
    initial = DensityMatrix.ground() if initial is None else initial
    step = default_step(params) if step is None else step
    detuning = params.detuning
    return _integrate(
        params.rabi,
        params.linewidth,
        lambda t: detuning * t,
        initial,
        duration,
        step,
    )


def steady_state_population(params: TwoLevelParams) -> float:
    """Upper-state population after the Rabi oscillations have damped out."""
    if params.linewidth == 0:
        raise SteadyStateUndefinedError("steady state needs linewidth > 0")
    om2 = params.rabi**2
    return 0.25 * om2 / (params.detuning**2 + 0.25 * params.linewidth**2 + 0.5 * om2)


def scattering_rate(params: TwoLevelParams) -> float:
    """Photons scattered per second, rho_bb * Gamma."""
    return steady_state_population(params) * params.linewidth


def effective_linewidth(rabi: float, linewidth: float) -> float:
    """Power-broadened FWHM of the steady-state line, sqrt(Gamma^2 + 2 Omega^2)."""
    return math.sqrt(linewidth**2 + 2.0 * rabi**2)


def saturation_intensity(linewidth: float, transition_frequency: float) -> float:
    """I_sat in W/m^2 from the linewidth and the angular transition frequency."""
    return HBAR * linewidth * transition_frequency**3 / (12.0 * math.pi * C**2)


def rabi_from_intensity(intensity: float, i_sat: float, linewidth: float) -> float:
    """Rabi frequency for a given intensity; Omega^2 = Gamma^2/2 at I = I_sat."""
    if intensity < 0 or not i_sat > 0:
        raise InvalidInputError("need intensity >= 0 and i_sat > 0")
    return linewidth * math.sqrt(intensity / (2.0 * i_sat))


def effective_rabi(rabi: float, detuning: float) -> tuple[float, float]:
    """Return (Omega_eff, peak-to-peak amplitude Omega^2/Omega_eff^2)."""
    omega_eff = math.hypot(rabi, detuning)
    if omega_eff == 0:
        raise InvalidInputError("amplitude undefined for rabi = detuning = 0")
    return omega_eff, rabi**2 / omega_eff**2


@dataclass(frozen=True)
class AttenuationModel:
    """Two-level absorber in steady state.

    ``number_density_factor`` lumps hbar*omega*B*N/(c*V) into one prefactor
    (units of 1/length).
    """

    einstein_a: float
    einstein_b: float
    number_density_factor: float
    intensities: Sequence[float] = ()

    def __post_init__(self) -> None:
        values = (self.einstein_a, self.einstein_b, self.number_density_factor)
        if any(v < 0 for v in values) or any(i < 0 for i in self.intensities):
            raise InvalidInputError("attenuation coefficients must be >= 0")

    @property
    def total_intensity(self) -> float:
        return float(sum(self.intensities))


def relative_attenuation(model: AttenuationModel, total_intensity: float) -> float:
    """(dI_i/dz)/I_i, identical for every source sharing the medium."""
    if total_intensity < 0:
        raise InvalidInputError("total intensity must be >= 0")
    stim = 2.0 * model.einstein_b * total_intensity
    denom = C * model.einstein_a + stim
    saturated = stim / denom if denom > 0 else 1.0
    return -model.number_density_factor * (1.0 - saturated)


def attenuation_gradients(model: AttenuationModel) -> np.ndarray:
    """dI_i/dz for every source in ``model.intensities``."""
    rate = relative_attenuation(model, model.total_intensity)
    return rate * np.asarray(model.intensities, dtype=float)
