"""Excess micromotion: modulated Bloch dynamics, Bessel sidebands,
photon-RF correlation histograms and compensation of stray fields."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .bloch import DensityMatrix, TwoLevelParams, _integrate, default_step, BlochTrajectory

DEFAULT_TAC_CUTOFF = 7e-9
DEFAULT_BINS = 64


@dataclass(frozen=True)
class MicromotionParams:
    modulation_index: float
    phase: float = 0.0
    dc_offset: float | None = None
    rf_phase_diff: float | None = None
    geometry_factor: float | None = None
    wavenumber: float | None = None

    def __post_init__(self) -> None:
        if not self.modulation_index >= 0:
            raise ValueError("modulation index must be >= 0")


def modulation_params(k: float, q: float, x_dc: float, radius: float,
                      alpha: float, phi_rf: float) -> tuple[float, float]:
    """Modulation index and phase from a DC offset and an RF phase mismatch."""
    if q < 0:
        raise ValueError("q must be >= 0")
    offset_term = 0.5 * k * q * x_dc
    phase_term = 0.25 * k * q * radius * alpha * phi_rf
    beta = math.hypot(offset_term, phase_term)
    delta = math.atan2(-radius * alpha * phi_rf, 2.0 * x_dc)
    return beta, delta


def evolve_modulated_bloch(
    params: TwoLevelParams,
    mm: MicromotionParams,
    drive: float,
    duration: float,
    step: float | None = None,
    initial: DensityMatrix | None = None,
) -> BlochTrajectory:
    """Bloch equations with the laser phase modulated by the RF drive.

    The phase seen by the ion is Delta*t + beta*cos(Omega_RF*t + delta);
    with beta = 0 this is the same integration as ``evolve_bloch``.
    """
    if step is None:
        step = default_step(params)
        if mm.modulation_index > 0:
            step = min(step, _rf_period(drive) / 200.0)
    initial = DensityMatrix.ground() if initial is None else initial
    det, beta, delta = params.detuning, mm.modulation_index, mm.phase
    if beta == 0:
        phase = lambda t: det * t  # noqa: E731
    else:
        phase = lambda t: det * t + beta * math.cos(drive * t + delta)  # noqa: E731
    return _integrate(params.rabi, params.linewidth, phase, initial, duration, step)


def _rf_period(drive: float) -> float:
    return 2.0 * math.pi / drive


def bessel_order(beta: float, tol: float = 1e-12) -> int:
    """Smallest N beyond which every J_n(beta)^2 stays below ``tol``."""
    n = int(math.ceil(beta))
    while special.jv(n, beta) ** 2 >= tol or special.jv(n + 1, beta) ** 2 >= tol:
        n += 1
    return n


def mean_sideband_spectrum(
    params: TwoLevelParams,
    beta: float,
    drive: float,
    detunings,
    normalization: str = "printed",
    order: int | None = None,
) -> np.ndarray:
    """Time-averaged upper population as a sum of Bessel-weighted Lorentzians.

    ``normalization="printed"`` uses the bare Omega^2 prefactor;
    ``"weak_field"`` divides by 4 so that beta = 0 equals the weak-drive
    limit of the steady-state population.
    """
    if not params.linewidth > 0:
        raise ValueError("linewidth must be > 0")
    if normalization not in ("printed", "weak_field"):
        raise ValueError(f"unknown normalization {normalization!r}")
    n_max = bessel_order(beta) if order is None else order
    det = np.atleast_1d(np.asarray(detunings, dtype=float))
    orders = np.arange(-n_max, n_max + 1)
    weights = special.jv(orders, beta) ** 2
    lor = 1.0 / ((det[:, None] + orders[None, :] * drive) ** 2 + 0.25 * params.linewidth**2)
    out = params.rabi**2 * (lor @ weights)
    if normalization == "weak_field":
        out *= 0.25
    return out


def time_averaged_population(params: TwoLevelParams, mm: MicromotionParams, drive: float,
                             settle: float | None = None, periods: int = 1,
                             samples_per_period: int = 400) -> float:
    """Average rho_bb over whole RF periods after transients have decayed."""
    period = _rf_period(drive)
    if settle is None:
        settle = 20.0 / params.linewidth
    settle = math.ceil(settle / period) * period
    step = period / samples_per_period
    traj = evolve_modulated_bloch(params, mm, drive, settle + periods * period, step)
    start = int(round(settle / step))
    # rectangle rule is spectrally accurate for a periodic integrand
    return float(np.mean(traj.pop_upper[start:start + periods * samples_per_period]))


def steady_trace(params: TwoLevelParams, mm: MicromotionParams, drive: float,
                 samples: int = 400, settle: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One RF period of the settled rho_bb(t), time measured from a rising zero crossing."""
    period = _rf_period(drive)
    if settle is None:
        settle = 20.0 / params.linewidth
    settle = math.ceil(settle / period) * period
    step = period / samples
    traj = evolve_modulated_bloch(params, mm, drive, settle + period, step)
    start = int(round(settle / step))
    values = traj.pop_upper[start:start + samples]
    # rising zero crossing of sin(Omega t) is at Omega t = 0 mod 2 pi
    return np.arange(samples) * step, values


@dataclass
class CorrelationHistogram:
    bins: np.ndarray
    bin_width: float
    total: int
    tac_cutoff: float

    @property
    def period(self) -> float:
        return self.bin_width * len(self.bins)

    @property
    def cutoff_bin(self) -> int:
        return min(int(self.tac_cutoff // self.bin_width), len(self.bins) - 1)

    def bin_starts(self) -> np.ndarray:
        return np.arange(len(self.bins)) * self.bin_width

    def flatness_pvalue(self) -> float:
        """Chi-square p-value for a flat histogram above the cutoff bin."""
        usable = self.bins[self.cutoff_bin + 1:].astype(float)
        if usable.sum() == 0 or len(usable) < 2:
            return 1.0
        return float(stats.chisquare(usable).pvalue)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_start_ns", "count"])
            for start, count in zip(self.bin_starts(), self.bins):
                w.writerow([f"{start * 1e9:.6f}", int(count)])

    @classmethod
    def from_csv(cls, path, tac_cutoff: float = DEFAULT_TAC_CUTOFF) -> "CorrelationHistogram":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        starts = np.array([float(r["bin_start_ns"]) for r in rows]) * 1e-9
        counts = np.array([int(r["count"]) for r in rows])
        width = starts[1] - starts[0] if len(starts) > 1 else 0.0
        return cls(counts, width, int(counts.sum()), tac_cutoff)


def synthesize_correlation_histogram(
    times: np.ndarray,
    trace: np.ndarray,
    photons: int,
    rng_seed: int | None = None,
    tac_cutoff: float = DEFAULT_TAC_CUTOFF,
    period: float | None = None,
    num_bins: int = DEFAULT_BINS,
) -> CorrelationHistogram:
    """Monte-Carlo photon-to-next-RF-edge timespan histogram.

    Emission times within one period are drawn proportionally to ``trace``.
    The measured span is the time until the next rising RF edge.  Spans
    shorter than the TAC cutoff are lost, except those within one bin of
    the cutoff, which pile into the cutoff bin.
    """
    if photons <= 0:
        raise ValueError("photons must be > 0")
    times = np.asarray(times, dtype=float)
    trace = np.clip(np.asarray(trace, dtype=float), 0.0, None)
    if period is None:
        period = times[1] - times[0] + times[-1] if len(times) > 1 else 1.0
    dt = period / len(times)
    if trace.sum() <= 0:
        raise ValueError("trace has no emission probability")
    rng = np.random.default_rng(rng_seed)
    cell = rng.choice(len(times), size=photons, p=trace / trace.sum())
    emit = (cell + rng.random(photons)) * dt
    span = period - emit
    width = period / num_bins
    cutoff_bin = min(int(tac_cutoff // width), num_bins - 1)
    idx = np.minimum((span // width).astype(int), num_bins - 1)
    keep = span >= tac_cutoff
    pile = (span < tac_cutoff) & (span >= tac_cutoff - width)
    idx = np.where(pile, cutoff_bin, idx)
    counts = np.bincount(idx[keep | pile], minlength=num_bins)
    return CorrelationHistogram(counts, width, photons, tac_cutoff)


@dataclass(frozen=True)
class LinearFieldModel:
    """Ion displacement is linear in the compensation knobs.

    ``external_offset`` (m) is the stray-field displacement, ``response``
    (m per knob unit, dims x knobs) maps knob settings to displacement and
    ``beams`` holds unit wave vectors (one per row).
    """

    external_offset: np.ndarray
    response: np.ndarray
    beams: np.ndarray
    beta_per_metre: float

    def betas(self, settings) -> np.ndarray:
        d = np.asarray(self.external_offset) + np.asarray(self.response) @ np.asarray(settings, float)
        return np.abs(np.atleast_2d(self.beams) @ d) * self.beta_per_metre

    def nulling_settings(self) -> np.ndarray:
        return -np.linalg.lstsq(np.asarray(self.response), np.asarray(self.external_offset), rcond=None)[0]

    @classmethod
    def radial(cls, external_offset=(0.0, 0.0), beams=((1.0, 0.0), (0.0, 1.0)),
               k: float = 2 * math.pi / 280e-9, q: float = 0.389,
               response=((1.0e-7, 0.4e-7), (-1.0e-7, 0.6e-7))) -> "LinearFieldModel":
        """Two radial dimensions driven by (differential, compensation) voltages."""
        beams = np.atleast_2d(np.asarray(beams, float))
        beams = beams / np.linalg.norm(beams, axis=1, keepdims=True)
        return cls(np.asarray(external_offset, float), np.asarray(response, float),
                   beams, 0.5 * k * q)


@dataclass
class CompensationResult:
    settings: np.ndarray
    residual: float
    underdetermined: bool
    family: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))


def compensation_search(objective, n_knobs: int, start=None, scale: float = 1.0,
                        rank_tol: float = 1e-9) -> CompensationResult:
    """Minimise the summed squared modulation index over the knob settings.

    ``objective(settings)`` returns beta per beam direction.  The squared
    sum is quadratic for a linear field model, so one Newton step from
    central differences lands on the optimum.  A rank-deficient Hessian
    means the beams cannot pin every knob; the free directions are
    returned in ``family``.
    """
    x0 = np.zeros(n_knobs) if start is None else np.asarray(start, float)

    def f(x):
        return float(np.sum(np.asarray(objective(x)) ** 2))

    h = scale
    eye = np.eye(n_knobs) * h
    f0 = f(x0)
    grad = np.array([(f(x0 + e) - f(x0 - e)) / (2 * h) for e in eye])
    hess = np.empty((n_knobs, n_knobs))
    for i in range(n_knobs):
        for j in range(i, n_knobs):
            if i == j:
                val = (f(x0 + eye[i]) - 2 * f0 + f(x0 - eye[i])) / h**2
            else:
                val = (f(x0 + eye[i] + eye[j]) - f(x0 + eye[i] - eye[j])
                       - f(x0 - eye[i] + eye[j]) + f(x0 - eye[i] - eye[j])) / (4 * h * h)
            hess[i, j] = hess[j, i] = val
    u, s, vt = np.linalg.svd(hess)
    keep = s > rank_tol * max(s.max(), 1e-300)
    inv = (vt[keep].T / s[keep]) @ u[:, keep].T
    x = x0 - inv @ grad
    family = vt[~keep]
    residual = float(np.max(np.asarray(objective(x)))) if n_knobs else 0.0
    return CompensationResult(x, residual, bool((~keep).any()), family)
