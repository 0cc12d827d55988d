"""Qubit-motion coupling for stimulated Raman transitions.

Fock-state resolved Rabi frequencies, thermal and point distributions,
flopping curves, frequency scans, sideband thermometry and the Zeeman
structure used for shelving.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .constants import HBAR, K_B, MU_B

COPROPAGATING = "co-propagating"
ORTHOGONAL = "orthogonal"


class SingularSystemError(ValueError):
    """The linear system for the field inversion has no unique solution."""


@dataclass(frozen=True)
class MotionalDistribution:
    """Occupation probabilities p_n for n = 0..n_max."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("probs must be a non-empty vector")
        if (p < -1e-12).any():
            raise ValueError("probabilities must be >= 0")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", np.clip(p, 0.0, None))

    @property
    def n_max(self) -> int:
        return len(self.probs) - 1

    @property
    def mean_n(self) -> float:
        return float(np.arange(len(self.probs)) @ self.probs)

    @classmethod
    def point(cls, n: int, n_max: int | None = None) -> "MotionalDistribution":
        n_max = max(n, 1) if n_max is None else n_max
        p = np.zeros(n_max + 1)
        p[n] = 1.0
        return cls(p)

    @classmethod
    def normalized(cls, weights) -> "MotionalDistribution":
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum())

    def padded(self, n_max: int) -> "MotionalDistribution":
        if n_max <= self.n_max:
            return self
        return MotionalDistribution(np.concatenate([self.probs, np.zeros(n_max - self.n_max)]))


@dataclass(frozen=True)
class RamanConfig:
    """Raman beam pair.  In the co-propagating geometry eta is ignored."""

    base_rabi: float
    lamb_dicke: float = 0.0
    raman_detuning: float = 0.0
    geometry: str = ORTHOGONAL
    leg_rabis: tuple[float, float] | None = None
    intensities: tuple[float, float] | None = None
    effective_wavenumber: float | None = None

    def __post_init__(self) -> None:
        if self.lamb_dicke < 0:
            raise ValueError("Lamb-Dicke parameter must be >= 0")
        if self.geometry not in (COPROPAGATING, ORTHOGONAL):
            raise ValueError(f"unknown geometry {self.geometry!r}")

    @property
    def eta(self) -> float:
        return 0.0 if self.geometry == COPROPAGATING else self.lamb_dicke


@dataclass(frozen=True)
class ZeemanConfig:
    field: float
    hyperfine_splitting: float
    lande_lower: float = 1.0 / 3.0
    lande_upper: float = -1.0 / 3.0

    def __post_init__(self) -> None:
        if self.field < 0:
            raise ValueError("field must be >= 0")


def lamb_dicke(k_eff: float, mass: float, trap_frequency: float) -> float:
    if not trap_frequency > 0:
        raise ValueError("trap frequency must be > 0")
    return k_eff * math.sqrt(HBAR / (2.0 * mass * trap_frequency))


def raman_rabi_copropagating(leg_rabis: tuple[float, float], raman_detuning: float) -> float:
    if raman_detuning == 0:
        raise ZeroDivisionError("Raman detuning must be non-zero")
    down, up = leg_rabis
    return 2.0 * down * up / raman_detuning


def raman_rabi_from_intensities(i_down: float, i_up: float, raman_detuning: float,
                                coupling: float = 1.0) -> float:
    """Omega_R = coupling*sqrt(I_down*I_up)/Delta_R (proportionality form)."""
    if raman_detuning == 0:
        raise ZeroDivisionError("Raman detuning must be non-zero")
    return coupling * math.sqrt(i_down * i_up) / raman_detuning


def ac_stark_shift(leg_rabi: float, raman_detuning: float) -> float:
    """Light shift Omega_i^2/Delta_R of one Raman leg (angular frequency)."""
    return leg_rabi**2 / raman_detuning


def raman_rabi(n, n_prime, eta: float, base_rabi: float):
    """Rabi frequency of |n> <-> |n'> with the full Laguerre dependence.

    Vectorised over n and n_prime.  Can be negative past Laguerre nodes;
    flopping uses the square.
    """
    n = np.asarray(n)
    n_prime = np.asarray(n_prime)
    if (n < 0).any() or (n_prime < 0).any():
        raise ValueError("Fock numbers must be >= 0")
    lo = np.minimum(n, n_prime)
    hi = np.maximum(n, n_prime)
    dn = hi - lo
    x = eta * eta
    ratio = np.exp(0.5 * (special.gammaln(lo + 1) - special.gammaln(hi + 1)))
    if eta == 0:
        eta_pow = np.where(dn == 0, 1.0, 0.0)
    else:
        eta_pow = eta**dn
    lag = special.eval_genlaguerre(lo, dn, x)
    out = base_rabi * math.exp(-0.5 * x) * ratio * eta_pow * lag
    return out if out.ndim else float(out)


def thermal_mean_n(temperature: float, trap_frequency: float) -> float:
    if not temperature > 0 or not trap_frequency > 0:
        raise ValueError("temperature and trap frequency must be > 0")
    return 1.0 / math.expm1(HBAR * trap_frequency / (K_B * temperature))


def thermal_distribution(temperature: float, trap_frequency: float,
                         n_max: int | None = None) -> MotionalDistribution:
    """Truncated, renormalised Boltzmann distribution over Fock states."""
    if temperature == 0:
        return MotionalDistribution.point(0, n_max or 50)
    nbar = thermal_mean_n(temperature, trap_frequency)
    if n_max is None:
        n_max = max(50, int(math.ceil(10 * nbar)))
    x = HBAR * trap_frequency / (K_B * temperature)
    w = np.exp(-x * np.arange(n_max + 1))
    return MotionalDistribution(w / w.sum())


def thermal_from_mean(mean_n: float, n_max: int | None = None) -> MotionalDistribution:
    if mean_n < 0:
        raise ValueError("mean_n must be >= 0")
    if mean_n == 0:
        return MotionalDistribution.point(0, 50 if n_max is None else n_max)
    ratio = mean_n / (1.0 + mean_n)
    if n_max is None:
        # geometric tail below 1e-12
        n_max = max(50, int(math.ceil(math.log(1e-12) / math.log(ratio))))
    w = ratio ** np.arange(n_max + 1)
    return MotionalDistribution(w / w.sum())


def _transition(dist: MotionalDistribution, order: int):
    """Lower levels that have a partner for the given order and their targets."""
    n = np.arange(dist.n_max + 1)
    target = n + order
    ok = target >= 0
    return n[ok], target[ok], dist.probs[ok]


def _spread_nodes(spread: float, points: int = 32):
    if spread == 0:
        return np.array([0.0]), np.array([1.0])
    x, w = np.polynomial.legendre.leggauss(points)
    return x * spread, 0.5 * w


def flopping_curve(dist: MotionalDistribution, config: RamanConfig, order: int,
                   detuning: float, times, spread: float = 0.0) -> np.ndarray:
    """P_down(t) after a Raman pulse of length t on the given sideband order.

    Levels without a partner (n < |order| on red sidebands) stay in |down>.
    ``spread`` averages the base Rabi frequency uniformly over +-spread.
    """
    if order not in (-2, -1, 0, 1, 2):
        raise ValueError("order must be in {-2, ..., 2}")
    t = np.atleast_1d(np.asarray(times, dtype=float))
    n, target, p = _transition(dist, order)
    offsets, weights = _spread_nodes(spread)
    excited = np.zeros_like(t)
    for off, wt in zip(offsets, weights):
        om = raman_rabi(n, target, config.eta, config.base_rabi + off)
        om_eff = np.sqrt(om**2 + detuning**2)
        amp = np.divide(om**2, om_eff**2, out=np.zeros_like(om_eff), where=om_eff > 0)
        excited += wt * (np.sin(0.5 * np.outer(t, om_eff)) ** 2 @ (p * amp))
    return 1.0 - excited


def frequency_scan(dist: MotionalDistribution, config: RamanConfig, pulse_duration: float,
                   detunings, axial: float, orders=(-2, -1, 0, 1, 2)) -> np.ndarray:
    """P_down versus Raman detuning from the carrier (angular, rad/s).

    Sideband order k is resonant at detuning k*axial.  Contributions of
    different orders add incoherently; the result is clipped at zero.
    """
    if not pulse_duration > 0:
        raise ValueError("pulse duration must be > 0")
    det = np.atleast_1d(np.asarray(detunings, dtype=float))
    excited = np.zeros_like(det)
    for order in orders:
        n, target, p = _transition(dist, order)
        om = raman_rabi(n, target, config.eta, config.base_rabi)
        delta = det[:, None] - order * axial
        om_eff2 = om[None, :] ** 2 + delta**2
        amp = np.divide(om[None, :] ** 2, om_eff2, out=np.zeros_like(om_eff2), where=om_eff2 > 0)
        excited += (amp * np.sin(0.5 * np.sqrt(om_eff2) * pulse_duration) ** 2) @ p
    return np.clip(1.0 - excited, 0.0, 1.0)


def mean_n_from_sidebands(red_depth: float, blue_depth: float) -> float:
    """Mean phonon number from the red/blue sideband depth ratio."""
    if not 0 <= red_depth < blue_depth:
        raise ValueError("need 0 <= red depth < blue depth")
    r = red_depth / blue_depth
    return r / (1.0 - r)


def dephased_envelope(base_rabi: float, spread: float, time):
    """Flopping averaged over a uniform Rabi-frequency spread of +-spread."""
    if spread < 0:
        raise ValueError("spread must be >= 0")
    t = np.asarray(time, dtype=float)
    # numpy sinc is sin(pi x)/(pi x)
    return 0.5 * (1.0 + np.sinc(spread * t / np.pi) * np.cos(base_rabi * t))


def zeeman_shift(lande: float, m_f: float, field: float) -> float:
    """Angular frequency shift g_F*m_F*mu_B*B/hbar."""
    return lande * m_f * MU_B * field / HBAR


def shelving_frequencies(config: ZeemanConfig, index: int) -> float:
    """Frequency of the i-th shelving pulse, i in 1..4."""
    if index not in (1, 2, 3, 4):
        raise ValueError("shelving index must be 1..4")
    return config.hyperfine_splitting + (2 * index - 5) / 3.0 * MU_B * config.field / HBAR


def solve_field(omega_1: float, omega_2: float, indices=(1, 2)) -> tuple[float, float]:
    """Invert two measured shelving frequencies for (B, omega_0)."""
    i, j = indices
    mat = np.array([[1.0, (2 * i - 5) / 3.0 * MU_B / HBAR],
                    [1.0, (2 * j - 5) / 3.0 * MU_B / HBAR]])
    if i == j or not omega_2 > omega_1:
        raise SingularSystemError("need two distinct frequencies with omega_2 > omega_1")
    try:
        omega_0, field = np.linalg.solve(mat, [omega_1, omega_2])
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    return float(field), float(omega_0)


def write_scan_csv(path, kind: str, x, p_down) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# scan={kind}\n")
        w = csv.writer(fh)
        w.writerow(["x", "P_down"])
        for xi, pi in zip(x, p_down):
            w.writerow([repr(float(xi)), repr(float(pi))])


def read_scan_csv(path) -> tuple[str, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        kind = fh.readline().strip().split("=", 1)[1]
        rows = list(csv.DictReader(fh))
    return kind, np.array([float(r["x"]) for r in rows]), np.array([float(r["P_down"]) for r in rows])
