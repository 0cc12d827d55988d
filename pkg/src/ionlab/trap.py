"""Linear Paul trap: stability parameters, secular motion and axial confinement."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .constants import E_CHARGE, MG25_MASS, TWO_PI


class UnstableAxisError(ValueError):
    """The secular frequency of an axis is imaginary (ion not confined)."""

    def __init__(self, axis: str, magnitude: float):
        super().__init__(f"{axis} axis unstable: frequency is {magnitude:.6g}i rad/s")
        self.axis = axis
        self.magnitude = magnitude


@dataclass(frozen=True)
class TrapConfig:
    """Electrode voltages and geometry.  ``drive`` is angular (2*pi*56 MHz)."""

    dc_voltage: float = -10.0
    rf_voltage: float = 1000.0
    drive: float = TWO_PI * 56e6
    radius: float = 400e-6
    mass: float = MG25_MASS
    axial_voltage: float = 40.0
    axial_width: float = 1.40e-3
    charge: float = E_CHARGE

    def __post_init__(self) -> None:
        for name in ("radius", "mass", "drive", "axial_width"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


def stability_params(config: TrapConfig) -> tuple[float, float]:
    """Mathieu parameters (a, q).  The sign of a follows U0."""
    denom = config.mass * config.drive**2 * config.radius**2
    a = 4.0 * config.charge * config.dc_voltage / denom
    q = 2.0 * config.charge * config.rf_voltage / denom
    return a, q


def secular_frequencies(a: float, q: float, drive: float) -> tuple[float, float]:
    """Radial secular frequencies (omega_x, omega_y) to first order."""
    out = []
    for axis, arg in (("x", 0.5 * q * q + a), ("y", 0.5 * q * q - a)):
        if arg < 0:
            raise UnstableAxisError(axis, 0.5 * drive * math.sqrt(-arg))
        out.append(0.5 * drive * math.sqrt(arg))
    return out[0], out[1]


def radial_trajectory(config: TrapConfig, x0: float, phase: float, t, axis: str = "x"):
    """First-order solution x0*cos(w t + phase)*(1 + q/2 cos(Omega t))."""
    a, q = stability_params(config)
    wx, wy = secular_frequencies(a, q, config.drive)
    w = wx if axis == "x" else wy
    t = np.asarray(t, dtype=float)
    return x0 * np.cos(w * t + phase) * (1.0 + 0.5 * q * np.cos(config.drive * t))


def axial_frequency(axial_voltage: float, axial_width: float, mass: float,
                    charge: float = E_CHARGE) -> float:
    if axial_voltage < 0:
        raise ValueError("axial voltage must be >= 0")
    return math.sqrt(2.0 * charge * axial_voltage / (mass * axial_width**2))


def q_for_secular(secular: float, drive: float, a: float = 0.0) -> float:
    """Invert the secular formula for q at given a (x axis)."""
    arg = (2.0 * secular / drive) ** 2 - a
    if arg < 0:
        raise ValueError("no real q gives this secular frequency")
    return math.sqrt(2.0 * arg)


def radial_splitting(a: float, q: float, drive: float) -> float:
    """Approximate omega_x - omega_y for |a| << q^2."""
    if q == 0:
        raise ZeroDivisionError("splitting approximation needs q != 0")
    if abs(a) > q * q / 10.0:
        warnings.warn("radial splitting approximation used outside a << q^2", RuntimeWarning)
    return drive * a / (math.sqrt(2.0) * q)
