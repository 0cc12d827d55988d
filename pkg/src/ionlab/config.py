"""Flat ``section.key = value`` lab configuration.

Frequencies in the file are ordinary frequencies in Hz (``*_hz``); they
are converted to angular frequencies on load.  Beams are configured as
``beams.<name>.<field>``.  Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .constants import AMU, TWO_PI
from .cooling import CoolingSchedule
from .motion import ZeemanConfig
from .paulvm import DEFAULT_BEAMS, Beam, ChannelMap, PhysicsConfig
from .trap import TrapConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionConfig:
    bright_rate: float = 210e3
    background_rate: float = 210.0
    window: float = 20e-6
    threshold: int = 1
    leak_probability: float = 0.0
    beam: str = "BD"


@dataclass(frozen=True)
class RamanSettings:
    base_rabi: float = TWO_PI * 202e3
    eta: float = 0.3
    resonance_mhz: float = 0.0
    spread: float = TWO_PI * 7e3


@dataclass(frozen=True)
class LabConfig:
    trap: TrapConfig = field(default_factory=TrapConfig)
    beams: ChannelMap = field(default_factory=ChannelMap)
    raman: RamanSettings = field(default_factory=RamanSettings)
    zeeman: ZeemanConfig = field(default_factory=lambda: ZeemanConfig(5.589e-4, TWO_PI * 1788.85e6))
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    cooling: CoolingSchedule = field(default_factory=CoolingSchedule)
    trap_frequency: float = TWO_PI * 2e6
    temperature: float = 1e-3
    seed: int = 0

    def physics(self) -> PhysicsConfig:
        d = self.detection
        return PhysicsConfig(
            base_rabi=self.raman.base_rabi, eta=self.raman.eta,
            trap_frequency=self.trap_frequency, temperature=self.temperature,
            raman_resonance_mhz=self.raman.resonance_mhz,
            bright_rate=d.bright_rate, background_rate=d.background_rate,
            threshold=d.threshold, leak_probability=d.leak_probability,
            detection_beam=d.beam,
        )


# key -> (section attribute, field name, converter to SI)
def _angular(x: float) -> float:
    return TWO_PI * x


_KEYS = {
    "trap.dc_voltage": ("trap", "dc_voltage", float),
    "trap.rf_voltage": ("trap", "rf_voltage", float),
    "trap.drive_hz": ("trap", "drive", _angular),
    "trap.radius": ("trap", "radius", float),
    "trap.mass_amu": ("trap", "mass", lambda x: x * AMU),
    "trap.axial_voltage": ("trap", "axial_voltage", float),
    "trap.axial_width": ("trap", "axial_width", float),
    "raman.base_rabi_hz": ("raman", "base_rabi", _angular),
    "raman.eta": ("raman", "eta", float),
    "raman.resonance_mhz": ("raman", "resonance_mhz", float),
    "raman.spread_hz": ("raman", "spread", _angular),
    "zeeman.field": ("zeeman", "field", float),
    "zeeman.hyperfine_hz": ("zeeman", "hyperfine_splitting", _angular),
    "detection.bright_rate": ("detection", "bright_rate", float),
    "detection.background_rate": ("detection", "background_rate", float),
    "detection.window": ("detection", "window", float),
    "detection.threshold": ("detection", "threshold", int),
    "detection.leak_probability": ("detection", "leak_probability", float),
    "detection.beam": ("detection", "beam", str),
    "cooling.start_n": ("cooling", "start_n", int),
    "cooling.cycles_per_step": ("cooling", "cycles_per_step", int),
    "cooling.repump_success": ("cooling", "repump_success", float),
    "motion.trap_frequency_hz": (None, "trap_frequency", _angular),
    "motion.temperature": (None, "temperature", float),
    "seed": (None, "seed", int),
}
_BEAM_FIELDS = {"ttl": int, "dds": int, "dac": int, "intensity": float, "i_sat": float}
_POSITIVE = {"radius", "mass", "drive", "axial_width", "base_rabi", "bright_rate",
             "window", "trap_frequency", "hyperfine_splitting"}


def _convert(conv, text: str, key: str, lineno: int):
    try:
        if conv is int:
            return int(text, 0)
        if conv is str:
            return text
        value = conv(float(text))
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {text!r} for {key}") from None
    if not math.isfinite(value):
        raise ConfigError(f"line {lineno}: {key} must be finite")
    return value


def parse_config(text: str) -> LabConfig:
    sections: dict = {"trap": {}, "raman": {}, "zeeman": {}, "detection": {}, "cooling": {}}
    top: dict = {}
    beams = {b.name: dict(vars(b)) for b in DEFAULT_BEAMS}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith("beams."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in _BEAM_FIELDS:
                raise ConfigError(f"line {lineno}: unknown beam key {key!r}")
            name, fld = parts[1], parts[2]
            beam = beams.setdefault(name, {"name": name, "ttl": None, "dds": None, "dac": None,
                                           "intensity": 1.0, "i_sat": None})
            if value.lower() == "none" and fld in ("dds", "dac", "i_sat"):
                beam[fld] = None
            else:
                beam[fld] = _convert(_BEAM_FIELDS[fld], value, key, lineno)
            continue
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        section, name, conv = _KEYS[key]
        v = _convert(conv, value, key, lineno)
        if name in _POSITIVE and not v > 0:
            raise ConfigError(f"line {lineno}: {key} must be > 0")
        (sections[section] if section else top)[name] = v

    base = LabConfig()
    try:
        beam_list = []
        for b in beams.values():
            if b["ttl"] is None:
                raise ConfigError(f"beam {b['name']!r} has no ttl")
            beam_list.append(Beam(**b))
        cfg = replace(
            base,
            trap=replace(base.trap, **sections["trap"]),
            beams=ChannelMap(tuple(beam_list)),
            raman=replace(base.raman, **sections["raman"]),
            zeeman=replace(base.zeeman, **sections["zeeman"]),
            detection=replace(base.detection, **sections["detection"]),
            cooling=replace(base.cooling, **sections["cooling"]),
            **top,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        cfg.beams[cfg.detection.beam]
    except KeyError:
        raise ConfigError(f"detection beam {cfg.detection.beam!r} is not a configured beam") from None
    return cfg


def load_config(path) -> LabConfig:
    with open(path) as fh:
        return parse_config(fh.read())
