"""Scenario configuration: a sectioned INI file with a fixed schema.

Every key has a default; unknown sections or keys are rejected. Values may
carry a unit suffix (``20ns``, ``25MHz``, ``4ms``) and phases may be written
as multiples of pi (``0.8pi``). Optional values use ``auto``.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable

from ..adversary import STRATEGIES, EveConfig, Mode, ReferencePolicy
from ..errors import ValidationError
from ..feedback import BiasState, DriftModel, FeedbackConfig
from ..keymath import SecurityParams
from ..photonics import DetectorParams, InterferometerParams
from ..protocol import Link, PacketConfig
from ..spacetime import ChannelGeometry
from ..streams import MAX_SEED

_UNITS = {
    "": 1.0,
    "s": 1.0,
    "ms": 1e-3,
    "us": 1e-6,
    "ns": 1e-9,
    "ps": 1e-12,
    "hz": 1.0,
    "khz": 1e3,
    "mhz": 1e6,
    "ghz": 1e9,
    "m": 1.0,
    "km": 1e3,
    "rad": 1.0,
    "pi": math.pi,
}
_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf|nan)?\s*([a-zA-Z]*)\s*$")


def parse_quantity(text: str) -> float:
    """Parse ``"20ns"``, ``"0.8pi"``, ``"pi"``, ``"1e-3"`` into SI floats."""
    m = _NUMBER.match(str(text))
    if not m or (m.group(1) is None and m.group(2).lower() != "pi"):
        raise ValueError(f"not a number: {text!r}")
    unit = m.group(2).lower()
    if unit not in _UNITS:
        raise ValueError(f"unknown unit {m.group(2)!r} in {text!r}")
    value = float(m.group(1)) if m.group(1) is not None else 1.0
    return value * _UNITS[unit]


def _int(text: str) -> int:
    value = parse_quantity(text)
    if not value.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def inner(text: str):
        return None if text.strip().lower() == "auto" else parse(text)

    return inner


def _pair(text: str) -> tuple[float, float]:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if len(parts) != 2:
        raise ValueError(f"expected two values: {text!r}")
    return (parse_quantity(parts[0]), parse_quantity(parts[1]))


def _str(text: str) -> str:
    return text.strip()


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], bool] = lambda v: True
    doc: str = ""


def _pos(v):
    return v is not None and v > 0


def _nonneg(v):
    return v >= 0


def _unit(v):
    return 0 <= v <= 1


SCHEMA: dict[str, dict[str, Key]] = {
    "run": {
        "seed": Key(_int, 20170419, lambda v: 0 <= v <= MAX_SEED, "root seed, 64-bit unsigned"),
        "packets": Key(_int, 256, _nonneg, "packets to simulate"),
        "output_path": Key(_str, "", doc="per-packet CSV path; empty for none"),
    },
    "packet": {
        "packet_bits": Key(_int, 65536, _nonneg, "slots per packet"),
        "symbol_rate": Key(parse_quantity, 25e6, _pos, "slot rate (Hz)"),
        "symbol_duration": Key(parse_quantity, 10e-9, _pos, "gate / pulse duration (s)"),
        "pulse_separation": Key(parse_quantity, 20e-9, _pos, "reference to data delay dT (s)"),
        "cycle_duration": Key(parse_quantity, 16e-3, _pos, "feedback + QKD cycle (s)"),
        "calibration_windows": Key(_pair, (4e-3, 4e-3), lambda v: min(v) >= 0, "two probe windows (s)"),
        "exchange_packet_rate": Key(parse_quantity, 2.0, _nonneg, "packets per second handed to users"),
    },
    "security": {
        "mu": Key(parse_quantity, 0.116, lambda v: math.isfinite(v) and v >= 0, "mean photons per pulse"),
        "phi": Key(parse_quantity, 0.8 * math.pi, lambda v: 0 < v <= math.pi, "phase modulation depth (rad)"),
    },
    "geometry": {
        "length": Key(parse_quantity, 180.0, _pos, "Alice to Bob distance (m)"),
        "refractive_index": Key(parse_quantity, 1.0002804, lambda v: v >= 1, "channel group index"),
        "admission_tolerance": Key(parse_quantity, 1e-9, _nonneg, "Bob's arrival slack (s)"),
        "line_transmittance": Key(parse_quantity, 10 ** -1.3, lambda v: 0 < v <= 1, "channel transmittance"),
    },
    "detector": {
        "efficiency": Key(parse_quantity, 0.35, _unit, "quantum efficiency"),
        "dark_rate": Key(parse_quantity, 700.0, _nonneg, "dark counts (Hz)"),
        "gate_duration": Key(parse_quantity, 10e-9, _pos, "gate (s)"),
    },
    "interferometer": {
        "visibility": Key(parse_quantity, 1.0, _unit, "fringe visibility"),
        "bias_phase": Key(parse_quantity, 0.0, math.isfinite, "static misalignment (rad)"),
        "system_transmittance": Key(
            parse_quantity, 1.5e-3 / 0.35, lambda v: 0 < v <= 1, "end-to-end optics before the detector"
        ),
    },
    "eve": {
        "strategy": Key(_str, "honest", lambda v: v in STRATEGIES, " | ".join(STRATEGIES)),
        "mode": Key(Mode.parse, Mode.RELATIVISTIC, doc="relativistic | nonrelativistic"),
        "position": Key(_optional(parse_quantity), None, doc="x_E (m); auto = L/2"),
        "resend_mu": Key(_optional(parse_quantity), None, lambda v: v is None or v >= 0, "auto = mu"),
        "downstream_transmittance": Key(
            _optional(parse_quantity), None, lambda v: v is None or 0 < v <= 1, "auto = honest-matching"
        ),
        "reference_policy": Key(ReferencePolicy.parse, ReferencePolicy(), doc="pass_always | block_always | pass_with_prob(p)"),
        "sync_shift_bits": Key(_int, 0, _nonneg, "m for sync_shift"),
    },
    "feedback": {
        "enabled": Key(_bool, False, doc="run the bias loop before every packet"),
        "gain": Key(parse_quantity, 0.5, _nonneg, "proportional gain"),
        "confidence_counts": Key(parse_quantity, 20.0, _pos, "N0 of the confidence weight"),
        "probe_mu": Key(parse_quantity, 0.116, _nonneg, "mean photons per probe pulse"),
        "ramp": Key(parse_quantity, 0.0, math.isfinite, "deterministic drift (rad/cycle)"),
        "random_walk_std": Key(parse_quantity, 0.0, _nonneg, "random-walk drift (rad/cycle)"),
        "rails": Key(_pair, (-3 * math.pi, 3 * math.pi), lambda v: v[1] - v[0] > 3 * math.pi, "actuator range (rad)"),
    },
}


@dataclass(frozen=True)
class FeedbackSettings:
    enabled: bool = False
    loop: FeedbackConfig = FeedbackConfig()
    drift: DriftModel = DriftModel()
    rails: tuple[float, float] = (-3 * math.pi, 3 * math.pi)

    def initial_state(self) -> BiasState:
        return BiasState(rail_limits=self.rails)


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully validated scenario. Build it with :func:`parse_config` or :func:`from_mapping`."""

    seed: int = 20170419
    packets: int = 256
    output_path: str = ""
    packet: PacketConfig = PacketConfig()
    security: SecurityParams = SecurityParams(0.116, 0.8 * math.pi)
    link: Link = Link()
    eve: EveConfig = EveConfig()
    feedback: FeedbackSettings = FeedbackSettings()
    exchange_packet_rate: float = 2.0
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def with_values(self, overrides: dict[str, str]) -> "ScenarioConfig":
        """Rebuild with ``{"section.key": text}`` overrides applied."""
        values = {s: dict(v) for s, v in self.raw.items()} if self.raw else defaults_text()
        for dotted, text in overrides.items():
            section, _, key = dotted.partition(".")
            values.setdefault(section, {})[key] = text
        return from_mapping(values)


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Mode):
        return "nonrelativistic" if value is Mode.BASELINE else value.value
    if isinstance(value, ReferencePolicy):
        return str(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def defaults_text() -> dict[str, dict[str, str]]:
    return {s: {k: _format(key.default) for k, key in keys.items()} for s, keys in SCHEMA.items()}


def _parse_values(mapping: dict[str, dict[str, str]]) -> dict[str, dict[str, Any]]:
    unknown = []
    bad = []
    for section, keys in mapping.items():
        if section not in SCHEMA:
            unknown.extend([f"{section}.{k}" for k in keys] or [section])
            continue
        unknown.extend(f"{section}.{k}" for k in keys if k not in SCHEMA[section])
    if unknown:
        raise ValidationError(f"unknown configuration keys: {', '.join(unknown)}", unknown)
    values: dict[str, dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        given = mapping.get(section, {})
        for name, key in keys.items():
            if name not in given:
                values[section][name] = key.default
                continue
            try:
                v = key.parse(given[name])
                ok = key.check(v)
            except (ValueError, TypeError, KeyError):
                ok = False
            if not ok:
                bad.append(f"{section}.{name}")
                continue
            values[section][name] = v
    if bad:
        raise ValidationError(f"invalid configuration values: {', '.join(bad)}", bad)
    return values


def from_mapping(mapping: dict[str, dict[str, str]]) -> ScenarioConfig:
    v = _parse_values(mapping)
    raw = {s: {k: _format(val) for k, val in keys.items()} for s, keys in v.items()}
    run, pk, sec, geo, det, ifc, eve, fb = (
        v[s] for s in ("run", "packet", "security", "geometry", "detector", "interferometer", "eve", "feedback")
    )

    def build(keys, make):
        try:
            return make()
        except ValidationError as exc:
            raise ValidationError(str(exc), exc.keys or keys) from exc
        except ValueError as exc:
            raise ValidationError(f"{', '.join(keys)}: {exc}", keys) from exc

    packet = build(
        ["packet.calibration_windows", "packet.cycle_duration", "packet.pulse_separation"],
        lambda: PacketConfig(
            packet_bits=pk["packet_bits"],
            symbol_rate=pk["symbol_rate"],
            symbol_duration=pk["symbol_duration"],
            pulse_separation=pk["pulse_separation"],
            cycle_duration=pk["cycle_duration"],
            calibration_windows=pk["calibration_windows"],
            phase_depth=sec["phi"],
        ),
    )
    security = SecurityParams(sec["mu"], sec["phi"])
    geometry = build(
        ["geometry.admission_tolerance"],
        lambda: ChannelGeometry(
            geo["length"], geo["refractive_index"], geo["admission_tolerance"], pk["pulse_separation"]
        ),
    )
    link = build(
        ["geometry.line_transmittance", "interferometer.system_transmittance"],
        lambda: Link(
            geometry,
            DetectorParams(det["efficiency"], det["dark_rate"], det["gate_duration"]),
            InterferometerParams(
                pk["pulse_separation"], ifc["visibility"], ifc["bias_phase"], ifc["system_transmittance"]
            ),
            geo["line_transmittance"],
        ),
    )
    eve_cfg = EveConfig(
        strategy=eve["strategy"],
        mode=eve["mode"],
        position=eve["position"],
        resend_mu=eve["resend_mu"],
        downstream_transmittance=eve["downstream_transmittance"],
        reference_policy=eve["reference_policy"],
        sync_shift_bits=eve["sync_shift_bits"],
    )
    build(["eve.position"], lambda: eve_cfg.position_in(geometry.length))
    feedback = FeedbackSettings(
        enabled=fb["enabled"],
        loop=FeedbackConfig(gain=fb["gain"], confidence_counts=fb["confidence_counts"], probe_mu=fb["probe_mu"]),
        drift=DriftModel(random_walk_std=fb["random_walk_std"], deterministic_ramp=fb["ramp"]),
        rails=fb["rails"],
    )
    return ScenarioConfig(
        seed=run["seed"],
        packets=run["packets"],
        output_path=run["output_path"],
        packet=packet,
        security=security,
        link=link,
        eve=eve_cfg,
        feedback=feedback,
        exchange_packet_rate=pk["exchange_packet_rate"],
        raw=raw,
    )


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed configuration: {exc}") from exc
    mapping = {s: dict(parser.items(s)) for s in parser.sections()}
    return from_mapping(mapping)


def load_config(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def default_config() -> ScenarioConfig:
    return from_mapping({})


def serialize_config(cfg: ScenarioConfig) -> str:
    """INI text with every key materialized, in schema order."""
    values = cfg.raw or defaults_text()
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for name in keys:
            lines.append(f"{name} = {values[section][name]}")
        lines.append("")
    return "\n".join(lines)


def shipped_path(name: str = "default_scenario.ini") -> str:
    """Filesystem path of a file shipped in ``relqkd/data``."""
    from importlib.resources import files

    return str(files("relqkd") / "data" / name)
