"""Bias stabilization of Bob's delay interferometer.

Each 16 ms cycle opens with two probe windows in which the interferometer is
biased a quarter wave above and below its working point. The normalized
count difference is proportional to ``V sin(delta)``, where ``delta`` is the
misalignment between the controller's phase and the drifting optical offset.
The controller works in phase units; the voltage map is not modeled.

The actuator setting is kept as an optical phase plus an integer number of
fringes. A rail wrap-around only changes the fringe count, so the optical
phase, and with it every detector statistic, is untouched by a wrap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .photonics import DetectorParams, InterferometerParams, click_probability, interference_mean
from .protocol import PacketConfig

TWO_PI = 2.0 * math.pi
PROBE_OFFSET = 0.5 * math.pi
CONFIDENCE_COUNTS = 20.0


def wrap_to_pi(x: float) -> float:
    """Map an angle onto (-pi, pi]."""
    y = math.remainder(x, TWO_PI)
    return math.pi if y == -math.pi else y


@dataclass(frozen=True)
class BiasState:
    """Controller output ``phase + 2 pi fringe`` and the hidden optical offset."""

    phase: float = 0.0
    fringe: int = 0
    true_offset: float = 0.0
    rail_limits: tuple[float, float] = (-3 * math.pi, 3 * math.pi)

    def __post_init__(self):
        lo, hi = self.rail_limits
        if not hi - lo > 2 * PROBE_OFFSET + TWO_PI:
            raise ValueError("rails must span more than one fringe plus the probe offsets")

    @property
    def bias_phase_setting(self) -> float:
        return self.phase + TWO_PI * self.fringe

    @property
    def residual(self) -> float:
        """Optical misalignment seen by the QKD slots, in (-pi, pi]."""
        return wrap_to_pi(self.phase - self.true_offset)


@dataclass(frozen=True)
class DriftModel:
    random_walk_std: float = 0.0  # rad per cycle
    deterministic_ramp: float = 0.0  # rad per cycle

    def __post_init__(self):
        if self.random_walk_std < 0:
            raise ValueError("random_walk_std must be >= 0")

    def step(self, offset: float, rng: np.random.Generator) -> float:
        kick = rng.normal(0.0, self.random_walk_std) if self.random_walk_std > 0 else 0.0
        return offset + self.deterministic_ramp + kick


@dataclass(frozen=True)
class FeedbackConfig:
    gain: float = 0.5
    confidence_counts: float = CONFIDENCE_COUNTS
    probe_mu: float = 0.116
    probe_offset: float = PROBE_OFFSET

    def __post_init__(self):
        if self.gain < 0:
            raise ValueError("gain must be >= 0")
        if self.confidence_counts <= 0:
            raise ValueError("confidence_counts must be > 0")
        if self.probe_mu < 0:
            raise ValueError("probe_mu must be >= 0")


@dataclass(frozen=True)
class CycleReport:
    cycle_index: int
    true_offset: float
    bias_setting: float
    error_signal: float
    counts_plus: int
    counts_minus: int
    residual: float
    wrapped: int = 0  # fringes removed by the wrap-around, 0 if none


CSV_FIELDS = ("cycle_index", "true_offset", "bias_setting", "error_signal", "counts_plus", "counts_minus")


def probe_error_signal(counts_plus: int, counts_minus: int) -> float:
    """Normalized count difference; 0 when there are no counts."""
    if counts_plus < 0 or counts_minus < 0:
        raise ValueError("counts must be >= 0")
    total = counts_plus + counts_minus
    if total == 0:
        return 0.0
    return (counts_plus - counts_minus) / total


def confidence_weight(total_counts: float, n0: float = CONFIDENCE_COUNTS) -> float:
    return total_counts / (total_counts + n0)


def clamp(state: BiasState) -> BiasState:
    lo, hi = state.rail_limits
    s = state.bias_phase_setting
    if lo <= s <= hi:
        return state
    target = min(max(s, lo), hi)
    return replace(state, phase=target - TWO_PI * state.fringe)


def wraparound(state: BiasState, probe_offset: float = PROBE_OFFSET) -> tuple[BiasState, int]:
    """Step back by whole fringes when a probe would hit a rail.

    Returns the new state and the number of fringes removed (0 if unchanged).
    """
    lo, hi = state.rail_limits
    s = state.bias_phase_setting
    if lo + probe_offset < s < hi - probe_offset:
        return state, 0
    k = round(s / TWO_PI)
    if k == 0:
        return state, 0
    return replace(state, fringe=state.fringe - k), k


def _step(state: BiasState, error: float, total_counts: float, gain: float, fb: FeedbackConfig):
    if total_counts <= 0 or error == 0.0:
        return state, 0
    step = gain * error * confidence_weight(total_counts, fb.confidence_counts)
    moved = clamp(replace(state, phase=state.phase - step))
    return wraparound(moved, fb.probe_offset)


def update_bias(
    state: BiasState, error: float, total_counts: float, gain: float, fb: FeedbackConfig = FeedbackConfig()
) -> BiasState:
    """One proportional step, then clamp and wrap."""
    return _step(state, error, total_counts, gain, fb)[0]


def probe_means(state: BiasState, ifc: InterferometerParams, det: DetectorParams, config: PacketConfig, fb: FeedbackConfig):
    """Expected counts in the (+, -) probe windows."""
    a = fb.probe_mu * ifc.system_transmittance
    delta = state.phase - state.true_offset
    out = []
    for window, sign in zip(config.calibration_windows, (1.0, -1.0)):
        slots = round(window / config.symbol_duration)
        # cos(delta + pi/2) = -sin(delta): the + window sees (1 + V sin delta) / 2
        dark_port = interference_mean(a, a, delta + sign * fb.probe_offset, ifc.visibility)
        out.append(slots * click_probability(float(dark_port), det))
    return tuple(out)


def run_cycle(
    state: BiasState,
    drift: DriftModel,
    ifc: InterferometerParams,
    det: DetectorParams,
    config: PacketConfig,
    rng: np.random.Generator,
    fb: FeedbackConfig = FeedbackConfig(),
    cycle_index: int = 0,
) -> tuple[BiasState, CycleReport]:
    """Drift, probe both quadratures, update the bias, wrap if needed."""
    state = replace(state, true_offset=drift.step(state.true_offset, rng))
    mean_plus, mean_minus = probe_means(state, ifc, det, config, fb)
    n_plus = int(rng.poisson(mean_plus))
    n_minus = int(rng.poisson(mean_minus))
    error = probe_error_signal(n_plus, n_minus)
    state, wrapped = _step(state, error, n_plus + n_minus, fb.gain, fb)
    report = CycleReport(
        cycle_index, state.true_offset, state.bias_phase_setting, error, n_plus, n_minus, state.residual, wrapped
    )
    return state, report


def run_loop(
    cycles: int,
    state: BiasState,
    drift: DriftModel,
    ifc: InterferometerParams,
    det: DetectorParams,
    config: PacketConfig,
    rng: np.random.Generator,
    fb: FeedbackConfig = FeedbackConfig(),
) -> tuple[BiasState, list[CycleReport]]:
    reports = []
    for i in range(cycles):
        state, rep = run_cycle(state, drift, ifc, det, config, rng, fb, i)
        reports.append(rep)
    return state, reports


def stable_gain_range(visibility: float = 1.0, weight: float = 1.0) -> tuple[float, float]:
    """Open interval of gains for which the linearized loop converges.

    Near lock the error is ``V delta``, so ``delta <- (1 - g w V) delta``;
    convergence needs ``0 < g w V < 2``.
    """
    if visibility <= 0 or weight <= 0:
        return (0.0, 0.0)
    return (0.0, 2.0 / (visibility * weight))
