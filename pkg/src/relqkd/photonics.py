"""Physical layer: weak coherent pulse pairs, delay-interferometer dark port, detector.

Intensities are mean photon numbers; no Fock-space amplitudes are tracked.
The lumped system efficiency (1.5e-3) is split into the detector
quantum efficiency and a system transmittance applied ahead of the
interferometer, so the anticorrelated-slot click probability equals
``1 - exp(-1.5e-3 * mu * sin^2(phi/2))`` before dark counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LUMPED_EFFICIENCY = 1.5e-3
QUANTUM_EFFICIENCY = 0.35


@dataclass(frozen=True)
class PulsePair:
    mu_ref: float
    mu_data: float
    data_phase: float
    emit_time_ref: float = 0.0
    delay: float = 20e-9
    ref_present: bool = True
    data_present: bool = True

    def __post_init__(self):
        if self.mu_ref < 0 or self.mu_data < 0:
            raise ValueError("pulse means must be >= 0")
        if self.delay <= 0:
            raise ValueError("delay must be > 0")

    @property
    def emit_time_data(self) -> float:
        return self.emit_time_ref + self.delay


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = QUANTUM_EFFICIENCY
    dark_rate: float = 700.0  # Hz
    gate_duration: float = 10e-9  # s

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.dark_rate < 0:
            raise ValueError("dark_rate must be >= 0")
        if self.gate_duration <= 0:
            raise ValueError("gate_duration must be > 0")

    @property
    def p_dark(self) -> float:
        return -math.expm1(-self.dark_rate * self.gate_duration)


@dataclass(frozen=True)
class InterferometerParams:
    delay: float = 20e-9
    visibility: float = 1.0
    bias_phase: float = 0.0
    system_transmittance: float = LUMPED_EFFICIENCY / QUANTUM_EFFICIENCY

    def __post_init__(self):
        if self.delay <= 0:
            raise ValueError("delay must be > 0")
        if not 0 <= self.visibility <= 1:
            raise ValueError("visibility must lie in [0, 1]")
        if not 0 < self.system_transmittance <= 1:
            raise ValueError("system_transmittance must lie in (0, 1]")


def interference_mean(mu_ref, mu_data, relative_phase, visibility):
    """Dark-port mean photons for two pulses of (possibly unequal) mean.

    ``(a + b)/4 - V sqrt(a b) cos(theta) / 2``; reduces to ``a (1 - V cos)/2``
    for equal means and ``a/4`` for a lone pulse. Works on scalars and arrays.
    """
    a = np.asarray(mu_ref, dtype=float)
    b = np.asarray(mu_data, dtype=float)
    # sqrt(a*a) is not guaranteed to round back to a; equal means take the exact branch
    cross = np.where(a == b, a, np.sqrt(a * b))
    out = 0.25 * (a + b) - 0.5 * visibility * cross * np.cos(relative_phase)
    # cancellation can leave -0 or a negative ulp
    return np.maximum(out, 0.0)


def dark_port_mean_photons(pair: PulsePair, bob_phase: float, ifc: InterferometerParams) -> float:
    """Mean photon number reaching the single-photon detector for one slot."""
    t = ifc.system_transmittance
    a = pair.mu_ref * t if pair.ref_present else 0.0
    b = pair.mu_data * t if pair.data_present else 0.0
    if a == 0.0 and b == 0.0:
        return 0.0
    theta = bob_phase - pair.data_phase + ifc.bias_phase
    return float(interference_mean(a, b, theta, ifc.visibility))


def bright_port_mean_photons(pair: PulsePair, bob_phase: float, ifc: InterferometerParams) -> float:
    """Complementary output of the interferometer's central time slot.

    Together with :func:`dark_port_mean_photons` this accounts for the half of
    each pulse that lands in the central slot; the other half exits in the
    early and late side slots, which carry no interference.
    """
    t = ifc.system_transmittance
    a = pair.mu_ref * t if pair.ref_present else 0.0
    b = pair.mu_data * t if pair.data_present else 0.0
    theta = bob_phase - pair.data_phase + ifc.bias_phase
    cross = a if a == b else math.sqrt(a * b)
    return 0.25 * (a + b) + 0.5 * ifc.visibility * cross * math.cos(theta)


def click_probability(mu_detected, det: DetectorParams):
    """Threshold detector: 1 - exp(-eta mu) (1 - p_dark). Scalars or arrays."""
    mu = np.asarray(mu_detected, dtype=float)
    if np.any(mu < 0):
        raise ValueError("mu_detected must be >= 0")
    no_click = np.exp(-det.efficiency * mu) * (1.0 - det.p_dark)
    p = 1.0 - no_click
    return float(p) if p.ndim == 0 else p


def photon_click_probability(mu_detected, det: DetectorParams):
    """Click probability from light alone, 1 - exp(-eta mu).

    A click is the union of two independent events, a photon detection and a
    dark count, so ``1 - (1 - photon)(1 - p_dark)`` equals :func:`click_probability`.
    """
    mu = np.asarray(mu_detected, dtype=float)
    if np.any(mu < 0):
        raise ValueError("mu_detected must be >= 0")
    p = -np.expm1(-det.efficiency * mu)
    return float(p) if p.ndim == 0 else p


def bernoulli_indices(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices of successes among ``n`` independent Bernoulli(p) trials.

    Draws geometric gaps between successes, so the cost scales with ``n p``
    rather than ``n``.
    """
    if n <= 0 or p <= 0.0:
        return np.empty(0, np.int64)
    if p >= 1.0:
        return np.arange(n, dtype=np.int64)
    batch = int(n * p * 1.25) + 16
    parts = []
    last = -1
    while True:
        hits = last + np.cumsum(rng.geometric(p, batch))
        if hits[-1] >= n:
            parts.append(hits[hits < n])
            break
        parts.append(hits)
        last = int(hits[-1])
    return np.concatenate(parts)


def sample_click(mu_detected: float, det: DetectorParams, rng: np.random.Generator) -> bool:
    return bool(rng.random() < click_probability(mu_detected, det))


def sample_clicks(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One Bernoulli draw per slot; consumes exactly ``len(p)`` uniforms."""
    return rng.random(np.shape(p)) < p
