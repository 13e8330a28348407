"""Closed-form security and geometry arithmetic.

All entropies are in bits. Every function here is pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError, UnphysicalInputError

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact SI
PLANCK = 6.62607015e-34  # J*s, exact SI

CRITICAL_QBER_TOL = 1e-10


@dataclass(frozen=True)
class SecurityParams:
    """Mean photon number per pulse and phase modulation depth (radians)."""

    mu: float
    phi: float

    def __post_init__(self):
        # mu == 0 is admitted as the identical-states limit.
        if not (math.isfinite(self.mu) and self.mu >= 0):
            raise DomainError(f"mu must be >= 0, got {self.mu}")
        if not (0 < self.phi <= math.pi):
            raise DomainError(f"phi must lie in (0, pi], got {self.phi}")


@dataclass(frozen=True)
class GeometryParams:
    distance_lower_bound: float
    observed_time_of_flight: float
    pulse_separation: float = 20e-9
    refractive_index: float = 1.0002804
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.distance_lower_bound < 0:
            raise DomainError("distance_lower_bound must be >= 0")
        if self.observed_time_of_flight <= 0:
            raise DomainError("observed_time_of_flight must be > 0")
        if self.pulse_separation <= 0:
            raise DomainError("pulse_separation must be > 0")
        if self.refractive_index < 1:
            raise DomainError("refractive_index must be >= 1")
        if self.observed_time_of_flight < self.distance_lower_bound / self.speed_of_light:
            raise UnphysicalInputError(
                "observed time of flight is shorter than L_min/c (superluminal)"
            )


def binary_entropy(p: float) -> float:
    """Binary Shannon entropy h(p) in bits, with h(0) = h(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability out of range: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def usd_success_prob(params: SecurityParams) -> float:
    """Optimal unambiguous discrimination probability of |a> vs |e^{i phi} a>.

    Equals one minus the overlap, 1 - exp(-2 mu sin^2(phi/2)).
    """
    return -math.expm1(-2.0 * params.mu * math.sin(params.phi / 2.0) ** 2)


def holevo_bound(params: SecurityParams) -> float:
    """Eve's per-use information bound, chi = h((1 - exp(-2 mu sin^2(phi/2))) / 2)."""
    return binary_entropy(usd_success_prob(params) / 2.0)


def secret_fraction(params: SecurityParams, qber: float) -> float:
    """Asymptotic secret bits per sifted bit, R = 1 - chi - h(qber). May be negative."""
    if not 0.0 <= qber <= 1.0:
        raise DomainError(f"qber out of range: {qber}")
    return 1.0 - holevo_bound(params) - binary_entropy(qber)


def critical_qber(params: SecurityParams, tol: float = CRITICAL_QBER_TOL) -> float:
    """QBER in [0, 0.5] at which the secret fraction vanishes.

    Bisection on h(q) = 1 - chi; h is strictly increasing on [0, 0.5] so the
    root is unique. Returns 0 when chi >= 1 (no positive-rate region).
    """
    target = 1.0 - holevo_bound(params)
    if target <= 0.0:
        return 0.0
    if target >= 1.0:
        return 0.5
    lo, hi = 0.0, 0.5
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if binary_entropy(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def delta_t_min(geom: GeometryParams, trusted_external_sync: bool = False) -> float:
    """Minimal pulse separation 2(T_o - L_min/c); halved with trusted external sync."""
    slack = geom.observed_time_of_flight - geom.distance_lower_bound / geom.speed_of_light
    if slack < 0:
        raise UnphysicalInputError("observed time of flight is shorter than L_min/c")
    return slack if trusted_external_sync else 2.0 * slack


def l_max(pulse_separation: float, refractive_index: float) -> float:
    """Longest air channel for which a vacuum shortcut cannot make up ``pulse_separation``.

    L_max = c * dT / (2 (n - 1)); ``math.inf`` when n <= 1.
    """
    if pulse_separation <= 0:
        raise DomainError("pulse_separation must be > 0")
    if refractive_index <= 1.0:
        return math.inf
    return 0.5 * SPEED_OF_LIGHT * pulse_separation / (refractive_index - 1.0)


def dbm_to_watts(power_dbm: float) -> float:
    return 1e-3 * 10.0 ** (power_dbm / 10.0)


def mu_from_power(power_dbm: float, wavelength: float, pulse_duration: float) -> float:
    """Mean photon number in a ``pulse_duration`` slice of CW light at ``power_dbm``."""
    if pulse_duration <= 0:
        raise DomainError("pulse_duration must be > 0")
    if wavelength <= 0:
        raise DomainError("wavelength must be > 0")
    if power_dbm == -math.inf:
        return 0.0
    photon_energy = PLANCK * SPEED_OF_LIGHT / wavelength
    return dbm_to_watts(power_dbm) * pulse_duration / photon_energy
