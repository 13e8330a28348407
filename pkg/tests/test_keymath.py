from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import constants, optimize
from scipy.stats import entropy

from relqkd.errors import DomainError, UnphysicalInputError
from relqkd.keymath import (
    GeometryParams,
    SecurityParams,
    binary_entropy,
    critical_qber,
    delta_t_min,
    dbm_to_watts,
    holevo_bound,
    l_max,
    mu_from_power,
    secret_fraction,
    usd_success_prob,
)

PHI = 0.8 * math.pi


def overlap(mu, phi):
    """|<alpha|e^{i phi} alpha>| from the coherent-state inner product."""
    alpha = math.sqrt(mu)
    beta = alpha * complex(math.cos(phi), math.sin(phi))
    inner = np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * abs(beta) ** 2 + alpha.conjugate() * beta)
    return abs(inner)


def holevo_oracle(mu, phi):
    """Von Neumann entropy of the equal mixture, from its 2x2 Gram matrix."""
    s = overlap(mu, phi)
    gram = 0.5 * np.array([[1.0, s], [s, 1.0]])
    eig = np.clip(np.linalg.eigvalsh(gram), 0, None)
    return float(entropy(eig, base=2))


def h_oracle(p):
    return float(entropy([p, 1 - p], base=2))


mus = st.floats(min_value=1e-4, max_value=5.0)
phis = st.floats(min_value=1e-3, max_value=math.pi)


class TestBinaryEntropy:
    def test_boundaries(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0
        assert binary_entropy(0.5) == 1.0

    def test_operating_point(self):
        assert binary_entropy(0.0408) == pytest.approx(h_oracle(0.0408), abs=1e-12)
        assert binary_entropy(0.0408) == pytest.approx(0.2459, abs=1e-4)

    @pytest.mark.parametrize("p", [-1e-9, 1.0000001, math.nan])
    def test_out_of_range(self, p):
        with pytest.raises(DomainError):
            binary_entropy(p)

    def test_symmetry_on_grid(self):
        for p in np.linspace(0, 1, 1001):
            assert binary_entropy(p) == pytest.approx(binary_entropy(1 - p), abs=1e-14)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_concave(self, p, q):
        mid = binary_entropy(0.5 * (p + q))
        assert mid >= 0.5 * (binary_entropy(p) + binary_entropy(q)) - 1e-12


class TestHolevo:
    def test_operating_point(self):
        params = SecurityParams(0.116, PHI)
        assert holevo_bound(params) == pytest.approx(holevo_oracle(0.116, PHI), abs=1e-12)
        assert holevo_bound(params) == pytest.approx(0.4518, abs=1e-4)

    def test_identical_states(self):
        assert holevo_bound(SecurityParams(0.0, PHI)) == 0.0

    def test_vanishing_modulation(self):
        assert holevo_bound(SecurityParams(0.116, 1e-9)) == pytest.approx(0.0, abs=1e-12)

    @given(mus, phis)
    def test_matches_gram_oracle(self, mu, phi):
        assert holevo_bound(SecurityParams(mu, phi)) == pytest.approx(holevo_oracle(mu, phi), abs=1e-9)

    def test_strictly_increasing_in_mu(self):
        values = [holevo_bound(SecurityParams(mu, PHI)) for mu in np.linspace(0.01, 1, 100)]
        assert all(0 <= v <= 1 for v in values)
        assert all(b > a for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("mu,phi", [(-0.1, PHI), (0.1, 0.0), (0.1, 3.2), (math.inf, PHI)])
    def test_invalid_params(self, mu, phi):
        with pytest.raises(DomainError):
            SecurityParams(mu, phi)


class TestUsd:
    def test_operating_point(self):
        p = usd_success_prob(SecurityParams(0.116, PHI))
        assert p == pytest.approx(1 - overlap(0.116, PHI), abs=1e-12)
        assert p == pytest.approx(0.1893, abs=1e-4)

    def test_limits(self):
        assert usd_success_prob(SecurityParams(0.0, 1.0)) == 0.0
        assert usd_success_prob(SecurityParams(10.0, math.pi)) == pytest.approx(1.0, abs=1e-8)

    @given(mus, phis)
    def test_is_twice_the_holevo_argument(self, mu, phi):
        params = SecurityParams(mu, phi)
        assert holevo_bound(params) == pytest.approx(binary_entropy(usd_success_prob(params) / 2), abs=0)

    @given(mus, phis)
    def test_below_one(self, mu, phi):
        assert 0 <= usd_success_prob(SecurityParams(mu, phi)) < 1


class TestSecretFraction:
    def test_operating_point(self):
        r = secret_fraction(SecurityParams(0.116, PHI), 0.0408)
        assert r == pytest.approx(1 - holevo_oracle(0.116, PHI) - h_oracle(0.0408), abs=1e-12)
        assert r == pytest.approx(0.3023, abs=1e-4)

    def test_random_key(self):
        params = SecurityParams(0.3, 1.0)
        assert secret_fraction(params, 0.5) == pytest.approx(-holevo_bound(params))

    def test_weak_limit(self):
        assert secret_fraction(SecurityParams(1e-12, PHI), 0.0) == pytest.approx(1.0, abs=1e-9)

    @given(mus, phis, st.floats(0, 1))
    def test_identity(self, mu, phi, q):
        params = SecurityParams(mu, phi)
        total = secret_fraction(params, q) + holevo_bound(params) + binary_entropy(q)
        assert total == pytest.approx(1.0, abs=1e-15)

    def test_bad_qber(self):
        with pytest.raises(DomainError):
            secret_fraction(SecurityParams(0.1, PHI), 1.5)


class TestCriticalQber:
    def test_operating_point_against_brentq(self):
        params = SecurityParams(0.116, PHI)
        target = 1 - holevo_oracle(0.116, PHI)
        root = optimize.brentq(lambda q: h_oracle(q) - target, 1e-12, 0.5, xtol=1e-14)
        assert critical_qber(params) == pytest.approx(root, abs=1e-9)
        assert critical_qber(params) == pytest.approx(0.1266, abs=1e-4)

    def test_no_information(self):
        assert critical_qber(SecurityParams(0.0, PHI)) == 0.5

    def test_decreasing_in_mu(self):
        assert critical_qber(SecurityParams(0.3, PHI)) < critical_qber(SecurityParams(0.116, PHI))

    def test_random_draws_zero_the_fraction(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            params = SecurityParams(float(rng.uniform(1e-3, 3)), float(rng.uniform(0.05, math.pi)))
            assert abs(secret_fraction(params, critical_qber(params))) < 1e-9


class TestGeometry:
    def test_delta_t_min(self):
        c = constants.c
        exact = GeometryParams(180.0, 180.0 / c)
        assert delta_t_min(exact) == 0.0
        air = GeometryParams(180.0, 180.0 * 1.0002804 / c)
        assert delta_t_min(air) == pytest.approx(2 * 180 * 2.804e-4 / c, rel=1e-9)
        assert delta_t_min(air) == pytest.approx(0.337e-9, abs=1e-12)
        assert delta_t_min(air, trusted_external_sync=True) == pytest.approx(0.168e-9, abs=1e-12)

    def test_superluminal_rejected(self):
        with pytest.raises(UnphysicalInputError):
            GeometryParams(180.0, 100e-9)

    def test_l_max(self):
        assert l_max(20e-9, 1.0002804) == pytest.approx(0.5 * constants.c * 20e-9 / 2.804e-4, rel=1e-12)
        assert l_max(20e-9, 1.0002804) / 1e3 == pytest.approx(10.7, abs=0.05)
        assert l_max(40e-9, 1.0002804) / 1e3 == pytest.approx(21.4, abs=0.05)
        assert l_max(20e-9, 1.0) == math.inf

    @given(st.floats(1e-10, 1e-6), st.floats(1.000001, 2.0))
    def test_l_max_round_trip(self, dt, n):
        assert l_max(dt, n) * (n - 1) * 2 / constants.c == pytest.approx(dt, rel=1e-12)

    def test_l_max_bad_delay(self):
        with pytest.raises(DomainError):
            l_max(0.0, 1.1)


class TestMuFromPower:
    def photons(self, dbm, wavelength, t):
        watts = 10 ** (dbm / 10) / 1000
        return watts * t / (constants.h * constants.c / wavelength)

    def test_reported_endpoints(self):
        assert mu_from_power(-78.9, 780e-9, 10e-9) == pytest.approx(self.photons(-78.9, 780e-9, 10e-9), rel=1e-12)
        assert mu_from_power(-78.9, 780e-9, 10e-9) == pytest.approx(0.50, abs=0.01)
        assert mu_from_power(-92.9, 780e-9, 10e-9) == pytest.approx(0.020, abs=0.001)

    def test_zero_power(self):
        assert mu_from_power(-math.inf, 780e-9, 10e-9) == 0.0
        assert dbm_to_watts(0.0) == 1e-3

    def test_bad_inputs(self):
        with pytest.raises(DomainError):
            mu_from_power(-80, 780e-9, 0.0)
        with pytest.raises(DomainError):
            mu_from_power(-80, -1.0, 10e-9)


@settings(max_examples=50)
@given(mus)
def test_critical_qber_inside_half(mu):
    q = critical_qber(SecurityParams(mu, PHI))
    assert 0 < q <= 0.5
