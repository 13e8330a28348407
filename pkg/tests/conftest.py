from __future__ import annotations

import math

import pytest

from relqkd.keymath import SecurityParams
from relqkd.protocol import Link, PacketConfig

PHI = 0.8 * math.pi


@pytest.fixture
def default_security():
    return SecurityParams(0.116, PHI)


@pytest.fixture
def default_link():
    return Link()


@pytest.fixture
def default_packet():
    return PacketConfig()


def anti_click(mu, link=None, visibility=1.0):
    """Oracle click probability for b_A != b_B with both pulses intact."""
    link = link or Link()
    mu_det = mu * link.interferometer.system_transmittance
    dark_port = mu_det * (1 - visibility * math.cos(PHI)) / 2
    return 1 - math.exp(-link.detector.efficiency * dark_port) * (1 - link.detector.p_dark)


def corr_click(mu, link=None, visibility=1.0):
    link = link or Link()
    mu_det = mu * link.interferometer.system_transmittance
    dark_port = mu_det * (1 - visibility) / 2
    return 1 - math.exp(-link.detector.efficiency * dark_port) * (1 - link.detector.p_dark)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
