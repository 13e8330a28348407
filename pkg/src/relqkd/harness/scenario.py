"""Scenario orchestration: packet loops, feedback interleaving, sweeps, attack reports."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .. import streams
from ..adversary import AuditResult
from ..feedback import CycleReport, run_cycle
from ..keymath import SecurityParams
from ..photonics import click_probability, interference_mean
from ..protocol import Link, PacketStats, RunSummary, run_packet, summarize
from .config import ScenarioConfig


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    packets: list[PacketStats]
    summary: RunSummary
    audit: AuditResult
    feedback: list[CycleReport] = field(default_factory=list)


def run_scenario(cfg: ScenarioConfig, strategy=None) -> ScenarioResult:
    """Run ``cfg.packets`` packets in cycle order.

    With feedback enabled, each packet's cycle first runs the bias loop and
    the packet then sees the loop's residual misalignment on top of the
    configured static bias.
    """
    stats = []
    reports = []
    decisions = 0
    fb = cfg.feedback
    state = fb.initial_state() if fb.enabled else None
    drift_rng = streams.stream(cfg.seed, streams.DRIFT) if fb.enabled else None
    base_ifc = cfg.link.interferometer
    for i in range(cfg.packets):
        link = cfg.link
        if fb.enabled:
            state, rep = run_cycle(
                state, fb.drift, base_ifc, link.detector, cfg.packet, drift_rng, fb.loop, cycle_index=i
            )
            reports.append(rep)
            ifc = replace(base_ifc, bias_phase=base_ifc.bias_phase + state.residual)
            link = replace(link, interferometer=ifc)
        ledger = run_packet(cfg.packet, link, cfg.security, cfg.eve, cfg.seed, i, strategy=strategy)
        decisions += ledger.audit.decisions_checked
        stats.append(PacketStats.from_ledger(ledger))
    summary = summarize(stats, cfg.security, cfg.packet, cfg.exchange_packet_rate)
    return ScenarioResult(cfg, stats, summary, AuditResult(True, decisions_checked=decisions), reports)


# ---------------------------------------------------------------------------
# Closed-form honest expectations


def honest_click_probability(link: Link, security: SecurityParams) -> float:
    """Per-slot click probability of an undisturbed channel, averaged over both bit pairs."""
    ifc = link.interferometer
    a = security.mu * ifc.system_transmittance
    # b_B - b_A in {-1, 0, 0, 1}
    m = np.array([-1.0, 0.0, 0.0, 1.0])
    dark_port = interference_mean(a, a, m * security.phi + ifc.bias_phase, ifc.visibility)
    return float(np.mean(click_probability(dark_port, link.detector)))


def honest_qber(link: Link, security: SecurityParams) -> float:
    """Expected QBER of an undisturbed channel: clicks in correlated slots over all clicks."""
    ifc = link.interferometer
    a = security.mu * ifc.system_transmittance
    m = np.array([-1.0, 0.0, 0.0, 1.0])
    p = click_probability(interference_mean(a, a, m * security.phi + ifc.bias_phase, ifc.visibility), link.detector)
    total = float(np.sum(p))
    return float(p[1] + p[2]) / total if total > 0 else math.nan


# ---------------------------------------------------------------------------
# Sweeps


SWEEPABLE = ("mu",)


@dataclass(frozen=True)
class SweepSpec:
    swept_parameter: str
    grid: tuple[float, ...]
    base: ScenarioConfig

    def __post_init__(self):
        if self.swept_parameter not in SWEEPABLE:
            raise ValueError(f"cannot sweep {self.swept_parameter!r}; choose from {SWEEPABLE}")
        if not self.grid:
            raise ValueError("sweep grid is empty")

    def point(self, value: float) -> ScenarioConfig:
        return self.base.with_values({f"security.{self.swept_parameter}": repr(float(value))})


def log_grid(lo: float, hi: float, points: int) -> tuple[float, ...]:
    if points < 1 or lo <= 0 or hi < lo:
        raise ValueError("log grid needs points >= 1 and 0 < lo <= hi")
    if points == 1:
        return (float(lo),)
    return tuple(float(x) for x in np.geomspace(lo, hi, points))


def _sweep_point(cfg: ScenarioConfig) -> RunSummary:
    return run_scenario(cfg).summary


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[RunSummary]:
    """One summary per grid point, in grid order.

    Every grid point reuses the base seed, so points share their bit,
    detector and adversary streams (common random numbers).
    """
    configs = [spec.point(v) for v in spec.grid]
    if workers <= 1 or len(configs) == 1:
        return [_sweep_point(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, configs))


# ---------------------------------------------------------------------------
# Attack reports


@dataclass(frozen=True)
class AttackReport:
    strategy: str
    mode: str
    packets: int
    induced_loss: float
    summary: RunSummary
    audit: AuditResult

    @property
    def extractable_secret(self) -> bool:
        s = self.summary
        if s.no_data or math.isnan(s.qber):
            return False
        return s.qber < s.critical_qber

    def lines(self) -> list[str]:
        s = self.summary
        return [
            f"strategy: {self.strategy}",
            f"mode: {self.mode}",
            f"packets: {self.packets}",
            f"packets_discarded: {s.packets_discarded}",
            f"clicks_per_pulse: {s.clicks_per_pulse!r}",
            f"induced_loss: {self.induced_loss!r}",
            f"qber: {s.qber!r}",
            f"qber_ci_low: {s.qber_ci_low!r}",
            f"qber_ci_high: {s.qber_ci_high!r}",
            f"critical_qber: {s.critical_qber!r}",
            f"chi: {s.chi!r}",
            f"eve_known_fraction: {s.eve_known_fraction!r}",
            f"audit: {self.audit}",
            f"extractable_secret: {'yes' if self.extractable_secret else 'no'}",
        ]


def run_attack(cfg: ScenarioConfig, strategy=None) -> AttackReport:
    """Run the scenario and compare Bob's click rate with the honest expectation.

    ``induced_loss`` is ``1 - observed / expected`` clicks per pulse; it is
    negative when the attack adds clicks.
    """
    result = run_scenario(cfg, strategy=strategy)
    expected = honest_click_probability(cfg.link, cfg.security)
    observed = result.summary.clicks_per_pulse
    loss = 1.0 - observed / expected if expected > 0 and not math.isnan(observed) else math.nan
    mode = "nonrelativistic" if cfg.eve.mode.value != "relativistic" else "relativistic"
    return AttackReport(cfg.eve.strategy, mode, cfg.packets, loss, result.summary, result.audit)


def run_seeds(cfg: ScenarioConfig, seeds: Sequence[int]) -> list[RunSummary]:
    return [run_scenario(cfg.with_values({"run.seed": str(s)})).summary for s in seeds]
