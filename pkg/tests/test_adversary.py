from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import PHI, anti_click, corr_click
from relqkd.adversary import (
    BLOCK,
    INCONCLUSIVE,
    PASS,
    Action,
    ActionBatch,
    ActionKind,
    EveConfig,
    EveDecisionTrace,
    HistoryView,
    Identified,
    Mode,
    ReferencePolicy,
    Strategy,
    apply_sync_shift,
    make_strategy,
    matching_transmittance,
    usd_joint_measure,
    usd_measure_batch,
    validate_trace,
)
from relqkd.errors import CausalityViolation, ValidationError
from relqkd.keymath import SecurityParams, usd_success_prob
from relqkd.photonics import DetectorParams
from relqkd.protocol import Link, PacketConfig, PacketStats, SyncVerdict, compare_sync, run_packet, summarize
from relqkd.spacetime import Label, SpacetimeEvent

SEC = SecurityParams(0.116, PHI)
X_E = 90.0


def view(mode=Mode.RELATIVISTIC, n=8, outcomes=None, cfg=None, data=False):
    t = np.arange(n) * 40e-9
    dec = t + (20e-9 if mode is Mode.BASELINE or data else 0.0)
    cfg = cfg or EveConfig("usd_block_resend", mode)
    return HistoryView(X_E, dec, t + 20e-9, outcomes, SEC, cfg)


class CorruptedPeek(Strategy):
    """Reads the data-pulse outcome at the reference decision and forges the read log."""

    name = "corrupted"
    uses_usd = True

    def step_reference(self, v, rng):
        outcomes = v._outcomes
        v._reads = np.ones(len(v), bool)
        kind = np.where(outcomes == INCONCLUSIVE, np.int8(ActionKind.BLOCK), np.int8(ActionKind.PASS))
        return ActionBatch(kind.astype(np.int8), np.zeros(len(v), np.int8))

    def step_data(self, v, rng):
        return ActionBatch.fill(len(v), ActionKind.PASS)


class HonestPeek(Strategy):
    """Asks the view for the outcome at the reference decision."""

    name = "peek"
    uses_usd = True

    def step_reference(self, v, rng):
        v.usd_outcomes()
        return ActionBatch.fill(len(v), ActionKind.PASS)


class TestUsd:
    def test_zero_mu_always_inconclusive(self):
        rng = np.random.default_rng(0)
        params = SecurityParams(0.0, PHI)
        assert all(usd_joint_measure(1, params, rng) == INCONCLUSIVE for _ in range(1000))
        assert np.all(usd_measure_batch(np.ones(1000, np.uint8), params, rng) == INCONCLUSIVE)

    def test_success_frequency(self):
        n = 10**7
        out = usd_measure_batch(np.zeros(n, np.uint8), SEC, np.random.default_rng(1))
        p = usd_success_prob(SEC)
        assert p == pytest.approx(0.1893, abs=1e-4)
        freq = np.count_nonzero(out != INCONCLUSIVE) / n
        assert abs(freq - p) < 4 * math.sqrt(p * (1 - p) / n)

    def test_never_wrong(self):
        rng = np.random.default_rng(2)
        bits = rng.integers(0, 2, 6 * 10**6).astype(np.uint8)
        out = usd_measure_batch(bits, SecurityParams(0.5, PHI), rng)
        hit = out != INCONCLUSIVE
        assert hit.sum() > 10**6
        assert np.array_equal(out[hit], bits[hit])

    def test_scalar_form(self):
        got = usd_joint_measure(1, SecurityParams(20.0, math.pi), np.random.default_rng(0))
        assert got == Identified(1)


class TestDecisions:
    def test_honest_passes(self):
        s = make_strategy(EveConfig())
        rng = np.random.default_rng(0)
        assert s.step_reference(view(), rng)[0] == PASS
        assert s.step_data(view(), rng)[0] == PASS

    def test_block_always_reference(self):
        cfg = EveConfig("usd_block_resend", reference_policy=ReferencePolicy.parse("block_always"))
        acts = make_strategy(cfg).step_reference(view(cfg=cfg), np.random.default_rng(0))
        assert all(acts[i] == BLOCK for i in range(len(acts)))

    def test_pass_with_prob(self):
        cfg = EveConfig("usd_block_resend", reference_policy=ReferencePolicy.parse("pass_with_prob(0.25)"))
        acts = make_strategy(cfg).step_reference(view(n=40000, cfg=cfg), np.random.default_rng(0))
        frac = np.mean(acts.kind == ActionKind.PASS)
        assert abs(frac - 0.25) < 4 * math.sqrt(0.25 * 0.75 / 40000)

    def test_baseline_inconclusive_blocks_both(self):
        cfg = EveConfig("usd_block_resend", Mode.BASELINE)
        outcomes = np.array([INCONCLUSIVE, 1, 0, INCONCLUSIVE], np.int8)
        s = make_strategy(cfg)
        rng = np.random.default_rng(0)
        ref = s.step_reference(view(Mode.BASELINE, 4, outcomes, cfg), rng)
        data = s.step_data(view(Mode.BASELINE, 4, outcomes, cfg), rng)
        assert [ref[i].kind for i in range(4)] == [ActionKind.BLOCK, ActionKind.RESEND, ActionKind.RESEND, ActionKind.BLOCK]
        assert [data[i].kind for i in range(4)] == [ActionKind.BLOCK, ActionKind.RESEND, ActionKind.RESEND, ActionKind.BLOCK]

    def test_success_resends_correct_state(self):
        cfg = EveConfig("usd_block_resend")
        outcomes = np.array([1, 0, INCONCLUSIVE], np.int8)
        data = make_strategy(cfg).step_data(view(n=3, outcomes=outcomes, cfg=cfg, data=True), np.random.default_rng(0))
        assert data[0] == Action(ActionKind.RESEND, 0.116, PHI)
        assert data[1] == Action(ActionKind.RESEND, 0.116, 0.0)
        assert data[2] == BLOCK

    def test_resend_mu_override(self):
        cfg = EveConfig("usd_block_resend", resend_mu=0.5)
        data = make_strategy(cfg).step_data(view(n=1, outcomes=np.array([1], np.int8), cfg=cfg, data=True), np.random.default_rng(0))
        assert data[0].mu == 0.5

    def test_intercept_resend_always_resends(self):
        cfg = EveConfig("intercept_resend")
        outcomes = np.array([INCONCLUSIVE] * 1000, np.int8)
        s = make_strategy(cfg)
        data = s.step_data(view(n=1000, outcomes=outcomes, cfg=cfg, data=True), np.random.default_rng(0))
        assert np.all(data.kind == ActionKind.RESEND)
        assert 400 < data.bit.sum() < 600

    def test_policy_text(self):
        for text in ("pass_always", "block_always", "pass_with_prob(0.3)"):
            assert str(ReferencePolicy.parse(text)) == text
        with pytest.raises(ValueError):
            ReferencePolicy.parse("pass_with_prob(1.5)")
        with pytest.raises(ValueError):
            ReferencePolicy.parse("sometimes")

    def test_config_validation(self):
        with pytest.raises(ValidationError) as exc:
            EveConfig("teleport", resend_mu=-1, sync_shift_bits=-2)
        assert set(exc.value.keys) == {"strategy", "resend_mu", "sync_shift_bits"}
        with pytest.raises(ValidationError):
            EveConfig(position=200.0).position_in(180.0)
        assert EveConfig().position_in(180.0) == 90.0

    def test_matching_transmittance(self):
        assert matching_transmittance("usd_block_resend", 0.05, 0.2) == pytest.approx(0.25)
        assert matching_transmittance("usd_block_resend", 0.5, 0.2) == 1.0
        assert matching_transmittance("intercept_resend", 0.05, 0.2) == 0.05


class TestHistoryView:
    def test_reference_decision_cannot_read_data(self):
        v = view(outcomes=np.zeros(8, np.int8))
        with pytest.raises(CausalityViolation):
            v.usd_outcomes()
        assert not v.reads.any()

    def test_baseline_decision_can_read(self):
        v = view(Mode.BASELINE, outcomes=np.zeros(8, np.int8))
        assert len(v.usd_outcomes([1, 2])) == 2
        assert list(np.flatnonzero(v.reads)) == [1, 2]


class TestAudit:
    def test_honest_trace_ok(self, default_packet, default_link):
        lg = run_packet(default_packet, default_link, SEC, EveConfig(), 1, keep_trace=True)
        assert lg.audit.ok and validate_trace(lg.trace).ok
        assert len(lg.trace) == 2 * default_packet.packet_bits

    def test_hand_built_violation(self):
        trace = EveDecisionTrace()
        ref_decision = SpacetimeEvent(X_E, 1e-6, Label.EVE_DECISION)
        data_measurement = SpacetimeEvent(X_E, 1e-6 + 20e-9, Label.EVE_MEASUREMENT)
        trace.append(SpacetimeEvent(X_E, 0.9e-6), [], PASS)
        trace.append(ref_decision, [data_measurement], BLOCK)
        res = validate_trace(trace)
        assert not res.ok and res.index == 1
        assert res.event == data_measurement
        assert "violation at decision 1" in str(res)

    def test_trace_rows(self):
        trace = EveDecisionTrace()
        e = SpacetimeEvent(X_E, 1e-6)
        m = SpacetimeEvent(X_E, 0.5e-6, Label.EVE_MEASUREMENT)
        trace.append(e, [m], Action(ActionKind.RESEND, 0.2, PHI))
        rows = list(trace)
        assert rows == [(e, [m], Action(ActionKind.RESEND, 0.2, PHI))]
        assert validate_trace(trace).ok

    def test_corrupted_strategy_rejected(self, default_link):
        cfg = PacketConfig(packet_bits=256)
        with pytest.raises(CausalityViolation) as exc:
            run_packet(cfg, default_link, SEC, EveConfig("usd_block_resend"), 1, strategy=CorruptedPeek(EveConfig()))
        assert "violation at decision 0" in str(exc.value)
        assert "outside past light cone" in str(exc.value)

    def test_peek_through_view_rejected(self, default_link):
        with pytest.raises(CausalityViolation):
            run_packet(PacketConfig(packet_bits=16), default_link, SEC, EveConfig(), 1, strategy=HonestPeek(EveConfig()))

    def test_corrupted_strategy_is_legal_in_baseline(self, default_link):
        cfg = PacketConfig(packet_bits=256)
        eve = EveConfig("usd_block_resend", Mode.BASELINE)
        assert run_packet(cfg, default_link, SEC, eve, 1, strategy=CorruptedPeek(eve)).audit.ok


class TestSyncShift:
    def rate(self, m, packets, bits=64):
        cfg = PacketConfig(packet_bits=bits)
        eve = EveConfig("sync_shift", sync_shift_bits=m)
        lgs = [run_packet(cfg, Link(), SEC, eve, 5, i) for i in range(packets)]
        return np.mean([compare_sync(lg) is SyncVerdict.DISCARD for lg in lgs]), lgs

    def test_m0_keeps(self):
        rate, _ = self.rate(0, 20)
        assert rate == 0.0

    def test_m1_half(self):
        rate, _ = self.rate(1, 4000)
        assert abs(rate - 0.5) < 4 * math.sqrt(0.25 / 4000)

    def test_shifted_emissions_are_early(self):
        cfg = PacketConfig(packet_bits=64)
        rng = np.random.default_rng(0)
        sync = np.zeros(64, np.uint8)
        t = cfg.slot_times(0)
        t0 = t.copy()
        slots = apply_sync_shift(sync, t, 5, cfg.symbol_period, rng)
        assert len(slots) == 5
        assert np.allclose(t0[slots] - t[slots], cfg.symbol_period)
        mask = np.ones(64, bool)
        mask[slots] = False
        assert np.array_equal(t[mask], t0[mask])


class TestAttackStatistics:
    def test_relativistic_unpaired_reference_errors(self, default_packet, default_link):
        eve = EveConfig("usd_block_resend")
        clicks = errors = 0
        for i in range(40):
            lg = run_packet(default_packet, default_link, SEC, eve, 3, i)
            fail = (lg.eve_bits == INCONCLUSIVE) & lg.spd_b
            clicks += fail.sum()
            errors += np.count_nonzero(lg.phm_a[fail] != 1 - lg.phm_b[fail])
        assert clicks > 300
        assert abs(errors / clicks - 0.5) < 4 * math.sqrt(0.25 / clicks)

    def test_relativistic_mixture_qber(self, default_packet, default_link):
        eve = EveConfig("usd_block_resend")
        p = usd_success_prob(SEC)
        tau_e = min(1.0, default_link.line_transmittance / p)
        mu_eve = 0.116 * tau_e / default_link.line_transmittance
        p_a, p_c = anti_click(mu_eve), corr_click(mu_eve)
        det = default_link.detector
        p_ref = 1 - math.exp(-det.efficiency * mu_eve * default_link.interferometer.system_transmittance / 4) * (1 - det.p_dark)
        q = (p * 0.5 * p_c + (1 - p) * 0.5 * p_ref) / (p * 0.5 * (p_a + p_c) + (1 - p) * p_ref)
        stats = [PacketStats.from_ledger(run_packet(default_packet, default_link, SEC, eve, 4, i)) for i in range(60)]
        s = summarize(stats, SEC)
        assert abs(s.qber - q) < 4 * math.sqrt(q * (1 - q) / s.clicks)

    def test_intercept_resend_qber(self, default_packet, default_link):
        eve = EveConfig("intercept_resend")
        p = usd_success_prob(SEC)
        right = p + (1 - p) / 2
        p_a, p_c = anti_click(0.116), corr_click(0.116)
        q = (right * p_c + (1 - right) * p_a) / (p_a + p_c)
        stats = [PacketStats.from_ledger(run_packet(default_packet, default_link, SEC, eve, 6, i)) for i in range(100)]
        s = summarize(stats, SEC)
        assert abs(s.qber - q) < 4 * math.sqrt(q * (1 - q) / s.clicks)

    def test_baseline_eve_knows_every_photon_bit(self, default_packet):
        link = Link(detector=DetectorParams(dark_rate=0.0))
        eve = EveConfig("usd_block_resend", Mode.BASELINE)
        stats = [PacketStats.from_ledger(run_packet(default_packet, link, SEC, eve, 9, i)) for i in range(30)]
        s = summarize(stats, SEC)
        assert s.clicks > 0 and s.eve_known_fraction == 1.0 and s.qber == 0.0
