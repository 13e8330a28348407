"""Alice and Bob: synchronized packet transmission, sifting and rate estimation.

A packet is simulated slot-parallel with numpy, but in causal order stage by
stage: Bob's sync bits, Alice's emissions, Eve's reference decisions, Eve's
data decisions, Bob's admission check and detection. Every emission, arrival
and adversary decision has a definite space-time coordinate.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable

import numpy as np

from . import streams
from .adversary import (
    INCONCLUSIVE,
    ActionKind,
    AuditResult,
    EveConfig,
    EveDecisionTrace,
    HistoryView,
    Mode,
    Strategy,
    apply_sync_shift,
    make_strategy,
    matching_transmittance,
    usd_measure_batch,
    validate_trace,
)
from .errors import CausalityViolation, MalformedTranscriptError, SimulationModelError, ValidationError
from .keymath import (
    SecurityParams,
    binary_entropy,
    critical_qber,
    holevo_bound,
    secret_fraction,
    usd_success_prob,
)
from .photonics import (
    DetectorParams,
    InterferometerParams,
    bernoulli_indices,
    interference_mean,
    photon_click_probability,
)
from .spacetime import C, ChannelGeometry, EventBatch, Label, admitted_many

Z95 = NormalDist().inv_cdf(0.975)


@dataclass(frozen=True)
class PacketConfig:
    packet_bits: int = 65536
    symbol_rate: float = 25e6
    symbol_duration: float = 10e-9
    pulse_separation: float = 20e-9
    cycle_duration: float = 16e-3
    calibration_windows: tuple[float, float] = (4e-3, 4e-3)
    phase_depth: float = 0.8 * math.pi

    def __post_init__(self):
        bad = []
        if self.packet_bits < 0:
            bad.append("packet_bits")
        if self.symbol_rate <= 0:
            bad.append("symbol_rate")
        if self.symbol_duration <= 0:
            bad.append("symbol_duration")
        if self.pulse_separation <= self.symbol_duration:
            bad.append("pulse_separation")
        if len(self.calibration_windows) != 2 or min(self.calibration_windows) < 0:
            bad.append("calibration_windows")
        elif self.symbol_rate > 0 and sum(self.calibration_windows) + self.packet_duration > self.cycle_duration:
            bad.append("cycle_duration")
        if not 0 < self.phase_depth <= math.pi:
            bad.append("phase_depth")
        if bad:
            raise ValidationError(f"invalid packet settings: {', '.join(bad)}", bad)

    @property
    def symbol_period(self) -> float:
        return 1.0 / self.symbol_rate

    @property
    def packet_duration(self) -> float:
        return self.packet_bits / self.symbol_rate

    def packet_start(self, cycle_index: int) -> float:
        """QKD slots start after both calibration windows of their 16 ms cycle."""
        return cycle_index * self.cycle_duration + sum(self.calibration_windows)

    def slot_times(self, cycle_index: int) -> np.ndarray:
        return self.packet_start(cycle_index) + np.arange(self.packet_bits, dtype=float) / self.symbol_rate


@dataclass(frozen=True)
class Link:
    """Everything physical between Alice's attenuator and Bob's detector."""

    geometry: ChannelGeometry = ChannelGeometry()
    detector: DetectorParams = DetectorParams()
    interferometer: InterferometerParams = InterferometerParams()
    line_transmittance: float = 10 ** (-1.3)

    def __post_init__(self):
        if not 0 < self.line_transmittance <= 1:
            raise ValidationError("line_transmittance must lie in (0, 1]", ["line_transmittance"])
        if self.line_transmittance < self.interferometer.system_transmittance:
            raise ValidationError(
                "line_transmittance must be >= system_transmittance (receiver cannot have gain)",
                ["line_transmittance"],
            )

    @property
    def receiver_transmittance(self) -> float:
        return self.interferometer.system_transmittance / self.line_transmittance


class SyncVerdict(enum.Enum):
    KEEP = "keep"
    DISCARD = "discard"


class Handshake(enum.Enum):
    PROCEED = "proceed"
    ABORT = "abort"


def run_handshake(alice_ready: bool, bob_ready: bool) -> Handshake:
    """Bob's request code and Alice's acknowledgment: go only if both are ready."""
    return Handshake.PROCEED if alice_ready and bob_ready else Handshake.ABORT


@dataclass
class PacketLedger:
    """The five protocol buffers of one packet, plus timing and bookkeeping.

    ``eve_bits`` holds what Eve learned per slot (bit or -1); ``None`` when no
    measurement took place. ``events`` is filled only when requested.
    """

    phm_a: np.ndarray
    sync_a: np.ndarray
    phm_b: np.ndarray
    sync_b: np.ndarray
    spd_b: np.ndarray
    slot_times: np.ndarray
    index: int = 0
    eve_bits: np.ndarray | None = None
    audit: AuditResult | None = None
    trace: EveDecisionTrace | None = None
    events: EventBatch | None = None


def compare_sync(ledger: PacketLedger) -> SyncVerdict:
    if len(ledger.sync_a) != len(ledger.sync_b):
        raise MalformedTranscriptError("SYNC_A and SYNC_B differ in length")
    return SyncVerdict.KEEP if np.array_equal(ledger.sync_a, ledger.sync_b) else SyncVerdict.DISCARD


def sift(ledger: PacketLedger) -> tuple[np.ndarray, np.ndarray]:
    """Keep clicked slots; Alice keeps PHM_A, Bob keeps NOT PHM_B."""
    clicked = np.asarray(ledger.spd_b, bool)
    alice = np.asarray(ledger.phm_a)[clicked].astype(np.uint8)
    bob = (1 - np.asarray(ledger.phm_b)[clicked]).astype(np.uint8)
    return alice, bob


@dataclass(frozen=True)
class QberEstimate:
    errors: int
    length: int
    qber: float  # nan when length == 0
    ci_low: float
    ci_high: float

    @property
    def no_data(self) -> bool:
        return self.length == 0


def wilson_interval(errors: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n == 0:
        return (math.nan, math.nan)
    p = errors / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def qber_from_counts(errors: int, n: int) -> QberEstimate:
    if n == 0:
        return QberEstimate(0, 0, math.nan, math.nan, math.nan)
    low, high = wilson_interval(errors, n)
    if errors == 0:
        low = 0.0
    return QberEstimate(errors, n, errors / n, low, high)


def estimate_qber(alice_key, bob_key) -> QberEstimate:
    """Hamming-distance QBER with a 95% Wilson score interval."""
    a = np.asarray(alice_key)
    b = np.asarray(bob_key)
    if a.shape != b.shape:
        raise MalformedTranscriptError("keys differ in length")
    return qber_from_counts(int(np.count_nonzero(a != b)), len(a))


# ---------------------------------------------------------------------------
# The packet engine


def _bits(rng: np.random.Generator, n: int) -> np.ndarray:
    raw = np.frombuffer(rng.bytes((n + 7) // 8), np.uint8)
    return np.unpackbits(raw, count=n)


@functools.lru_cache(maxsize=256)
def _photon_table(mu_ref: tuple, mu_data: tuple, phi: float, link: Link) -> np.ndarray:
    """Photon-click probability per slot category ``(ref_kind * 3 + data_kind) * 4 + m + 1``.

    ``mu_*`` are the means reaching Bob per action kind (pass, block, resend);
    ``m`` in {-1, 0, 1, 2} is the net phase code between the two pulses after
    Bob's modulation, so the relative phase is ``m * phi + bias``.
    """
    ifc = link.interferometer
    tau_rx = link.receiver_transmittance
    rk, dk, m = np.meshgrid(np.arange(3), np.arange(3), np.arange(-1, 3), indexing="ij")
    a = np.asarray(mu_ref, float)[rk] * tau_rx
    b = np.asarray(mu_data, float)[dk] * tau_rx
    dark_port = interference_mean(a, b, m * phi + ifc.bias_phase, ifc.visibility)
    table = np.ravel(photon_click_probability(dark_port, link.detector))
    table.flags.writeable = False
    return table


def run_packet(
    config: PacketConfig,
    link: Link,
    security: SecurityParams,
    eve: EveConfig,
    seed: int,
    index: int = 0,
    *,
    strategy: Strategy | None = None,
    record_events: bool = False,
    keep_trace: bool = False,
) -> PacketLedger:
    """Simulate one packet of ``config.packet_bits`` slots.

    ``strategy`` overrides the one named in ``eve`` (used for test doubles).
    Raises :class:`CausalityViolation` if Eve's trace fails the audit.

    Detection is sampled as two independent processes: dark counts, whose
    draws do not depend on the optical settings, and photon clicks, thinned
    from a uniform candidate rate. Runs that differ only in ``mu`` therefore
    share their dark counts.
    """
    if not math.isclose(config.phase_depth, security.phi, rel_tol=1e-12):
        raise ValidationError("phase_depth and security phi disagree", ["phase_depth"])
    n = config.packet_bits
    geom = link.geometry
    L = geom.length
    n_air = geom.refractive_index
    dT = config.pulse_separation
    phi = security.phi
    mu = security.mu
    strategy = strategy or make_strategy(eve)
    x_e = eve.position_in(L)

    slot_t = config.slot_times(index)
    phm_a = _bits(streams.stream(seed, streams.ALICE_BITS, index), n)
    phm_b = _bits(streams.stream(seed, streams.BOB_BITS, index), n)
    sync_b = _bits(streams.stream(seed, streams.SYNC_BITS, index), n)

    # Bob paces each sync bit so it reaches Alice over the air at its slot time.
    sync_flight = L * n_air / C
    if sync_flight < geom.vacuum_flight:
        raise SimulationModelError("sync transcript faster than light")
    sync_a = sync_b.copy()
    emit_t = slot_t
    m_shift = strategy.sync_shift_bits()
    if m_shift > 0:
        emit_t = slot_t.copy()
        shift_rng = streams.stream(seed, streams.EVE, index, 2)
        apply_sync_shift(sync_a, emit_t, m_shift, config.symbol_period, shift_rng)

    # Eve's events: the pulses pass x_E at these times.
    ref_transit = emit_t + x_e * n_air / C
    data_transit = ref_transit + dT
    outcomes = None
    if strategy.uses_usd:
        outcomes = usd_measure_batch(phm_a, security, streams.stream(seed, streams.EVE, index, 0))
    strat_rng = streams.stream(seed, streams.EVE, index, 1)

    baseline = eve.mode is Mode.BASELINE
    ref_decision_t = data_transit if baseline else ref_transit
    ref_view = HistoryView(x_e, ref_decision_t, data_transit, outcomes, security, eve)
    ref_act = strategy.step_reference(ref_view, strat_rng)
    data_view = HistoryView(x_e, data_transit, data_transit, outcomes, security, eve)
    data_act = strategy.step_data(data_view, strat_rng)

    trace = EveDecisionTrace()
    for view, acts in ((ref_view, ref_act), (data_view, data_act)):
        reads = view.reads
        trace.extend(
            decision_pos=x_e,
            decision_time=view.decision_time,
            actions=acts,
            read_counts=reads,
            read_pos=x_e,
            read_time=view.measurement_time[reads],
        )
    audit = validate_trace(trace)
    if not audit.ok:
        raise CausalityViolation(audit)

    # What leaves Eve towards Bob; her forwarding hop is at vacuum speed.
    tau_e = eve.downstream_transmittance
    if tau_e is None:
        tau_e = matching_transmittance(strategy.name, link.line_transmittance, usd_success_prob(security))
    hop = (L - x_e) / C
    data_delay = dT if baseline else 0.0
    table = _photon_table(
        (mu * tau_e, 0.0, ref_act.mu * tau_e),
        (mu * tau_e, 0.0, data_act.mu * tau_e),
        phi,
        link,
    )

    det = link.detector
    dark = bernoulli_indices(n, det.p_dark, streams.stream(seed, streams.DETECTOR, index, 0))
    photon_rng = streams.stream(seed, streams.DETECTOR, index, 1)
    p_max = float(table.max())
    cand = bernoulli_indices(n, p_max, photon_rng)
    accept_u = photon_rng.random(len(cand))

    # Slot categories are only needed where a photon click is possible.
    ref_kind = ref_act.kind[cand]
    data_kind = data_act.kind[cand]
    if not baseline:
        ref_ok = admitted_many(slot_t[cand], ref_decision_t[cand] + hop, geom)
        data_ok = admitted_many(slot_t[cand] + dT, data_transit[cand] + hop, geom)
        ref_kind = np.where(ref_ok, ref_kind, np.int8(ActionKind.BLOCK))
        data_kind = np.where(data_ok, data_kind, np.int8(ActionKind.BLOCK))
    resend = ActionKind.RESEND
    ref_code = np.where(ref_kind == resend, ref_act.bit[cand], 0)
    data_code = np.where(data_kind == resend, data_act.bit[cand], phm_a[cand])
    m = phm_b[cand].astype(np.intp) + ref_code - data_code
    category = (ref_kind.astype(np.intp) * 3 + data_kind) * 4 + m + 1
    photon = cand[accept_u * p_max < table[category]]

    spd_b = np.zeros(n, bool)
    spd_b[dark] = True
    spd_b[photon] = True

    events = None
    if record_events:
        ref_arrive = ref_decision_t + hop
        data_arrive = data_transit + data_delay + hop
        ref_present = ref_act.kind != ActionKind.BLOCK
        data_present = data_act.kind != ActionKind.BLOCK
        if not baseline:
            ref_present &= admitted_many(slot_t, ref_arrive, geom)
            data_present &= admitted_many(slot_t + dT, data_arrive, geom)
        events = EventBatch.concat(
            [
                EventBatch.of(Label.SYNC_BIT_SENT, L, slot_t - sync_flight),
                EventBatch.of(Label.SYNC_BIT_RECEIVED, 0.0, emit_t),
                EventBatch.of(Label.PULSE_EMIT, 0.0, emit_t),
                EventBatch.of(Label.PULSE_EMIT, 0.0, emit_t + dT),
                EventBatch.of(Label.EVE_MEASUREMENT, x_e, data_transit) if outcomes is not None else EventBatch.empty(),
                EventBatch.of(Label.EVE_DECISION, x_e, ref_decision_t),
                EventBatch.of(Label.EVE_DECISION, x_e, data_transit),
                EventBatch.of(Label.PULSE_ARRIVE, L, ref_arrive[ref_present]),
                EventBatch.of(Label.PULSE_ARRIVE, L, data_arrive[data_present]),
            ]
        )

    return PacketLedger(
        phm_a=phm_a,
        sync_a=sync_a,
        phm_b=phm_b,
        sync_b=sync_b,
        spd_b=spd_b,
        slot_times=slot_t,
        index=index,
        eve_bits=outcomes,
        audit=audit,
        trace=trace if keep_trace else None,
        events=events,
    )


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class PacketStats:
    """Per-packet aggregates; what a run keeps once the buffers are dropped."""

    index: int
    kept: bool
    clicks: int
    errors: int
    eve_known: int = 0

    @property
    def qber(self) -> float:
        return self.errors / self.clicks if self.clicks else math.nan

    @classmethod
    def from_ledger(cls, ledger: PacketLedger) -> "PacketStats":
        clicks = int(np.count_nonzero(ledger.spd_b))
        if compare_sync(ledger) is SyncVerdict.DISCARD:
            return cls(ledger.index, False, clicks, 0, 0)
        alice, bob = sift(ledger)
        errors = int(np.count_nonzero(alice != bob))
        known = 0
        if ledger.eve_bits is not None:
            known = int(np.count_nonzero(ledger.eve_bits[np.asarray(ledger.spd_b, bool)] != INCONCLUSIVE))
        return cls(ledger.index, True, clicks, errors, known)


@dataclass(frozen=True)
class RunSummary:
    packets_total: int
    packets_discarded: int
    clicks: int
    sifted_length: int
    errors: int
    qber: float
    qber_ci_low: float
    qber_ci_high: float
    chi: float
    secret_fraction: float
    secret_bits_per_packet: float
    raw_rate_in_packet: float
    mu: float = math.nan
    phi: float = math.nan
    h_qber: float = math.nan
    critical_qber: float = math.nan
    clicks_per_pulse: float = math.nan
    secret_rate_in_packet: float = math.nan
    eve_known_fraction: float = math.nan
    average_raw_rate: float = math.nan
    no_data: bool = False

    @property
    def packets_kept(self) -> int:
        return self.packets_total - self.packets_discarded


def summarize(
    packets: Iterable[PacketLedger | PacketStats],
    params: SecurityParams,
    config: PacketConfig = PacketConfig(),
    exchange_packet_rate: float = 2.0,
) -> RunSummary:
    """Aggregate kept packets into the run-level quantities.

    Returns a summary with ``no_data=True`` when nothing was kept or nothing
    was sifted.
    """
    stats = [p if isinstance(p, PacketStats) else PacketStats.from_ledger(p) for p in packets]
    kept = [s for s in stats if s.kept]
    chi = holevo_bound(params)
    crit = critical_qber(params)
    total = len(stats)
    discarded = total - len(kept)
    clicks = sum(s.clicks for s in kept)
    errors = sum(s.errors for s in kept)
    known = sum(s.eve_known for s in kept)
    if not kept:
        return RunSummary(
            total, discarded, 0, 0, 0, math.nan, math.nan, math.nan, chi, math.nan, 0.0, 0.0,
            mu=params.mu, phi=params.phi, critical_qber=crit, no_data=True,
        )
    q = qber_from_counts(errors, clicks)
    per_packet = clicks / len(kept)
    raw_rate = per_packet * config.symbol_rate / config.packet_bits if config.packet_bits else 0.0
    if q.no_data:
        r = math.nan
        bits = 0.0
        hq = math.nan
    else:
        hq = binary_entropy(q.qber)
        r = secret_fraction(params, q.qber)
        bits = max(0.0, r) * per_packet
    return RunSummary(
        packets_total=total,
        packets_discarded=discarded,
        clicks=clicks,
        sifted_length=clicks,
        errors=errors,
        qber=q.qber,
        qber_ci_low=q.ci_low,
        qber_ci_high=q.ci_high,
        chi=chi,
        secret_fraction=r,
        secret_bits_per_packet=bits,
        raw_rate_in_packet=raw_rate,
        mu=params.mu,
        phi=params.phi,
        h_qber=hq,
        critical_qber=crit,
        clicks_per_pulse=clicks / (len(kept) * config.packet_bits) if config.packet_bits else math.nan,
        secret_rate_in_packet=bits * config.symbol_rate / config.packet_bits if config.packet_bits else 0.0,
        eve_known_fraction=known / clicks if clicks else math.nan,
        average_raw_rate=per_packet * exchange_packet_rate,
        no_data=q.no_data,
    )
