"""Eavesdropping strategies executed under light-cone enforcement.

Eve sits at ``x_E`` on the channel axis. For every pulse pair she makes two
decisions, one per pulse, each at a definite space-time event. Whatever she
learns from her unambiguous-discrimination (USD) measurement of the data
pulse is only handed to a decision through a :class:`HistoryView`, which
refuses to reveal measurements outside the decision's past light cone and
logs every read. The log becomes the :class:`EveDecisionTrace` that
:func:`validate_trace` audits after each packet.

Relativistic mode: the reference decision happens when the reference passes
Eve, ``dT`` before the data measurement, so it cannot depend on the outcome.

Non-relativistic baseline: Bob does not police arrival times, so Eve can hold
both pulses, measure, and only then decide (the classic B92 USD attack).

Strategies work on whole packets at once (arrays of ``n`` slots); the
per-slot operations of the protocol are the rows of those arrays.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import CausalityViolation, ValidationError
from .keymath import SecurityParams, usd_success_prob
from .spacetime import C, Label, SpacetimeEvent, can_influence_many

INCONCLUSIVE = -1


class Mode(str, enum.Enum):
    RELATIVISTIC = "relativistic"
    BASELINE = "nonrelativistic_baseline"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        text = text.strip().lower()
        if text in ("nonrelativistic", "baseline"):
            return cls.BASELINE
        return cls(text)


class ActionKind(enum.IntEnum):
    PASS = 0
    BLOCK = 1
    RESEND = 2


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    mu: float = 0.0
    phase: float = 0.0

    def __str__(self):
        if self.kind is ActionKind.RESEND:
            return f"resend({self.mu!r}, {self.phase!r})"
        return self.kind.name.lower()


PASS = Action(ActionKind.PASS)
BLOCK = Action(ActionKind.BLOCK)


@dataclass
class ActionBatch:
    """Per-slot actions for one stage of one packet.

    ``bit`` is the phase code of a resent pulse (phase ``bit * phi``); a stage
    resends with a single mean photon number ``mu``.
    """

    kind: np.ndarray
    bit: np.ndarray
    mu: float = 0.0
    phi: float = 0.0

    @classmethod
    def fill(cls, n: int, kind: ActionKind, mu: float = 0.0, phi: float = 0.0) -> "ActionBatch":
        return cls(np.full(n, int(kind), np.int8), np.zeros(n, np.int8), float(mu), float(phi))

    @property
    def phase(self) -> np.ndarray:
        return self.bit * self.phi

    def __len__(self):
        return len(self.kind)

    def __getitem__(self, i) -> Action:
        kind = ActionKind(int(self.kind[i]))
        if kind is ActionKind.RESEND:
            return Action(kind, self.mu, int(self.bit[i]) * self.phi)
        return Action(kind)


@dataclass(frozen=True)
class ReferencePolicy:
    """What a relativistic USD attacker does with the reference: pass, block, or a coin."""

    kind: str = "pass_always"
    p: float = 1.0

    _PATTERN = re.compile(r"^pass_with_prob\(\s*([^)]+)\s*\)$")

    def __post_init__(self):
        if self.kind not in ("pass_always", "block_always", "pass_with_prob"):
            raise ValueError(f"unknown reference policy {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("pass probability must lie in [0, 1]")

    @classmethod
    def parse(cls, text: str) -> "ReferencePolicy":
        text = text.strip()
        if text == "pass_always":
            return cls("pass_always", 1.0)
        if text == "block_always":
            return cls("block_always", 0.0)
        m = cls._PATTERN.match(text)
        if m:
            return cls("pass_with_prob", float(m.group(1)))
        raise ValueError(f"unknown reference policy {text!r}")

    def __str__(self):
        if self.kind == "pass_with_prob":
            return f"pass_with_prob({self.p!r})"
        return self.kind


STRATEGIES = ("honest", "usd_block_resend", "intercept_resend", "sync_shift")


@dataclass(frozen=True)
class EveConfig:
    """Adversary settings.

    ``position`` defaults to mid-channel. ``resend_mu`` defaults to the
    emitted mean (Eve resends the state she identified). ``downstream_transmittance``
    is the transmittance of Eve's own link to Bob's receiver; by default it is
    chosen so Bob's click rate matches an honest run (see
    :func:`matching_transmittance`).
    """

    strategy: str = "honest"
    mode: Mode = Mode.RELATIVISTIC
    position: float | None = None
    resend_mu: float | None = None
    downstream_transmittance: float | None = None
    reference_policy: ReferencePolicy = ReferencePolicy()
    sync_shift_bits: int = 0

    def __post_init__(self):
        bad = []
        if self.strategy not in STRATEGIES:
            bad.append("strategy")
        if self.resend_mu is not None and self.resend_mu < 0:
            bad.append("resend_mu")
        t = self.downstream_transmittance
        if t is not None and not 0 < t <= 1:
            bad.append("downstream_transmittance")
        if self.sync_shift_bits < 0:
            bad.append("sync_shift_bits")
        if bad:
            raise ValidationError(f"invalid eve settings: {', '.join(bad)}", bad)

    def position_in(self, length: float) -> float:
        x = 0.5 * length if self.position is None else self.position
        if not 0 < x < length:
            raise ValidationError(f"eve position {x} outside (0, {length})", ["position"])
        return x


def matching_transmittance(strategy: str, line_transmittance: float, p_usd: float) -> float:
    """Transmittance of Eve's link that reproduces Bob's honest click rate.

    A USD attacker forwards a correct pair in a fraction ``p_usd`` of slots,
    so she needs ``line / p_usd``; the physical cap of 1 is reached exactly
    when the line transmittance exceeds ``p_usd``, the classic loss threshold.
    Strategies that forward a pair in every slot just reproduce the line.
    """
    if strategy == "usd_block_resend":
        if p_usd <= 0:
            return 1.0
        return min(1.0, line_transmittance / p_usd)
    return line_transmittance


# ---------------------------------------------------------------------------
# USD measurement


@dataclass(frozen=True)
class Identified:
    bit: int


def usd_joint_measure(bit: int, params: SecurityParams, rng: np.random.Generator):
    """Optimal USD of |a> vs |e^{i phi} a> encoding ``bit``; never returns a wrong bit.

    Returns :class:`Identified` with probability :func:`usd_success_prob`,
    otherwise ``INCONCLUSIVE``.
    """
    if rng.random() < usd_success_prob(params):
        return Identified(int(bit))
    return INCONCLUSIVE


def usd_measure_batch(bits: np.ndarray, params: SecurityParams, rng: np.random.Generator) -> np.ndarray:
    """Vector form: identified bit (0/1) or ``INCONCLUSIVE`` per slot."""
    out = np.array(bits, dtype=np.int8)
    out[rng.random(len(out)) >= usd_success_prob(params)] = INCONCLUSIVE
    return out


# ---------------------------------------------------------------------------
# Trace and audit


class EveDecisionTrace:
    """Ordered record of Eve's decisions and the events each one read.

    Stored column-wise in chunks (decisions plus a CSR-style read list) so a
    packet of 65536 slots costs a handful of arrays rather than 10^5 Python
    objects.
    """

    def __init__(self):
        self._chunks: list[dict] = []

    def append(self, decision_event: SpacetimeEvent, read_set: Sequence[SpacetimeEvent], action: Action):
        self._chunks.append(
            dict(
                decision_pos=np.array([decision_event.position], float),
                decision_time=np.array([decision_event.time], float),
                kind=np.array([int(action.kind)], np.int8),
                mu=np.array([action.mu], float),
                phase=np.array([action.phase], float),
                read_counts=np.array([len(read_set)], np.int64),
                read_pos=np.array([e.position for e in read_set], float),
                read_time=np.array([e.time for e in read_set], float),
                read_label=np.array([int(e.label) for e in read_set], np.int8),
            )
        )

    def extend(self, decision_pos, decision_time, actions: ActionBatch, read_counts, read_pos, read_time, read_label=None):
        """Append a whole stage; ``read_counts`` may be a boolean mask (one read or none)."""
        self._chunks.append(
            dict(
                decision_pos=decision_pos,
                decision_time=decision_time,
                kind=actions.kind,
                mu=actions.mu,
                bit=actions.bit,
                phi=actions.phi,
                read_counts=read_counts,
                read_pos=read_pos,
                read_time=read_time,
                read_label=int(Label.EVE_MEASUREMENT) if read_label is None else read_label,
            )
        )

    @staticmethod
    def _get(chunk: dict, key: str) -> np.ndarray:
        n = len(chunk["decision_time"])
        if key == "phase" and "phase" not in chunk:
            return chunk["bit"] * chunk["phi"]
        value = chunk[key]
        if key.startswith("read_") and key != "read_counts":
            m = _read_total(chunk["read_counts"])
            dtype = np.int8 if key == "read_label" else float
            return np.broadcast_to(np.asarray(value, dtype), (m,))
        dtype = {"kind": np.int8, "read_counts": np.int64}.get(key, float)
        return np.broadcast_to(np.asarray(value, dtype), (n,))

    def _column(self, key):
        if not self._chunks:
            return np.empty(0, np.int8 if key in ("kind", "read_label") else float)
        return np.concatenate([self._get(c, key) for c in self._chunks])

    def __len__(self):
        return sum(len(c["decision_time"]) for c in self._chunks)

    @property
    def read_offsets(self) -> np.ndarray:
        counts = self._column("read_counts").astype(np.int64)
        return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def columns(self) -> dict:
        keys = ("decision_pos", "decision_time", "kind", "mu", "phase", "read_pos", "read_time", "read_label")
        cols = {k: self._column(k) for k in keys}
        cols["read_offsets"] = self.read_offsets
        return cols

    def decision(self, i: int):
        return self._row(self.columns(), i)

    @staticmethod
    def _row(cols, i):
        event = SpacetimeEvent(float(cols["decision_pos"][i]), float(cols["decision_time"][i]), Label.EVE_DECISION)
        lo, hi = cols["read_offsets"][i], cols["read_offsets"][i + 1]
        reads = [
            SpacetimeEvent(float(cols["read_pos"][j]), float(cols["read_time"][j]), Label(int(cols["read_label"][j])))
            for j in range(lo, hi)
        ]
        kind = ActionKind(int(cols["kind"][i]))
        action = Action(kind, float(cols["mu"][i]), float(cols["phase"][i])) if kind is ActionKind.RESEND else Action(kind)
        return event, reads, action

    def __iter__(self) -> Iterator[tuple[SpacetimeEvent, list[SpacetimeEvent], Action]]:
        cols = self.columns()
        for i in range(len(cols["decision_time"])):
            yield self._row(cols, i)


def _read_total(read_counts) -> int:
    counts = np.asarray(read_counts)
    return int(np.count_nonzero(counts)) if counts.dtype == bool else int(counts.sum())


@dataclass(frozen=True)
class AuditResult:
    ok: bool
    index: int | None = None
    decision: SpacetimeEvent | None = None
    event: SpacetimeEvent | None = None
    decisions_checked: int = 0

    def __str__(self):
        if self.ok:
            return f"ok ({self.decisions_checked} decisions)"
        return (
            f"violation at decision {self.index}: decision at x={self.decision.position!r} m, "
            f"t={self.decision.time * 1e9!r} ns read {self.event.label.text} at "
            f"x={self.event.position!r} m, t={self.event.time * 1e9!r} ns (outside past light cone)"
        )


def validate_trace(trace: EveDecisionTrace) -> AuditResult:
    """Check every read of every decision against the decision's light cone."""
    base = 0
    get = EveDecisionTrace._get
    for chunk in trace._chunks:
        n = len(chunk["decision_time"])
        counts = np.asarray(chunk["read_counts"])
        if counts.dtype == bool:
            owner = np.flatnonzero(counts)
        else:
            owner = np.repeat(np.arange(n), counts.astype(np.int64))
        if len(owner):
            read_time = get(chunk, "read_time")
            dec_time = get(chunk, "decision_time")
            if len(owner) != n:
                dec_time = dec_time[owner]
            if np.ndim(chunk["decision_pos"]) == 0 and np.ndim(chunk["read_pos"]) == 0:
                # one Eve position: the spatial term is a single number
                reach = abs(float(chunk["decision_pos"]) - float(chunk["read_pos"])) / C
                ok = dec_time - read_time >= reach
            else:
                dec_pos = get(chunk, "decision_pos")[owner]
                ok = can_influence_many(get(chunk, "read_pos"), read_time, dec_pos, dec_time)
            if not ok.all():
                j = int(np.argmin(ok))
                i = int(owner[j])
                dec_pos = get(chunk, "decision_pos")
                decision = SpacetimeEvent(float(dec_pos[i]), float(get(chunk, "decision_time")[i]), Label.EVE_DECISION)
                label = Label(int(get(chunk, "read_label")[j]))
                event = SpacetimeEvent(float(get(chunk, "read_pos")[j]), float(read_time[j]), label)
                return AuditResult(False, base + i, decision, event, decisions_checked=base + i + 1)
        base += n
    return AuditResult(True, decisions_checked=base)


# ---------------------------------------------------------------------------
# What a decision may see


class HistoryView:
    """Eve's window onto her own USD results for one decision stage of a packet.

    Slot ``i``'s decision is at ``(x_E, decision_time[i])``; its measurement
    at ``(x_E, measurement_time[i])``. Asking for a measurement outside the
    past light cone raises :class:`CausalityViolation`.
    """

    def __init__(self, position, decision_time, measurement_time, outcomes, params: SecurityParams, config: EveConfig):
        self.position = float(position)
        self.decision_time = np.asarray(decision_time, float)
        self.measurement_time = np.asarray(measurement_time, float)
        self.params = params
        self.config = config
        self._outcomes = outcomes
        self._visible = None
        self._reads = np.zeros(len(self.decision_time), bool)

    def __len__(self):
        return len(self.decision_time)

    def usd_outcomes(self, slots=None) -> np.ndarray:
        """Own-slot USD results (bit or ``INCONCLUSIVE``) for ``slots`` (default all)."""
        if self._outcomes is None:
            raise RuntimeError("this strategy did not request USD measurements")
        if self._visible is None:
            self._visible = can_influence_many(
                self.position, self.measurement_time, self.position, self.decision_time
            )
        idx = slice(None) if slots is None else np.asarray(slots)
        visible = self._visible[idx]
        if not visible.all():
            bad = int(np.arange(len(self))[idx][np.argmin(visible)])
            raise CausalityViolation(
                f"slot {bad}: decision at t={self.decision_time[bad] * 1e9!r} ns cannot see the "
                f"measurement at t={self.measurement_time[bad] * 1e9!r} ns"
            )
        self._reads[idx] = True
        return np.array(self._outcomes[idx])

    @property
    def reads(self) -> np.ndarray:
        return self._reads


class Strategy:
    """Honest pass-through; the base class for all adversaries."""

    name = "honest"
    uses_usd = False

    def __init__(self, config: EveConfig):
        self.config = config

    def step_reference(self, view: HistoryView, rng: np.random.Generator) -> ActionBatch:
        return ActionBatch.fill(len(view), ActionKind.PASS)

    def step_data(self, view: HistoryView, rng: np.random.Generator) -> ActionBatch:
        return ActionBatch.fill(len(view), ActionKind.PASS)

    def sync_shift_bits(self) -> int:
        return 0


def _resend_identified(outcomes: np.ndarray, mu: float, phi: float, data: bool) -> ActionBatch:
    known = outcomes != INCONCLUSIVE
    # BLOCK == 1, RESEND == 2
    kind = known.astype(np.int8) + np.int8(ActionKind.BLOCK)
    bit = np.maximum(outcomes, 0).astype(np.int8) if data else np.zeros(len(outcomes), np.int8)
    return ActionBatch(kind, bit, mu, phi)


class UsdBlockResend(Strategy):
    """Resend what USD identifies, block what it does not.

    In the baseline mode both pulses follow the outcome. In relativistic mode
    the reference has already gone by, so it follows ``reference_policy``.
    """

    name = "usd_block_resend"
    uses_usd = True

    def _mu(self, view):
        return view.params.mu if self.config.resend_mu is None else self.config.resend_mu

    def step_reference(self, view, rng):
        n = len(view)
        if self.config.mode is Mode.BASELINE:
            return _resend_identified(view.usd_outcomes(), self._mu(view), view.params.phi, data=False)
        policy = self.config.reference_policy
        if policy.kind == "pass_always":
            return ActionBatch.fill(n, ActionKind.PASS)
        if policy.kind == "block_always":
            return ActionBatch.fill(n, ActionKind.BLOCK)
        blocked = rng.random(n) >= policy.p
        return ActionBatch(blocked.astype(np.int8), np.zeros(n, np.int8))

    def step_data(self, view, rng):
        return _resend_identified(view.usd_outcomes(), self._mu(view), view.params.phi, data=True)


class InterceptResend(Strategy):
    """USD, then resend a full pair; on an inconclusive result guess the bit."""

    name = "intercept_resend"
    uses_usd = True

    def _mu(self, view):
        return view.params.mu if self.config.resend_mu is None else self.config.resend_mu

    def step_reference(self, view, rng):
        return ActionBatch.fill(len(view), ActionKind.RESEND, self._mu(view), view.params.phi)

    def step_data(self, view, rng):
        n = len(view)
        outcomes = view.usd_outcomes()
        guesses = rng.integers(0, 2, n, dtype=np.int8)
        bits = np.where(outcomes == INCONCLUSIVE, guesses, outcomes).astype(np.int8)
        return ActionBatch(np.full(n, int(ActionKind.RESEND), np.int8), bits, self._mu(view), view.params.phi)


class SyncShift(Strategy):
    """Pass all pulses, but deliver ``m`` sync bits to Alice one slot early."""

    name = "sync_shift"

    def sync_shift_bits(self) -> int:
        return self.config.sync_shift_bits


_REGISTRY = {cls.name: cls for cls in (Strategy, UsdBlockResend, InterceptResend, SyncShift)}


def make_strategy(config: EveConfig) -> Strategy:
    return _REGISTRY[config.strategy](config)


def apply_sync_shift(sync_a: np.ndarray, emit_times: np.ndarray, m: int, symbol_period: float, rng: np.random.Generator):
    """Overwrite ``m`` of Alice's received sync bits with Eve's uniform guesses.

    The guessed bits reach Alice one slot early, so she emits those pulses one
    symbol period ahead of Bob's schedule. Modifies both arrays in place and
    returns the shifted slot indices.
    """
    n = len(sync_a)
    if m <= 0:
        return np.empty(0, np.int64)
    m = min(m, n)
    slots = np.sort(rng.choice(n, size=m, replace=False))
    sync_a[slots] = rng.integers(0, 2, m, dtype=sync_a.dtype)
    emit_times[slots] -= symbol_period
    return slots

