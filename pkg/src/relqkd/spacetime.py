"""One-dimensional space-time geometry of the Alice -> Bob channel.

Alice sits at x = 0 and Bob at x = L. Light-cone tests always use the vacuum
speed of light, even when the simulated medium is air: the adversary is
granted a vacuum shortcut.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedTranscriptError
from .keymath import SPEED_OF_LIGHT

C = SPEED_OF_LIGHT


class Label(enum.IntEnum):
    PULSE_EMIT = 0
    PULSE_ARRIVE = 1
    SYNC_BIT_SENT = 2
    SYNC_BIT_RECEIVED = 3
    EVE_DECISION = 4
    EVE_MEASUREMENT = 5

    @property
    def text(self) -> str:
        return self.name.lower()

    @classmethod
    def from_text(cls, text: str) -> "Label":
        return cls[text.strip().upper()]


@dataclass(frozen=True)
class SpacetimeEvent:
    position: float  # m
    time: float  # s
    label: Label = Label.EVE_DECISION

    def __post_init__(self):
        if not math.isfinite(self.time):
            raise ValueError("event time must be finite")


@dataclass(frozen=True)
class ChannelGeometry:
    length: float = 180.0
    refractive_index: float = 1.0002804
    admission_tolerance: float = 1e-9
    pulse_separation: float = 20e-9

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("length must be > 0")
        if self.refractive_index < 1:
            raise ValueError("refractive_index must be >= 1")
        if not 0 <= self.admission_tolerance < self.pulse_separation / 2:
            raise ValueError("admission_tolerance must lie in [0, pulse_separation/2)")

    @property
    def vacuum_flight(self) -> float:
        return self.length / C

    @property
    def medium_flight(self) -> float:
        return self.length * self.refractive_index / C


def can_influence(source: SpacetimeEvent, target: SpacetimeEvent) -> bool:
    """True iff ``target`` lies in the closed future light cone of ``source``."""
    return target.time - source.time >= abs(target.position - source.position) / C


def can_influence_many(src_pos, src_time, dst_pos, dst_time) -> np.ndarray:
    """Elementwise :func:`can_influence` over arrays of coordinates."""
    src_pos = np.asarray(src_pos, dtype=float)
    dst_pos = np.asarray(dst_pos, dtype=float)
    dt = np.asarray(dst_time, dtype=float) - np.asarray(src_time, dtype=float)
    return dt >= np.abs(dst_pos - src_pos) / C


def visible_history(
    decision: SpacetimeEvent, events: Iterable[SpacetimeEvent]
) -> list[SpacetimeEvent]:
    """Events able to influence ``decision``, in input order."""
    return [e for e in events if can_influence(e, decision)]


class Admission(enum.Enum):
    ACCEPT = "accept"
    IGNORE = "ignore"


def admission_check(
    scheduled_emission: float, actual_arrival: float, geom: ChannelGeometry
) -> Admission:
    """Bob's timing rule: anything later than vacuum flight plus tolerance is ignored."""
    if actual_arrival <= scheduled_emission + geom.vacuum_flight + geom.admission_tolerance:
        return Admission.ACCEPT
    return Admission.IGNORE


def admitted_many(scheduled_emission, actual_arrival, geom: ChannelGeometry) -> np.ndarray:
    deadline = np.asarray(scheduled_emission) + (geom.vacuum_flight + geom.admission_tolerance)
    return np.asarray(actual_arrival) <= deadline


def verify_sync_transcript(
    send_events: Sequence[SpacetimeEvent],
    receive_events: Sequence[SpacetimeEvent],
    geom: ChannelGeometry,
) -> bool:
    """False if any sync bit arrived sooner than light could carry it.

    A ``False`` result means the simulation itself is inconsistent; it is not
    the bitwise comparison Alice and Bob run after a packet.
    """
    if len(send_events) != len(receive_events):
        raise MalformedTranscriptError(
            f"transcript length mismatch: {len(send_events)} sent, {len(receive_events)} received"
        )
    flight = geom.vacuum_flight
    return all(r.time >= s.time + flight for s, r in zip(send_events, receive_events))


def verify_sync_times(send_times, receive_times, geom: ChannelGeometry) -> bool:
    """Array form of :func:`verify_sync_transcript`."""
    send_times = np.asarray(send_times)
    receive_times = np.asarray(receive_times)
    if send_times.shape != receive_times.shape:
        raise MalformedTranscriptError("transcript length mismatch")
    return bool(np.all(receive_times >= send_times + geom.vacuum_flight))


@dataclass
class EventBatch:
    """Column-oriented block of events; the simulator logs whole packets this way."""

    label: np.ndarray
    position: np.ndarray
    time: np.ndarray

    @classmethod
    def empty(cls) -> "EventBatch":
        return cls(np.empty(0, np.int8), np.empty(0), np.empty(0))

    @classmethod
    def of(cls, label: Label, position, time) -> "EventBatch":
        time = np.asarray(time, dtype=float)
        pos = np.broadcast_to(np.asarray(position, dtype=float), time.shape).copy()
        return cls(np.full(time.shape, int(label), np.int8), pos, time)

    @classmethod
    def concat(cls, batches: Sequence["EventBatch"]) -> "EventBatch":
        if not batches:
            return cls.empty()
        return cls(
            np.concatenate([b.label for b in batches]),
            np.concatenate([b.position for b in batches]),
            np.concatenate([b.time for b in batches]),
        )

    def __len__(self) -> int:
        return len(self.time)

    def __iter__(self):
        for lab, x, t in zip(self.label, self.position, self.time):
            yield SpacetimeEvent(float(x), float(t), Label(int(lab)))


def format_events(events: Iterable[SpacetimeEvent]) -> str:
    """One event per line: ``label, position_m, time_ns``."""
    lines = [f"{e.label.text}, {e.position!r}, {e.time * 1e9!r}" for e in events]
    return "\n".join(lines) + ("\n" if lines else "")


def parse_events(text: str) -> list[SpacetimeEvent]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        label, pos, t_ns = (part.strip() for part in line.split(","))
        out.append(SpacetimeEvent(float(pos), float(t_ns) * 1e-9, Label.from_text(label)))
    return out
