"""CSV and ``key: value`` text formats.

Floats are written with ``repr`` so every value parses back exactly.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import fields
from typing import Iterable

from ..feedback import CSV_FIELDS as FEEDBACK_FIELDS
from ..feedback import CycleReport
from ..protocol import PacketStats, RunSummary

PACKET_FIELDS = ("packet_index", "kept", "clicks", "errors", "qber")
SWEEP_FIELDS = (
    "mu",
    "clicks_per_pulse",
    "qber",
    "qber_ci_low",
    "qber_ci_high",
    "chi",
    "h_qber",
    "secret_fraction",
    "secret_bits_per_packet",
    "critical_qber",
)


def _cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def packets_csv(packets: Iterable[PacketStats]) -> str:
    return _write(PACKET_FIELDS, ((p.index, p.kept, p.clicks, p.errors, p.qber) for p in packets))


def sweep_csv(summaries: Iterable[RunSummary]) -> str:
    return _write(SWEEP_FIELDS, ([getattr(s, k) for k in SWEEP_FIELDS] for s in summaries))


def feedback_csv(reports: Iterable[CycleReport]) -> str:
    return _write(FEEDBACK_FIELDS, ([getattr(r, k) for k in FEEDBACK_FIELDS] for r in reports))


def read_csv(text: str) -> tuple[list[str], list[dict[str, float]]]:
    """Parse one of the CSVs above back into numbers."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    rows = [{k: float(v) for k, v in zip(header, row)} for row in reader]
    return header, rows


def summary_text(summary: RunSummary) -> str:
    lines = []
    for f in fields(summary):
        lines.append(f"{f.name}: {_cell(getattr(summary, f.name))}")
    lines.append(f"packets_kept: {summary.packets_kept}")
    return "\n".join(lines) + "\n"


def parse_summary(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition(":")
            out[key.strip()] = value.strip()
    return out


def same_value(a: float, b: float) -> bool:
    return (math.isnan(a) and math.isnan(b)) or a == b
