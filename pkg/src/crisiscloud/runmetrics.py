"""Run-log metrics: per-phase event rates and the milestone table.

Rates are computed with exact integer arithmetic over sensor measure
events (the platform's raw input streams); derived traffic is reported
separately.  Milestones check that the first event of a given type (and
attribute filter) landed at exactly the expected simulated time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable

from .model import Event, decode_event
from .scenario import MilestoneSpec, Phase, ScenarioScript

SENSOR_ETYPES = ("RadiationMeasure", "WindSpeedMeasure", "WindDirectionMeasure")


@dataclass
class PhaseRow:
    name: str
    from_ms: int
    to_ms: int
    sensor_events: int
    events_per_min: float
    expected_events_per_min: float | None
    ok: bool


@dataclass
class MilestoneRow:
    name: str
    etype: str
    expected_ts: int
    actual_ts: int | None
    ok: bool
    detail: str = ""


@dataclass
class PhaseMetrics:
    phases: list[PhaseRow]
    milestones: list[MilestoneRow]
    first_ts_by_etype: dict[str, int]
    derived_counts: dict[str, int]
    total_events: int

    def all_ok(self) -> bool:
        return all(p.ok for p in self.phases) and all(m.ok for m in self.milestones)

    def to_dict(self) -> dict:
        return {
            "total_events": self.total_events,
            "phases": [vars(p) for p in self.phases],
            "milestones": [vars(m) for m in self.milestones],
            "first_ts_by_etype": self.first_ts_by_etype,
            "derived_counts": self.derived_counts,
            "all_ok": self.all_ok(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        """Plain-text milestone table, one line per check."""
        lines = []
        lines.append(f"{'phase':<24}{'window (min)':<16}{'events/min':>12}{'expected':>10}  ok")
        for p in self.phases:
            window = f"[{p.from_ms // 60000}, {p.to_ms / 60000:g})"
            expected = "-" if p.expected_events_per_min is None else f"{p.expected_events_per_min:g}"
            rate = f"{p.events_per_min:g}"
            lines.append(f"{p.name:<24}{window:<16}{rate:>12}{expected:>10}  {'PASS' if p.ok else 'FAIL'}")
        lines.append("")
        lines.append(f"{'milestone':<28}{'etype':<28}{'expected':>10}{'actual':>10}  ok")
        for m in self.milestones:
            actual = "-" if m.actual_ts is None else _fmt_t0(m.actual_ts)
            row = f"{m.name:<28}{m.etype:<28}{_fmt_t0(m.expected_ts):>10}{actual:>10}  {'PASS' if m.ok else 'FAIL'}"
            if m.detail and not m.ok:
                row += f"  ({m.detail})"
            lines.append(row)
        return "\n".join(lines)


def _fmt_t0(ts_ms: int) -> str:
    minutes, rem = divmod(ts_ms, 60000)
    return f"t0+{minutes}:{rem // 1000:02d}"


def _attrs_match(event: Event, wanted: dict) -> bool:
    return all(event.attrs.get(k) == v for k, v in wanted.items())


def _phase_rate(events: list[Event], phase: Phase) -> tuple[int, float]:
    count = sum(
        1 for e in events
        if e.etype in SENSOR_ETYPES and phase.from_ms <= e.ts < phase.to_ms
    )
    duration_min = Fraction(phase.to_ms - phase.from_ms, 60000)
    rate = Fraction(count) / duration_min
    return count, (int(rate) if rate.denominator == 1 else float(rate))


def evaluate_milestone(events: list[Event], spec: MilestoneSpec, by_name: dict[str, Event]) -> MilestoneRow:
    hit = next((e for e in events if e.etype == spec.etype and _attrs_match(e, spec.attrs)), None)
    if hit is None:
        return MilestoneRow(spec.name, spec.etype, spec.ts, None, False, "no matching event")
    by_name[spec.name] = hit
    if hit.ts != spec.ts:
        return MilestoneRow(spec.name, spec.etype, spec.ts, hit.ts, False, "wrong time")
    if spec.same_tick_after is not None:
        anchor = by_name.get(spec.same_tick_after)
        if anchor is None:
            return MilestoneRow(spec.name, spec.etype, spec.ts, hit.ts, False, f"anchor {spec.same_tick_after} missing")
        if hit.ts != anchor.ts or hit.seq <= anchor.seq:
            return MilestoneRow(spec.name, spec.etype, spec.ts, hit.ts, False, "not immediately after anchor")
    return MilestoneRow(spec.name, spec.etype, spec.ts, hit.ts, True)


def metrics(events: list[Event], script: ScenarioScript) -> PhaseMetrics:
    """Milestone table plus exact per-phase rates for a (partial) run log."""
    phases = []
    for phase in script.phases:
        count, rate = _phase_rate(events, phase)
        expected = phase.expected_events_per_min
        phases.append(PhaseRow(
            phase.name, phase.from_ms, phase.to_ms, count, rate, expected,
            ok=(expected is None or rate == expected),
        ))
    by_name: dict[str, Event] = {}
    milestone_rows = [evaluate_milestone(events, m, by_name) for m in script.milestones]
    first_ts: dict[str, int] = {}
    derived: dict[str, int] = {}
    for e in events:
        first_ts.setdefault(e.etype, e.ts)
        if e.etype not in SENSOR_ETYPES:
            derived[e.etype] = derived.get(e.etype, 0) + 1
    return PhaseMetrics(phases, milestone_rows, first_ts, derived, len(events))


def read_runlog(source: IO[str] | Iterable[str]) -> list[Event]:
    """Parse a canonical run-log stream back into events."""
    return [decode_event(line) for line in source if line.strip()]
