"""Complex-event-processing engine for the crisis business rules.

Consumes the ordered event stream, keeps per-sensor sliding windows, and
derives alerts and reports:

* radiation alert — latest dose rate above the hard ceiling, or above the
  lower bound while the fitted trend exceeds the slope limit;
* wind alert — speed or direction changed too drastically inside a short
  window (extremal change, not a fitted slope);
* confinement suggestion — three or more distinct sensors above the
  ceiling within the trailing five minutes;
* cascades — a confinement decision alerts the police representative, a
  validated confinement plan alerts the office of infrastructure;
* periodic report — per-sensor radiation series over the last five
  minutes, emitted every five minutes;
* legislative zone classification from dose rate and cumulative dose.

The engine must be driven by a single logical consumer: events arrive in
non-decreasing ts order and on_tick fires at simulated-minute boundaries.
Derived events carry ts = now and source = "dcep".
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

from .model import Event, make_event
from .patterns import Pattern

DCEP_SOURCE = "dcep"

MINUTE_MS = 60_000


class OutOfOrder(ValueError):
    """Event timestamp regressed beyond the configured slack."""


class InsufficientSamples(ValueError):
    """Slope estimation needs at least two samples with distinct timestamps."""


class ZoneClass(str, Enum):
    """Legislative barrier classes, lowest to highest severity."""

    NORMAL = "normal"
    CONTROL_ZONE = "control_zone"
    CONFINE_AND_IODINE = "confine_and_iodine"
    EVACUATE = "evacuate"


_ZONE_ORDER = [ZoneClass.NORMAL, ZoneClass.CONTROL_ZONE, ZoneClass.CONFINE_AND_IODINE, ZoneClass.EVACUATE]


@dataclass(frozen=True)
class Thresholds:
    """Rule constants; dose rates in mSv/h, cumulative dose in mSv.

    slope_limit is mSv/h per minute; wind_speed_delta km/h per window;
    wind_direction_delta degrees per window.
    """

    v_plus: float = 2.0
    v_minus: float = 1.0
    slope_limit: float = 0.2
    wind_speed_delta: float = 30.0
    wind_direction_delta: float = 45.0
    control_zone: float = 0.025
    evac_cumulative: float = 50.0

    def __post_init__(self):
        if not (self.v_plus > self.v_minus > 0):
            raise ValueError(f"need v_plus > v_minus > 0, got {self.v_plus}, {self.v_minus}")
        for name in ("slope_limit", "wind_speed_delta", "wind_direction_delta", "control_zone", "evac_cumulative"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class CepConfig:
    """Engine tuning; every field has a scenario-file override."""

    thresholds: Thresholds = field(default_factory=Thresholds)
    radiation_window_ms: int = 240_000
    wind_window_ms: int = 120_000
    report_period_ms: int = 300_000
    confinement_window_ms: int = 300_000
    confinement_min_sources: int = 3
    sar_period_ms: int = 600_000
    suppression_ms: int = 300_000
    out_of_order_slack_ms: int = 0


class SensorWindow:
    """Trailing (ts, value) samples for one source, pruned to window_ms."""

    __slots__ = ("window_ms", "samples")

    def __init__(self, window_ms: int):
        self.window_ms = window_ms
        self.samples: list[tuple[int, float]] = []

    def add(self, ts: int, value: float, now: int) -> None:
        self.samples.append((ts, value))
        self.prune(now)

    def prune(self, now: int) -> None:
        cutoff = now - self.window_ms
        i = 0
        samples = self.samples
        while i < len(samples) and samples[i][0] < cutoff:
            i += 1
        if i:
            del samples[:i]

    def span_ms(self) -> int:
        if not self.samples:
            return 0
        return self.samples[-1][0] - self.samples[0][0]

    def latest(self) -> float | None:
        return self.samples[-1][1] if self.samples else None

    def values(self) -> list[float]:
        return [v for _, v in self.samples]


def estimate_slope(samples: Sequence[tuple[int, float]], min_span_ms: int | None = None) -> float | None:
    """Ordinary-least-squares slope in value units per minute.

    Returns None (undefined) while the sample span is shorter than
    min_span_ms — the warm-up rule that keeps a half-filled window from
    triggering trend alerts.  Raises InsufficientSamples below two samples
    or when all timestamps coincide.
    """
    if len(samples) < 2:
        raise InsufficientSamples(f"need >= 2 samples, got {len(samples)}")
    ts_first = samples[0][0]
    if all(ts == ts_first for ts, _ in samples):
        raise InsufficientSamples("all samples share one timestamp")
    if min_span_ms is not None:
        span = max(ts for ts, _ in samples) - min(ts for ts, _ in samples)
        if span < min_span_ms:
            return None
    xs = [ts / MINUTE_MS for ts, _ in samples]
    ys = [v for _, v in samples]
    n = len(samples)
    x_mean = math.fsum(xs) / n
    y_mean = math.fsum(ys) / n
    sxy = math.fsum((x - x_mean) * (y - y_mean) for x, y in zip(xs, ys))
    sxx = math.fsum((x - x_mean) ** 2 for x in xs)
    return sxy / sxx


def circular_span_deg(angles: Sequence[float]) -> float:
    """Smallest arc (degrees) containing every angle; 0 for <= 1 sample."""
    if len(angles) <= 1:
        return 0.0
    norm = sorted(a % 360.0 for a in angles)
    max_gap = norm[0] + 360.0 - norm[-1]
    for a, b in zip(norm, norm[1:]):
        max_gap = max(max_gap, b - a)
    return 360.0 - max_gap


def radiation_rule_fires(value: float, slope: float | None, th: Thresholds) -> bool:
    """The radiation alert predicate on an extracted (value, slope) pair."""
    if value > th.v_plus:
        return True
    return value > th.v_minus and slope is not None and slope > th.slope_limit


def wind_rule_fires(speed_delta: float, direction_span: float, th: Thresholds) -> bool:
    """The wind alert predicate on within-window extremal changes."""
    return speed_delta > th.wind_speed_delta or direction_span > th.wind_direction_delta


def classify_barrier(dose_rate: float, cumulative_dose: float, th: Thresholds) -> ZoneClass:
    """Highest applicable legislative class; cumulative dose dominates."""
    if dose_rate < 0 or cumulative_dose < 0:
        raise ValueError("doses must be >= 0")
    if cumulative_dose > th.evac_cumulative:
        return ZoneClass.EVACUATE
    if dose_rate > th.v_plus:
        return ZoneClass.CONFINE_AND_IODINE
    if dose_rate > th.control_zone:
        return ZoneClass.CONTROL_ZONE
    return ZoneClass.NORMAL


def zone_severity(zone: ZoneClass) -> int:
    return _ZONE_ORDER.index(zone)


def eval_radiation_rule(
    sensor_id: str,
    window: SensorWindow,
    th: Thresholds,
    min_span_ms: int | None = None,
) -> dict | None:
    """Evaluate the radiation rule against one sensor's window.

    Returns the alert payload (sensor, value, slope) or None.  Suppression
    is the engine's job; this function is pure on the window contents.
    """
    value = window.latest()
    if value is None:
        return None
    if value <= th.v_minus:
        return None  # neither disjunct can fire; skip the fit
    slope: float | None
    try:
        slope = estimate_slope(window.samples, min_span_ms)
    except InsufficientSamples:
        slope = None
    if not radiation_rule_fires(value, slope, th):
        return None
    payload: dict = {"sensor": sensor_id, "value": value}
    if slope is not None:
        payload["slope"] = slope
    return payload


def eval_wind_rule(
    station_id: str,
    speed_window: SensorWindow,
    direction_window: SensorWindow,
    th: Thresholds,
) -> dict | None:
    """Evaluate the wind rule against one station's speed/direction windows."""
    speeds = speed_window.values()
    speed_delta = (max(speeds) - min(speeds)) if len(speeds) >= 2 else 0.0
    direction_span = circular_span_deg(direction_window.values())
    if not wind_rule_fires(speed_delta, direction_span, th):
        return None
    return {"station": station_id, "speed_delta": speed_delta, "direction_span": direction_span}


def eval_cascade(event: Event, make_id: Callable[[], str] | None = None) -> Event | None:
    """Decision/plan cascades: a pure function of etype and attrs.

    ConfinementDecision -> AlertPoliceRepresentative;
    ConfinementPlanValidated -> AlertOfficeOfInfrastructure carrying the
    plan attributes verbatim.  At most one output per input.
    """
    if event.etype == "ConfinementDecision":
        attrs = dict(event.attrs)
        attrs["decision_id"] = event.id
        return make_event(
            "AlertPoliceRepresentative", DCEP_SOURCE, event.ts, attrs,
            event_id=make_id() if make_id else None,
        )
    if event.etype == "ConfinementPlanValidated":
        attrs = dict(event.attrs)
        attrs["plan_event_id"] = event.id
        return make_event(
            "AlertOfficeOfInfrastructure", DCEP_SOURCE, event.ts, attrs,
            event_id=make_id() if make_id else None,
        )
    return None


HistoryFn = Callable[[int, int, Pattern], list[Event]]


class Engine:
    """Stateful rule engine over one serialized event stream.

    ``history`` serves the windowed queries (confinement trigger, periodic
    report); ``sar_hook``, when set, is invoked at each 10-minute boundary
    with now and must return the adaptation events to merge into the tick
    output.  ``make_id`` keeps derived-event ids deterministic in replays.
    """

    def __init__(
        self,
        config: CepConfig | None = None,
        history: HistoryFn | None = None,
        sar_hook: Callable[[int], list[Event]] | None = None,
        make_id: Callable[[], str] | None = None,
    ):
        self.config = config or CepConfig()
        self.history = history
        self.sar_hook = sar_hook
        self.make_id = make_id
        self._radiation: dict[str, SensorWindow] = {}
        self._wind_speed: dict[str, SensorWindow] = {}
        self._wind_dir: dict[str, SensorWindow] = {}
        self._last_alert: dict[tuple[str, str], int] = {}
        self._last_ts: int | None = None

    # -- stream consumption -------------------------------------------------

    def on_event(self, event: Event, now: int) -> list[Event]:
        """Feed one event; returns the derived events it produced."""
        if self._last_ts is not None and event.ts < self._last_ts - self.config.out_of_order_slack_ms:
            raise OutOfOrder(f"ts {event.ts} after {self._last_ts} (slack {self.config.out_of_order_slack_ms})")
        self._last_ts = max(self._last_ts or 0, event.ts)
        out: list[Event] = []
        if event.etype == "RadiationMeasure":
            alert = self._on_radiation(event, now)
            if alert:
                out.append(alert)
        elif event.etype in ("WindSpeedMeasure", "WindDirectionMeasure"):
            alert = self._on_wind(event, now)
            if alert:
                out.append(alert)
        else:
            cascade = eval_cascade(event, self.make_id)
            if cascade is not None:
                out.append(replace(cascade, ts=now))
        return out

    def on_tick(self, now: int) -> list[Event]:
        """Minute-boundary housekeeping: reports, confinement check, SAR."""
        cfg = self.config
        out: list[Event] = []
        if now > 0 and now % cfg.report_period_ms == 0:
            out.append(self.build_report(now))
            suggestion = self.eval_confinement_trigger(now)
            if suggestion is not None:
                out.append(suggestion)
        if self.sar_hook is not None and now > 0 and now % cfg.sar_period_ms == 0:
            out.extend(self.sar_hook(now))
        return out

    # -- individual rules ---------------------------------------------------

    def _suppressed(self, rule: str, source: str, now: int) -> bool:
        last = self._last_alert.get((rule, source))
        return last is not None and now - last < self.config.suppression_ms

    def _on_radiation(self, event: Event, now: int) -> Event | None:
        sensor = event.source
        window = self._radiation.get(sensor)
        if window is None:
            window = self._radiation[sensor] = SensorWindow(self.config.radiation_window_ms)
        window.add(event.ts, float(event.attrs["value"]), now)
        payload = eval_radiation_rule(sensor, window, self.config.thresholds, self.config.radiation_window_ms)
        if payload is None or self._suppressed("AlertRSN", sensor, now):
            return None
        self._last_alert[("AlertRSN", sensor)] = now
        return self._derived("AlertRSN", now, payload)

    def _on_wind(self, event: Event, now: int) -> Event | None:
        station = event.source
        if event.etype == "WindSpeedMeasure":
            window = self._wind_speed.get(station)
            if window is None:
                window = self._wind_speed[station] = SensorWindow(self.config.wind_window_ms)
            window.add(event.ts, float(event.attrs["speed"]), now)
        else:
            window = self._wind_dir.get(station)
            if window is None:
                window = self._wind_dir[station] = SensorWindow(self.config.wind_window_ms)
            window.add(event.ts, float(event.attrs["direction"]), now)
        speed_win = self._wind_speed.get(station) or SensorWindow(self.config.wind_window_ms)
        dir_win = self._wind_dir.get(station) or SensorWindow(self.config.wind_window_ms)
        speed_win.prune(now)
        dir_win.prune(now)
        payload = eval_wind_rule(station, speed_win, dir_win, self.config.thresholds)
        if payload is None or self._suppressed("AlertMF", station, now):
            return None
        self._last_alert[("AlertMF", station)] = now
        return self._derived("AlertMF", now, payload)

    def eval_confinement_trigger(self, now: int) -> Event | None:
        """Suggest confinement when >= N distinct sensors exceeded v_plus
        within the trailing window [now - window, now)."""
        if self.history is None:
            return None
        cfg = self.config
        measures = self.history(now - cfg.confinement_window_ms, now, Pattern.of(etypes=["RadiationMeasure"]))
        hot = sorted({m.source for m in measures if float(m.attrs["value"]) > cfg.thresholds.v_plus})
        if len(hot) < cfg.confinement_min_sources:
            return None
        return self._derived(
            "SuggestConfinement",
            now,
            {
                "sensors": ",".join(hot),
                "sensor_count": len(hot),
                "window_from": now - cfg.confinement_window_ms,
                "window_to": now,
            },
        )

    def build_report(self, now: int) -> Event:
        """Periodic report: per-sensor radiation series over the trailing
        report window, with summary attributes."""
        cfg = self.config
        window_from, window_to = now - cfg.report_period_ms, now
        series: dict[str, list[list[float]]] = {}
        max_value = 0.0
        sample_count = 0
        if self.history is not None:
            measures = self.history(window_from, window_to, Pattern.of(etypes=["RadiationMeasure"]))
            for m in measures:
                value = float(m.attrs["value"])
                series.setdefault(m.source, []).append([m.ts, value])
                max_value = max(max_value, value)
                sample_count += 1
        return self._derived(
            "Report",
            now,
            {
                "kind": "periodic",
                "window_from": window_from,
                "window_to": window_to,
                "sensor_count": len(series),
                "sample_count": sample_count,
                "max_value": max_value,
                "doc": json.dumps({"series": series}, separators=(",", ":"), sort_keys=True),
            },
        )

    def _derived(self, etype: str, now: int, attrs: dict) -> Event:
        return make_event(etype, DCEP_SOURCE, now, attrs, event_id=self.make_id() if self.make_id else None)
