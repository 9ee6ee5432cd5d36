"""CEP engine: slope estimation, rules, cascades, reports, suppression."""

import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crisiscloud.broker import Broker
from crisiscloud.cep import (
    CepConfig,
    Engine,
    InsufficientSamples,
    OutOfOrder,
    SensorWindow,
    Thresholds,
    ZoneClass,
    circular_span_deg,
    classify_barrier,
    estimate_slope,
    eval_cascade,
    eval_radiation_rule,
    eval_wind_rule,
    radiation_rule_fires,
    wind_rule_fires,
    zone_severity,
)
from crisiscloud.model import make_event

MIN = 60_000


def _engine(broker=None, **cfg_overrides):
    config = CepConfig(**cfg_overrides)
    history = broker.query_history if broker else None
    return Engine(config, history=history)


# -- slope ---------------------------------------------------------------


def test_slope_exact_ramp():
    samples = [(0, 0.6), (1 * MIN, 0.9), (2 * MIN, 1.2), (3 * MIN, 1.5), (4 * MIN, 1.8)]
    assert math.isclose(estimate_slope(samples), 0.3, rel_tol=1e-12)


def test_slope_constant_is_zero():
    samples = [(i * 30000, 1.7) for i in range(9)]
    assert estimate_slope(samples) == pytest.approx(0.0, abs=1e-12)


def test_slope_warm_up_returns_none_until_full_span():
    samples = [(0, 0.6), (90000, 1.2)]
    assert estimate_slope(samples, min_span_ms=4 * MIN) is None
    samples = [(0, 0.6), (4 * MIN, 1.8)]
    assert estimate_slope(samples, min_span_ms=4 * MIN) == pytest.approx(0.3)


def test_slope_insufficient_samples():
    with pytest.raises(InsufficientSamples):
        estimate_slope([(0, 1.0)])
    with pytest.raises(InsufficientSamples):
        estimate_slope([(5, 1.0), (5, 2.0)])


def _normal_equations_slope(samples):
    # Independent oracle: closed-form normal equations on raw sums.
    n = len(samples)
    xs = [ts / MIN for ts, _ in samples]
    ys = [v for _, v in samples]
    sx = math.fsum(xs)
    sy = math.fsum(ys)
    sxx = math.fsum(x * x for x in xs)
    sxy = math.fsum(x * y for x, y in zip(xs, ys))
    return (n * sxy - sx * sy) / (n * sxx - sx * sx)


def test_slope_noisy_matches_normal_equations_oracle():
    rng = random.Random(13)
    for _ in range(50):
        n = rng.randrange(3, 40)
        samples = []
        ts = 0
        for _ in range(n):
            ts += rng.randrange(1000, 60000)
            samples.append((ts, rng.uniform(0, 5) + 0.3 * ts / MIN))
        got = estimate_slope(samples)
        want = _normal_equations_slope(samples)
        assert math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-12)


@settings(max_examples=100)
@given(
    slope=st.floats(min_value=-5, max_value=5, allow_nan=False),
    intercept=st.floats(min_value=-10, max_value=10, allow_nan=False),
    n=st.integers(min_value=2, max_value=30),
    step=st.integers(min_value=500, max_value=120000),
)
def test_slope_recovers_exact_linear(slope, intercept, n, step):
    samples = [(i * step, intercept + slope * (i * step) / MIN) for i in range(n)]
    got = estimate_slope(samples)
    assert math.isclose(got, slope, rel_tol=1e-9, abs_tol=1e-9)


# -- radiation rule --------------------------------------------------------


TRUTH_TABLE = [
    # (value, slope, fires): value > 2.0, or (value > 1.0 and slope > 0.2)
    (0.5, None, False), (0.5, 0.1, False), (0.5, 0.3, False),
    (1.5, None, False), (1.5, 0.1, False), (1.5, 0.3, True),
    (1.8, None, False), (1.8, 0.1, False), (1.8, 0.3, True),
    (2.1, None, True), (2.1, 0.1, True), (2.1, 0.3, True),
]


@pytest.mark.parametrize("value,slope,fires", TRUTH_TABLE)
def test_radiation_rule_truth_table(value, slope, fires):
    assert radiation_rule_fires(value, slope, Thresholds()) is fires


def test_eval_radiation_rule_ramp_endpoint():
    # Window holding the exact linear ramp: 1.8 now, fitted trend 0.3.
    w = SensorWindow(4 * MIN)
    for i in range(5):
        w.add(i * MIN, 0.6 + 0.3 * i, now=4 * MIN)
    got = eval_radiation_rule("rsn-1", w, Thresholds(), 4 * MIN)
    assert got is not None
    assert got["value"] == pytest.approx(1.8)
    assert got["slope"] == pytest.approx(0.3)


def test_eval_radiation_rule_first_disjunct_alone():
    w = SensorWindow(4 * MIN)
    w.add(0, 2.1, now=0)
    got = eval_radiation_rule("rsn-1", w, Thresholds(), 4 * MIN)
    assert got == {"sensor": "rsn-1", "value": 2.1}


def test_eval_radiation_rule_none_when_both_disjuncts_fail():
    w = SensorWindow(4 * MIN)
    for i in range(9):
        w.add(i * 30000, 1.5 + 0.05 * i * 0.5, now=4 * MIN)
    got = eval_radiation_rule("rsn-1", w, Thresholds(), 4 * MIN)
    assert got is None


# -- wind rule --------------------------------------------------------------


def _circular_span_oracle(angles):
    # Independent brute force: try every point as the arc start.
    if len(angles) <= 1:
        return 0.0
    norm = [a % 360.0 for a in angles]
    best = 360.0
    for start in norm:
        reach = max((a - start) % 360.0 for a in norm)
        best = min(best, reach)
    return best


@pytest.mark.parametrize(
    "angles,expected",
    [
        ([350.0, 80.0], 90.0),
        ([0.0, 90.0, 180.0], 180.0),
        ([10.0, 20.0, 30.0], 20.0),
        ([135.0], 0.0),
        ([355.0, 5.0], 10.0),
    ],
)
def test_circular_span_fixtures(angles, expected):
    assert circular_span_deg(angles) == pytest.approx(expected)
    assert _circular_span_oracle(angles) == pytest.approx(expected)


def test_circular_span_matches_oracle_randomized():
    rng = random.Random(5)
    for _ in range(200):
        angles = [rng.uniform(0, 360) for _ in range(rng.randrange(2, 8))]
        assert circular_span_deg(angles) == pytest.approx(_circular_span_oracle(angles))


def test_wind_rule_speed_jump():
    th = Thresholds()
    speed = SensorWindow(2 * MIN)
    direction = SensorWindow(2 * MIN)
    for i, v in enumerate([0.0, 0.0, 0.0, 0.0, 40.0]):
        speed.add(i * 30000, v, now=120000)
        direction.add(i * 30000, 135.0, now=120000)
    got = eval_wind_rule("mf-1", speed, direction, th)
    assert got is not None and got["speed_delta"] == pytest.approx(40.0)


def test_wind_rule_steady_is_quiet():
    th = Thresholds()
    speed = SensorWindow(2 * MIN)
    direction = SensorWindow(2 * MIN)
    for i in range(5):
        speed.add(i * 30000, 10.0, now=120000)
        direction.add(i * 30000, 135.0, now=120000)
    assert eval_wind_rule("mf-1", speed, direction, th) is None


def test_wind_rule_direction_swing_across_north():
    th = Thresholds()
    speed = SensorWindow(2 * MIN)
    direction = SensorWindow(2 * MIN)
    speed.add(0, 5.0, now=30000)
    speed.add(30000, 5.0, now=30000)
    direction.add(0, 350.0, now=30000)
    direction.add(30000, 80.0, now=30000)
    got = eval_wind_rule("mf-1", speed, direction, th)
    assert got is not None and got["direction_span"] == pytest.approx(90.0)
    assert wind_rule_fires(0.0, 90.0, th) and not wind_rule_fires(0.0, 45.0, th)


# -- barriers ---------------------------------------------------------------


@pytest.mark.parametrize(
    "rate,cumulative,expected",
    [
        (0.01, 0.0, ZoneClass.NORMAL),
        (2.5, 1.0, ZoneClass.CONFINE_AND_IODINE),
        (0.5, 60.0, ZoneClass.EVACUATE),
        (0.025, 0.0, ZoneClass.NORMAL),          # boundary: "above" is strict
        (0.025 + 1e-9, 0.0, ZoneClass.CONTROL_ZONE),
        (2.0, 0.0, ZoneClass.CONTROL_ZONE),
        (2.0 + 1e-9, 0.0, ZoneClass.CONFINE_AND_IODINE),
        (0.0, 50.0, ZoneClass.NORMAL),
        (0.0, 50.0 + 1e-9, ZoneClass.EVACUATE),
    ],
)
def test_classify_barrier(rate, cumulative, expected):
    assert classify_barrier(rate, cumulative, Thresholds()) is expected


@settings(max_examples=200)
@given(
    rate=st.floats(min_value=0, max_value=100),
    cumulative=st.floats(min_value=0, max_value=100),
    d_rate=st.floats(min_value=0, max_value=100),
    d_cum=st.floats(min_value=0, max_value=100),
)
def test_classify_barrier_monotone(rate, cumulative, d_rate, d_cum):
    th = Thresholds()
    base = zone_severity(classify_barrier(rate, cumulative, th))
    assert zone_severity(classify_barrier(rate + d_rate, cumulative, th)) >= base
    assert zone_severity(classify_barrier(rate, cumulative + d_cum, th)) >= base


# -- cascade ----------------------------------------------------------------


def test_cascade_confinement_decision():
    decision = make_event("ConfinementDecision", "rna", 1200000, {"perimeter_km": 5})
    out = eval_cascade(decision)
    assert out is not None and out.etype == "AlertPoliceRepresentative"
    assert out.attrs["perimeter_km"] == 5
    assert out.attrs["decision_id"] == decision.id


def test_cascade_plan_validated_carries_plan_verbatim():
    plan = json.dumps({"limits": "5 km ring", "actions": ["close roads"]})
    validated = make_event("ConfinementPlanValidated", "police", 1500000, {"plan": plan, "perimeter_km": 5})
    out = eval_cascade(validated)
    assert out is not None and out.etype == "AlertOfficeOfInfrastructure"
    assert out.attrs["plan"] == plan


def test_cascade_ignores_other_types():
    assert eval_cascade(make_event("RadiationMeasure", "rsn-1", 0, {"value": 1.0})) is None


def test_cascade_at_most_one_and_pure():
    decision = make_event("ConfinementDecision", "rna", 0, {"perimeter_km": 5})
    a, b = eval_cascade(decision), eval_cascade(decision)
    assert a.etype == b.etype and a.attrs == b.attrs


# -- engine stream behavior ---------------------------------------------------


def _feed_radiation(engine, source, pairs):
    out = []
    for ts, value in pairs:
        e = make_event("RadiationMeasure", source, ts, {"value": value})
        out.extend(engine.on_event(e, now=ts))
    return out


def test_engine_alert_above_ceiling():
    engine = _engine()
    out = _feed_radiation(engine, "rsn-1", [(0, 2.5)])
    assert [e.etype for e in out] == ["AlertRSN"]
    assert out[0].source == "dcep"


def test_engine_quiet_below_thresholds():
    engine = _engine()
    out = _feed_radiation(engine, "rsn-1", [(i * 30000, 0.5) for i in range(10)])
    assert out == []


def test_engine_suppression_window():
    engine = _engine(suppression_ms=300000)
    out = _feed_radiation(engine, "rsn-1", [(i * 30000, 2.5) for i in range(11)])
    # First alert at 0, suppressed until 300000 inclusive-exclusive.
    assert [e.ts for e in out] == [0, 300000]


def test_engine_suppression_is_per_sensor():
    engine = _engine()
    out = []
    out += _feed_radiation(engine, "rsn-1", [(0, 2.5)])
    out += _feed_radiation(engine, "rsn-2", [(0, 2.5)])
    assert len(out) == 2


def test_engine_window_hygiene_ancient_spike():
    # A huge spike far outside the window must not influence the rule.
    engine = _engine(radiation_window_ms=240000)
    _feed_radiation(engine, "rsn-1", [(0, 500.0)])
    out = _feed_radiation(engine, "rsn-1", [(10 * MIN + i * 30000, 1.5) for i in range(9)])
    assert out == []


def test_engine_out_of_order_rejected():
    engine = _engine()
    engine.on_event(make_event("RadiationMeasure", "rsn-1", 60000, {"value": 0.5}), now=60000)
    with pytest.raises(OutOfOrder):
        engine.on_event(make_event("RadiationMeasure", "rsn-1", 59999, {"value": 0.5}), now=60000)


def test_engine_determinism():
    def run():
        engine = _engine()
        ids = iter(range(10000))
        engine.make_id = lambda: f"d-{next(ids)}"
        out = []
        for i in range(30):
            ts = i * 30000
            v = 0.5 + 0.1 * i
            out.extend(engine.on_event(make_event("RadiationMeasure", "rsn-1", ts, {"value": v}, event_id=f"m-{i}"), now=ts))
        return [(e.id, e.etype, e.ts, tuple(sorted(e.attrs.items()))) for e in out]

    assert run() == run()


# -- ticks, trigger, report ----------------------------------------------------


def _broker_with_measures(sensors, ticks, value_fn, start_ts=0):
    b = Broker()
    for i in range(ticks):
        ts = start_ts + i * 30000
        for s in range(sensors):
            b.publish(make_event("RadiationMeasure", f"rsn-{s + 1:02d}", ts, {"value": value_fn(s, ts)}))
    return b


def test_on_tick_report_at_five_minute_boundary():
    b = _broker_with_measures(5, 10, lambda s, ts: 1.0)
    engine = _engine(b)
    out = engine.on_tick(5 * MIN)
    reports = [e for e in out if e.etype == "Report"]
    assert len(reports) == 1
    assert reports[0].attrs["window_from"] == 0
    assert reports[0].attrs["window_to"] == 5 * MIN
    assert engine.on_tick(4 * MIN) == []


def test_on_tick_forwards_to_sar_at_ten_minutes():
    b = _broker_with_measures(2, 21, lambda s, ts: 0.2)
    engine = _engine(b)
    calls = []
    engine.sar_hook = lambda now: calls.append(now) or []
    out = engine.on_tick(10 * MIN)
    assert calls == [10 * MIN]
    assert [e.etype for e in out] == ["Report"]  # report and SAR tick both fire
    engine.on_tick(5 * MIN)
    assert calls == [10 * MIN]


def test_confinement_trigger_three_distinct_sensors():
    b = _broker_with_measures(4, 10, lambda s, ts: 2.4 if s < 3 else 1.0)
    engine = _engine(b)
    out = engine.on_tick(5 * MIN)
    suggestions = [e for e in out if e.etype == "SuggestConfinement"]
    assert len(suggestions) == 1
    assert suggestions[0].attrs["sensors"] == "rsn-01,rsn-02,rsn-03"


def test_confinement_trigger_needs_distinct_sensors():
    # One sensor shouting five times is still one sensor.
    b = Broker()
    for i in range(5):
        b.publish(make_event("RadiationMeasure", "rsn-01", i * 30000, {"value": 3.0}))
    engine = _engine(b)
    assert [e.etype for e in engine.on_tick(5 * MIN)] == ["Report"]


def test_confinement_trigger_two_sensors_not_enough():
    b = _broker_with_measures(4, 10, lambda s, ts: 2.4 if s < 2 else 1.0)
    engine = _engine(b)
    assert [e.etype for e in engine.on_tick(5 * MIN)] == ["Report"]


def test_build_report_counts_25_sensors():
    # 25 active sensors at 30 s cadence over the 5-minute window.
    b = _broker_with_measures(25, 10, lambda s, ts: 0.4 + s * 0.01)
    engine = _engine(b)
    report = engine.build_report(5 * MIN)
    # Replay oracle: count the generated measures inside the window.
    expected = len(b.query_history(0, 5 * MIN))
    assert expected == 250
    assert report.attrs["sample_count"] == expected
    assert report.attrs["sensor_count"] == 25
    doc = json.loads(report.attrs["doc"])
    assert len(doc["series"]) == 25
    assert all(len(points) == 10 for points in doc["series"].values())


def test_build_report_empty_window():
    engine = _engine(Broker())
    report = engine.build_report(5 * MIN)
    assert report.attrs["sensor_count"] == 0
    assert report.attrs["sample_count"] == 0


def test_build_report_phase_one_counts():
    b = _broker_with_measures(5, 10, lambda s, ts: 0.6)
    engine = _engine(b)
    report = engine.build_report(5 * MIN)
    assert report.attrs["sample_count"] == 50
