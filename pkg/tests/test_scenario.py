"""Scenario loading, sensor programs, the driver loop, and run metrics."""

import io

import pytest

from crisiscloud.driver import Driver, MissingScriptedChoice, run_scenario
from crisiscloud.patterns import haversine_km
from crisiscloud.runmetrics import metrics, read_runlog
from crisiscloud.scenario import (
    SchemaError,
    SemanticError,
    ValueProgram,
    load_scenario,
    sensor_tick,
)

MIN = 60_000


def _nuclear():
    return load_scenario("nuclear")


def _mini_doc(**over):
    doc = {
        "name": "mini",
        "seed": 7,
        "end_ms": 120000,
        "tick_ms": 30000,
        "plant": {"lat": 44.0, "lon": 1.2},
        "sensors": [
            {
                "id": "rsn",
                "kind": "radiation",
                "count": 2,
                "cadence_ms": 30000,
                "ring": {"radius_km": 5.0},
                "program": [{"from_ms": 0, "constant": 0.5}],
            }
        ],
    }
    doc.update(over)
    return doc


# -- loading -------------------------------------------------------------------


def test_nuclear_scenario_loads():
    script = _nuclear()
    assert script.end_ms == 105 * MIN
    assert [g.group_id for g in script.groups] == ["rsn", "mf"]
    assert len(script.groups[0].sensors) == 5
    assert len(script.processes) == 6
    # The storyboard's three periods are visible in the phase boundaries.
    boundaries = {p.from_ms for p in script.phases} | {p.to_ms for p in script.phases}
    assert {0, 20 * MIN, 30 * MIN} <= boundaries


def test_empty_document_is_schema_error():
    with pytest.raises(SchemaError):
        load_scenario({})


def test_schema_error_carries_path():
    with pytest.raises(SchemaError) as exc:
        load_scenario(_mini_doc(sensors=[{"id": "x", "kind": "radiation", "count": 1}]))
    assert "sensors" in exc.value.path


def test_overlapping_segments_rejected():
    doc = _mini_doc()
    doc["sensors"][0]["program"] = [
        {"from_ms": 60000, "constant": 1.0},
        {"from_ms": 0, "ramp": {"start": 0.5, "per_min": 0.3}},
    ]
    with pytest.raises(SemanticError):
        load_scenario(doc)


def test_duplicate_group_ids_rejected():
    doc = _mini_doc()
    doc["sensors"] = [doc["sensors"][0], dict(doc["sensors"][0])]
    with pytest.raises(SemanticError):
        load_scenario(doc)


def test_program_must_cover_from_zero():
    doc = _mini_doc()
    doc["sensors"][0]["program"] = [{"from_ms": 60000, "constant": 1.0}]
    with pytest.raises(SemanticError):
        load_scenario(doc)


def test_value_program_piecewise():
    program = ValueProgram.parse(
        [
            {"from_ms": 0, "constant": 0.6},
            {"from_ms": 3 * MIN, "ramp": {"start": 0.6, "per_min": 0.3}},
            {"from_ms": 7 * MIN, "constant": 1.8},
        ],
        "test",
    )
    assert program.value_at(0) == 0.6
    assert program.value_at(2 * MIN) == 0.6
    assert program.value_at(3 * MIN) == pytest.approx(0.6)
    assert program.value_at(5 * MIN) == pytest.approx(1.2)
    assert program.value_at(7 * MIN) == 1.8
    assert program.value_at(9 * MIN) == 1.8


def test_sensor_placement_on_ring_is_seeded():
    a, b = _nuclear(), _nuclear()
    for ga, gb in zip(a.groups, b.groups):
        assert [s.geo for s in ga.sensors] == [s.geo for s in gb.sensors]
    plant = a.plant
    for sensor in a.groups[0].sensors:
        d = haversine_km(plant[0], plant[1], *sensor.geo)
        assert d == pytest.approx(5.0, abs=0.05)


# -- sensor ticks ----------------------------------------------------------------


def test_sensor_tick_radiation_counts():
    script = _nuclear()
    rsn = script.groups[0]
    events = sensor_tick(rsn, 0)
    assert len(events) == 5
    assert {e.etype for e in events} == {"RadiationMeasure"}
    # 30 s cadence: two boundaries per sim minute, 10 events/minute.
    assert len(sensor_tick(rsn, 30000)) == 5


def test_sensor_tick_weather_emits_two_per_station():
    script = _nuclear()
    mf = script.groups[1]
    events = sensor_tick(mf, 0)
    assert len(events) == 10
    assert sorted({e.etype for e in events}) == ["WindDirectionMeasure", "WindSpeedMeasure"]


def test_sensor_tick_empty_group():
    doc = _mini_doc()
    doc["sensors"][0]["count"] = 0
    script = load_scenario(doc)
    assert sensor_tick(script.groups[0], 0) == []


def test_sensor_tick_rejects_off_boundary():
    script = _nuclear()
    with pytest.raises(ValueError):
        sensor_tick(script.groups[0], 15000)


# -- activation -------------------------------------------------------------------


def test_activate_sensors_growth_and_immediate_emission():
    script = load_scenario(_mini_doc(end_ms=0))
    driver = Driver(script)
    driver.run()
    base = len(driver.events)
    driver.activate_sensors("rsn", 3, now=0, ring={"radius_km": 30.0}, program=[{"from_ms": 0, "constant": 0.4}])
    group = script.groups[0]
    assert len(group.active_sensors(0)) == 5
    assert len(driver.events) == base + 3  # first measures at the same boundary


def test_activate_zero_rejected():
    script = load_scenario(_mini_doc(end_ms=0))
    driver = Driver(script)
    with pytest.raises(ValueError):
        driver.activate_sensors("rsn", 0, now=0)


# -- runs --------------------------------------------------------------------------


def test_empty_scenario_empty_runlog():
    doc = _mini_doc(end_ms=0)
    doc["sensors"] = []
    runlog = run_scenario(load_scenario(doc))
    assert runlog.events == []


def test_period_one_only_run():
    import yaml
    from crisiscloud.scenario import resolve_scenario_path

    with open(resolve_scenario_path("nuclear")) as fh:
        doc = yaml.safe_load(fh)
    doc["end_ms"] = 20 * MIN
    doc["injections"] = [i for i in doc["injections"] if i["ts"] <= 20 * MIN]
    doc["milestones"] = [m for m in doc["milestones"] if m["ts"] <= 20 * MIN]
    doc["phases"] = [p for p in doc["phases"] if p["to_ms"] <= 20 * MIN]
    script = load_scenario(doc, base_dir=resolve_scenario_path("nuclear").parent)
    runlog = run_scenario(script)
    etypes = {e.etype for e in runlog.events}
    assert "AlertRSN" in etypes and "AlertMF" in etypes
    assert "AdaptationProposalEvent" not in etypes
    report = metrics(runlog.events, script)
    assert report.all_ok()
    assert [p.events_per_min for p in report.phases] == [30, 70, 660]


def test_scripted_run_requires_choices():
    doc = _mini_doc()
    doc["injections"] = [{"ts": 0, "do": [{"publish": {"etype": "KickOff", "source": "test"}}]}]
    doc["decision_points"] = [
        {
            "id": "pick",
            "role": "RepresentativeNationalAuthority",
            "trigger": {"etype": "KickOff"},
            "options": [{"id": "a", "label": "A"}, {"id": "b", "label": "B"}],
        }
    ]
    script = load_scenario(doc)
    with pytest.raises(MissingScriptedChoice):
        run_scenario(script)


def test_scripted_delay_defers_choice():
    doc = _mini_doc()
    doc["injections"] = [{"ts": 0, "do": [{"publish": {"etype": "KickOff", "source": "test"}}]}]
    doc["decision_points"] = [
        {
            "id": "pick",
            "role": "R",
            "trigger": {"etype": "KickOff"},
            "options": [{"id": "a", "label": "A"}],
            "scripted_choice": "a",
            "scripted_delay_ms": 60000,
        }
    ]
    runlog = run_scenario(load_scenario(doc))
    choice = next(e for e in runlog.events if e.etype == "DecisionChoice")
    assert choice.ts == 60000


def test_runs_are_deterministic_including_ids():
    def one():
        buf = io.StringIO()
        run_scenario(load_scenario(_mini_doc())).write(buf)
        return buf.getvalue()

    assert one() == one()


def test_seed_changes_ids_but_not_milestones():
    a = run_scenario(load_scenario(_mini_doc()))
    b = run_scenario(load_scenario(_mini_doc(), seed=99))
    assert [e.id for e in a.events] != [e.id for e in b.events]
    assert [(e.etype, e.ts) for e in a.events] == [(e.etype, e.ts) for e in b.events]


def test_runlog_write_read_round_trip(tmp_path):
    runlog = run_scenario(load_scenario(_mini_doc()))
    path = tmp_path / "mini.log"
    with open(path, "w") as fh:
        runlog.write(fh)
    with open(path) as fh:
        back = read_runlog(fh)
    assert back == runlog.events


def test_clock_monotone_and_seq_dense():
    runlog = run_scenario(load_scenario(_mini_doc()))
    events = runlog.events
    assert all(b.ts >= a.ts for a, b in zip(events, events[1:]))
    assert [e.seq for e in events] == list(range(1, len(events) + 1))


# -- metrics ------------------------------------------------------------------------


def test_metrics_detects_tampering():
    script = load_scenario(_mini_doc(milestones=[{"name": "kick", "etype": "KickOff", "ts": 30000}]))
    runlog = run_scenario(load_scenario(_mini_doc(
        injections=[{"ts": 30000, "do": [{"publish": {"etype": "KickOff", "source": "t"}}]}],
    )))
    good = metrics(runlog.events, script)
    assert good.all_ok()
    shifted = [e if e.etype != "KickOff" else e.__class__(e.id, e.etype, e.source, 60000, e.attrs, e.geo, e.seq) for e in runlog.events]
    bad = metrics(shifted, script)
    assert not bad.all_ok()
    row = next(m for m in bad.milestones if m.name == "kick")
    assert row.actual_ts == 60000 and not row.ok


def test_metrics_missing_milestone_event():
    script = load_scenario(_mini_doc(milestones=[{"name": "ghost", "etype": "NeverHappens", "ts": 0}]))
    report = metrics(run_scenario(load_scenario(_mini_doc())).events, script)
    row = report.milestones[0]
    assert not row.ok and row.actual_ts is None
