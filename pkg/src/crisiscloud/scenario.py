"""Scenario scripts: schema-validated documents driving a simulated run.

A scenario declares sensor groups with piecewise value programs, the
business-rule configuration, the process set, scripted injections (actions
at fixed simulated times), decision points with scripted or operator-made
choices, named phases with expected event rates, and the milestone table
a finished run is checked against.

Sensors sit on rings around the plant; placement is seeded so a scenario
always reproduces the same geometry.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .cep import CepConfig, Thresholds
from .orchestrator import ProcessDefinition
from .patterns import EARTH_RADIUS_KM
from .model import Event, Scalar, make_event


class SchemaError(ValueError):
    """Document fails the scenario schema; carries the failing path."""

    def __init__(self, message: str, path: str):
        super().__init__(f"{message} (at {path})")
        self.path = path


class SemanticError(ValueError):
    """Document parses but contradicts itself (overlaps, dangling refs)."""


def _schema() -> dict:
    text = resources.files("crisiscloud.data").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class Segment:
    from_ms: int
    constant: float | None = None
    ramp_start: float | None = None
    ramp_per_min: float | None = None

    def value_at(self, ts: int) -> float:
        if self.constant is not None:
            return self.constant
        return self.ramp_start + self.ramp_per_min * (ts - self.from_ms) / 60000.0


@dataclass(frozen=True)
class ValueProgram:
    """Piecewise value source: ordered, non-overlapping segments."""

    segments: tuple[Segment, ...]

    def value_at(self, ts: int) -> float:
        active = None
        for seg in self.segments:
            if seg.from_ms <= ts:
                active = seg
            else:
                break
        if active is None:
            raise SemanticError(f"no program segment covers ts {ts}")
        return active.value_at(ts)

    @staticmethod
    def parse(doc: list[dict], where: str) -> "ValueProgram":
        segments = []
        for entry in doc:
            if "constant" in entry:
                segments.append(Segment(entry["from_ms"], constant=float(entry["constant"])))
            elif "ramp" in entry:
                segments.append(Segment(entry["from_ms"], ramp_start=float(entry["ramp"]["start"]), ramp_per_min=float(entry["ramp"]["per_min"])))
            else:
                raise SemanticError(f"{where}: segment needs constant or ramp: {entry}")
        starts = [s.from_ms for s in segments]
        if starts != sorted(starts) or len(set(starts)) != len(starts):
            raise SemanticError(f"{where}: segments must be ordered and non-overlapping")
        if segments[0].from_ms != 0:
            raise SemanticError(f"{where}: first segment must start at 0 so every tick is covered")
        return ValueProgram(tuple(segments))


@dataclass
class Override:
    sensors: frozenset[str]
    from_ms: int
    to_ms: int
    constant: float


@dataclass
class Sensor:
    sensor_id: str
    geo: tuple[float, float]
    activated_ms: int
    program: "ValueProgram | None" = None   # overrides the group program when set


@dataclass
class SensorGroup:
    """One fleet of like sensors sharing cadence and value programs."""

    group_id: str
    kind: str                      # radiation | weather
    cadence_ms: int
    sensors: list[Sensor]
    program: ValueProgram | None = None
    speed_program: ValueProgram | None = None
    direction_program: ValueProgram | None = None
    overrides: list[Override] = field(default_factory=list)

    def active_sensors(self, now: int) -> list[Sensor]:
        return [s for s in self.sensors if s.activated_ms <= now]

    def value_for(self, sensor: "Sensor | str", ts: int) -> float:
        if isinstance(sensor, str):
            sensor = next(s for s in self.sensors if s.sensor_id == sensor)
        for ov in self.overrides:
            if sensor.sensor_id in ov.sensors and ov.from_ms <= ts < ov.to_ms:
                return ov.constant
        program = sensor.program or self.program
        return program.value_at(ts)


def sensor_tick(group: "SensorGroup", now: int, make_id=None, only: "list[Sensor] | None" = None) -> list[Event]:
    """Events one cadence boundary produces for a group (unpublished).

    One measure per active radiation sensor; weather stations emit two
    distinct events (speed and direction).  ``only`` restricts emission to
    a subset, used when sensors activate mid-run on a boundary.
    """
    if now % group.cadence_ms != 0:
        raise ValueError(f"now {now} is not a cadence boundary for {group.group_id}")
    events: list[Event] = []
    sensors = only if only is not None else group.active_sensors(now)
    for sensor in sensors:
        if group.kind == "radiation":
            events.append(make_event(
                "RadiationMeasure", sensor.sensor_id, now,
                {"value": group.value_for(sensor, now)}, sensor.geo,
                event_id=make_id() if make_id else None,
            ))
        else:
            events.append(make_event(
                "WindSpeedMeasure", sensor.sensor_id, now,
                {"speed": group.speed_program.value_at(now)}, sensor.geo,
                event_id=make_id() if make_id else None,
            ))
            events.append(make_event(
                "WindDirectionMeasure", sensor.sensor_id, now,
                {"direction": group.direction_program.value_at(now)}, sensor.geo,
                event_id=make_id() if make_id else None,
            ))
    return events


@dataclass(frozen=True)
class TriggerSpec:
    etype: str
    source: str | None = None
    attrs: dict = field(default_factory=dict)

    def matches(self, event: Event) -> bool:
        if event.etype != self.etype:
            return False
        if self.source is not None and event.source != self.source:
            return False
        return all(event.attrs.get(k) == v for k, v in self.attrs.items())


@dataclass
class DecisionPointSpec:
    point_id: str
    role: str
    prompt: str
    trigger: TriggerSpec
    options: list[tuple[str, str]]                  # (id, label)
    scripted_choice: str | None
    scripted_delay_ms: int = 0
    always_scripted: bool = False
    effects: dict[str, list[dict]] = field(default_factory=dict)

    def option_ids(self) -> list[str]:
        return [oid for oid, _ in self.options]


@dataclass
class Injection:
    ts: int
    actions: list[dict]


@dataclass
class Phase:
    name: str
    from_ms: int
    to_ms: int
    expected_events_per_min: float | None = None


@dataclass
class MilestoneSpec:
    name: str
    etype: str
    ts: int
    attrs: dict[str, Scalar] = field(default_factory=dict)
    same_tick_after: str | None = None


@dataclass
class ScenarioScript:
    name: str
    seed: int
    end_ms: int
    tick_ms: int
    n_shards: int
    plant: tuple[float, float]
    cep_config: CepConfig
    groups: list[SensorGroup]
    phases: list[Phase]
    processes: list[ProcessDefinition]
    instances: list[tuple[str, str]]                # (process_id, instance_id)
    inventory: dict[str, int]
    reservation_lead_ms: int
    decision_points: list[DecisionPointSpec]
    adaptation_choices: dict[str, tuple[str, int]]  # gap kind -> (option, delay)
    injections: list[Injection]
    milestones: list[MilestoneSpec]
    # Sensor-count plans per group for activations declared in effects.
    activation_rings: dict[str, dict] = field(default_factory=dict)


def destination_point(lat: float, lon: float, bearing_deg: float, distance_km: float) -> tuple[float, float]:
    """Point at the given bearing/distance on the R=6371 km sphere."""
    delta = distance_km / EARTH_RADIUS_KM
    theta = math.radians(bearing_deg)
    phi1, lam1 = math.radians(lat), math.radians(lon)
    phi2 = math.asin(math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta))
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    return (round(math.degrees(phi2), 6), round(math.degrees(lam2), 6))


def place_on_ring(
    plant: tuple[float, float],
    ring: dict,
    count: int,
    rng: random.Random,
) -> list[tuple[float, float]]:
    """Seeded-deterministic positions on a ring (optionally a sector)."""
    radius = float(ring["radius_km"])
    start, end = ring.get("sector_deg", [0.0, 360.0])
    width = (end - start) % 360.0 or 360.0
    positions = []
    for i in range(count):
        bearing = (start + (i + 0.5) * width / count + rng.uniform(-2.0, 2.0)) % 360.0
        positions.append(destination_point(plant[0], plant[1], bearing, radius))
    return positions


def _build_cep_config(rules: dict) -> CepConfig:
    threshold_keys = {
        "v_plus", "v_minus", "slope_limit", "wind_speed_delta",
        "wind_direction_delta", "control_zone", "evac_cumulative",
    }
    th = Thresholds(**{k: v for k, v in rules.items() if k in threshold_keys})
    cfg = CepConfig(thresholds=th)
    for key, value in rules.items():
        if key not in threshold_keys:
            setattr(cfg, key, value)
    # Periodic work only runs on minute boundaries, so off-grid periods
    # would silently never fire.
    for name in ("report_period_ms", "sar_period_ms"):
        if getattr(cfg, name) % 60000 != 0:
            raise SemanticError(f"rules.{name} must be a multiple of one simulated minute")
    return cfg


def load_scenario(source: str | Path | dict, base_dir: Path | None = None, seed: int | None = None) -> ScenarioScript:
    """Load and validate a scenario document (path, packaged name, or dict).

    ``seed`` overrides the document's seed (placement and event ids).
    Raises SchemaError for structural violations (with the failing path)
    and SemanticError for inconsistent content.
    """
    if isinstance(source, dict):
        doc = source
        base = base_dir or Path(".")
    else:
        path = resolve_scenario_path(source)
        with open(path) as fh:
            doc = yaml.safe_load(fh)
        base = base_dir or path.parent
    if doc is None or not isinstance(doc, dict):
        raise SchemaError("scenario document must be a mapping", "$")
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        raise SchemaError(exc.message, exc.json_path) from exc

    end_ms = doc["end_ms"]
    tick_ms = doc.get("tick_ms", 30000)
    plant_doc = doc.get("plant", {"lat": 0.0, "lon": 0.0})
    plant = (float(plant_doc["lat"]), float(plant_doc["lon"]))
    seed = doc.get("seed", 0) if seed is None else seed
    rng = random.Random(seed)

    group_ids = [g["id"] for g in doc["sensors"]]
    if len(group_ids) != len(set(group_ids)):
        raise SemanticError(f"duplicate sensor group ids: {group_ids}")
    groups: list[SensorGroup] = []
    for gdoc in doc["sensors"]:
        gid = gdoc["id"]
        count = gdoc["count"]
        kind = gdoc["kind"]
        if gdoc["cadence_ms"] % tick_ms != 0:
            raise SemanticError(f"group {gid}: cadence must be a multiple of tick_ms")
        ring = gdoc.get("ring", {"radius_km": 1.0})
        positions = place_on_ring(plant, ring, count, rng)
        sensors = [
            Sensor(f"{gid}-{i + 1:03d}", positions[i], activated_ms=0)
            for i in range(count)
        ]
        group = SensorGroup(
            group_id=gid,
            kind=kind,
            cadence_ms=gdoc["cadence_ms"],
            sensors=sensors,
        )
        if kind == "radiation":
            if "program" not in gdoc:
                raise SemanticError(f"group {gid}: radiation groups need a program")
            group.program = ValueProgram.parse(gdoc["program"], f"group {gid}")
        else:
            if "speed_program" not in gdoc or "direction_program" not in gdoc:
                raise SemanticError(f"group {gid}: weather groups need speed_program and direction_program")
            group.speed_program = ValueProgram.parse(gdoc["speed_program"], f"group {gid} speed")
            group.direction_program = ValueProgram.parse(gdoc["direction_program"], f"group {gid} direction")
        for ov in gdoc.get("overrides", []):
            if ov["to_ms"] <= ov["from_ms"]:
                raise SemanticError(f"group {gid}: override window is empty")
            group.overrides.append(
                Override(frozenset(ov["sensors"]), ov["from_ms"], ov["to_ms"], float(ov["constant"]))
            )
        groups.append(group)

    processes: list[ProcessDefinition] = []
    for rel in doc.get("processes", []):
        ppath = base / rel
        with open(ppath) as fh:
            processes.append(ProcessDefinition.from_dict(yaml.safe_load(fh)))
    known_processes = {p.process_id for p in processes}

    instances = []
    for inst in doc.get("instances", []):
        pid = inst["process"]
        if pid not in known_processes:
            raise SemanticError(f"instance references unknown process {pid}")
        instances.append((pid, inst.get("id", pid)))
    instance_ids = [iid for _, iid in instances]
    if len(instance_ids) != len(set(instance_ids)):
        raise SemanticError(f"duplicate instance ids: {instance_ids}")

    points: list[DecisionPointSpec] = []
    for pdoc in doc.get("decision_points", []):
        options = [(o["id"], o["label"]) for o in pdoc["options"]]
        choice = pdoc.get("scripted_choice")
        if choice is not None and choice not in {oid for oid, _ in options}:
            raise SemanticError(f"decision point {pdoc['id']}: scripted choice {choice!r} not an option")
        effects = pdoc.get("effects", {})
        for oid in effects:
            if oid not in {o for o, _ in options}:
                raise SemanticError(f"decision point {pdoc['id']}: effects for unknown option {oid!r}")
        points.append(DecisionPointSpec(
            point_id=pdoc["id"],
            role=pdoc["role"],
            prompt=pdoc.get("prompt", ""),
            trigger=TriggerSpec(
                etype=pdoc["trigger"]["etype"],
                source=pdoc["trigger"].get("source"),
                attrs=pdoc["trigger"].get("attrs", {}),
            ),
            options=options,
            scripted_choice=choice,
            scripted_delay_ms=pdoc.get("scripted_delay_ms", 0),
            always_scripted=pdoc.get("always_scripted", False),
            effects=effects,
        ))

    adaptation_choices = {
        a["gap_kind"]: (a["option"], a.get("delay_ms", 0))
        for a in doc.get("adaptation_choices", [])
    }

    injections = []
    for idoc in doc.get("injections", []):
        if idoc["ts"] > end_ms:
            raise SemanticError(f"injection at {idoc['ts']} beyond end_ms {end_ms}")
        injections.append(Injection(idoc["ts"], idoc["do"]))
    injections.sort(key=lambda i: i.ts)

    phases = [
        Phase(p["name"], p["from_ms"], p["to_ms"], p.get("expected_events_per_min"))
        for p in doc.get("phases", [])
    ]
    for p in phases:
        if p.to_ms <= p.from_ms:
            raise SemanticError(f"phase {p.name}: empty range")

    milestones = [
        MilestoneSpec(m["name"], m["etype"], m["ts"], m.get("attrs", {}), m.get("same_tick_after"))
        for m in doc.get("milestones", [])
    ]
    named = {m.name for m in milestones}
    for m in milestones:
        if m.same_tick_after is not None and m.same_tick_after not in named:
            raise SemanticError(f"milestone {m.name}: unknown reference {m.same_tick_after}")

    return ScenarioScript(
        name=doc["name"],
        seed=seed,
        end_ms=end_ms,
        tick_ms=tick_ms,
        n_shards=doc.get("n_shards", 4),
        plant=plant,
        cep_config=_build_cep_config(doc.get("rules", {})),
        groups=groups,
        phases=phases,
        processes=processes,
        instances=instances,
        inventory=dict(doc.get("inventory", {})),
        reservation_lead_ms=doc.get("reservation_lead_ms", 300000),
        decision_points=points,
        adaptation_choices=adaptation_choices,
        injections=injections,
        milestones=milestones,
    )


def resolve_scenario_path(source: str | Path) -> Path:
    """A filesystem path, or the name of a packaged scenario ("nuclear")."""
    path = Path(source)
    if path.exists():
        return path
    packaged = resources.files("crisiscloud.data").joinpath(f"{source}.scenario")
    with resources.as_file(packaged) as concrete:
        if concrete.exists():
            return concrete
    raise FileNotFoundError(f"no scenario at {source!r} and no packaged scenario of that name")
