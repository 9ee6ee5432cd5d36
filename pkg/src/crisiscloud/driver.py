"""Scenario driver: owns the simulated clock and the serialized engine.

Each 30-second tick runs a fixed order: sensor emissions, stream
processing (rules and workflow routing over everything just published),
minute-boundary ticks (reports, confinement check, adaptation check),
scripted injections, then decision resolution.  Newly derived events are
drained through the same pipeline within the tick, so cascades such as
confinement-decision -> police alert land at the same simulated time.

Decision points and adaptation proposals are resolved by the configured
source: in scripted mode the scripted choice is applied (after its
scripted delay); in external mode the clock pauses until a choice arrives
on the thread-safe queue the gateway feeds.  Sensor activations granted
by a choice take effect immediately: if the choice lands on a cadence
boundary the new sensors emit their first measure at that same tick,
which is what keeps the per-phase event rates exact.
"""

from __future__ import annotations

import queue
import random
import threading
import time
from dataclasses import dataclass, field
from typing import IO

from .broker import Broker
from .cep import Engine
from .model import Event, encode_event, make_event
from .orchestrator import Orchestrator
from .sar import ProposalState, Recommender
from .scenario import (
    DecisionPointSpec,
    ScenarioScript,
    Sensor,
    ValueProgram,
    place_on_ring,
    sensor_tick,
)

DRIVER_SOURCE = "scenario"


class MissingScriptedChoice(RuntimeError):
    """Scripted run hit a decision point without a scripted choice."""


class AbortedByOperator(RuntimeError):
    pass


class UnknownPoint(KeyError):
    pass


class AlreadyDecided(RuntimeError):
    pass


class IdGen:
    """Deterministic event ids: a run with the same seed reproduces them."""

    def __init__(self, seed: int):
        self.prefix = f"e{seed}"
        self.counter = 0

    def __call__(self) -> str:
        self.counter += 1
        return f"{self.prefix}-{self.counter:07d}"


@dataclass
class OpenDecisionPoint:
    spec: DecisionPointSpec
    issued_ts: int
    context_event_id: str
    decided: bool = False
    chosen: str | None = None


@dataclass
class ChoiceRequest:
    """One operator choice travelling from a gateway session to the driver."""

    target_id: str                       # decision point id or proposal id
    option_id: str
    chooser: str
    done: threading.Event = field(default_factory=threading.Event)
    seq: int | None = None
    error: Exception | None = None


@dataclass
class RunLog:
    """Everything a finished run produced, in publish order."""

    script_name: str
    seed: int
    events: list[Event]

    def write(self, sink: IO[str]) -> None:
        for event in self.events:
            sink.write(encode_event(event) + "\n")


class Driver:
    """Single owner of the clock and of all engine-state mutations."""

    def __init__(
        self,
        script: ScenarioScript,
        decisions: str = "scripted",             # "scripted" | "external"
        speed: float | None = None,              # None = max, else sim/wall factor
        log_sink: IO[str] | None = None,
    ):
        if decisions not in ("scripted", "external"):
            raise ValueError(f"unknown decision source {decisions!r}")
        self.script = script
        self.decisions = decisions
        self.speed = speed
        self.lock = threading.RLock()
        self.make_id = IdGen(script.seed)
        self.broker = Broker(n_shards=script.n_shards, log_sink=log_sink)
        self.engine = Engine(script.cep_config, history=self.broker.query_history, make_id=self.make_id)
        self.orchestrator = Orchestrator(
            emit=self._publish, make_id=self.make_id, reservation_lead_ms=script.reservation_lead_ms
        )
        self.recommender = Recommender(self.orchestrator, emit=self._publish, make_id=self.make_id)
        self.events: list[Event] = []
        self.now = 0
        self.finished = False
        self.paused_for: list[str] = []
        self._pending: list[Event] = []
        self._points: dict[str, OpenDecisionPoint] = {}
        self._scheduled_choices: list[tuple[int, str, str, str]] = []  # (apply_at, kind, target, option)
        self._choice_queue: "queue.Queue[ChoiceRequest]" = queue.Queue()
        self._abort = threading.Event()
        self._rng_positions = place_on_ring  # placement for activations reuses the seeded layout
        self._placement_seed = script.seed + 1

    # -- public control -----------------------------------------------------

    def abort(self) -> None:
        self._abort.set()

    def submit_choice(self, request: ChoiceRequest) -> None:
        """Called from gateway threads; the driver applies it at the pause."""
        self._choice_queue.put(request)

    def open_decision_points(self) -> list[OpenDecisionPoint]:
        with self.lock:
            return [p for p in self._points.values() if not p.decided]

    def run(self) -> RunLog:
        script = self.script
        with self.lock:
            if self.events or self.finished:
                raise RuntimeError("a Driver runs its scenario once; build a fresh one to rerun")
            for kind, total in script.inventory.items():
                self.orchestrator.stock(kind, total)
            for definition in script.processes:
                self.orchestrator.load_process(definition)
            for process_id, instance_id in script.instances:
                self.orchestrator.start_instance(process_id, now=0, instance_id=instance_id)
            self._drain(0)
        injections = list(script.injections)
        inj_idx = 0
        wall_started = time.monotonic()
        for now in range(0, script.end_ms + 1, script.tick_ms):
            if self._abort.is_set():
                raise AbortedByOperator(f"aborted at t0+{now // 60000} min")
            with self.lock:
                self.now = now
                self._emit_sensor_measures(now)
                self._drain(now)
                if now % 60000 == 0:
                    for derived in self.engine.on_tick(now):
                        self._publish(derived)
                    self._drain(now)
                    if now > 0 and now % script.cep_config.sar_period_ms == 0:
                        self.recommender.tick(now)
                        self._drain(now)
                while inj_idx < len(injections) and injections[inj_idx].ts == now:
                    for action in injections[inj_idx].actions:
                        self._apply_action(action, now)
                        self._drain(now)
                    inj_idx += 1
            resolve_started = time.monotonic()
            self._resolve_decisions(now)
            # Time spent waiting on a human never counts against pacing.
            wall_started += time.monotonic() - resolve_started
            if self.speed is not None:
                target_wall = wall_started + (now / 1000.0) / self.speed
                delay = target_wall - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
        with self.lock:
            for proposal in self.recommender.open_proposals():
                self.recommender.expire(proposal.proposal_id)
            self.finished = True
        return RunLog(script.name, script.seed, list(self.events))

    # -- tick internals ------------------------------------------------------

    def _publish(self, event: Event) -> int:
        seq = self.broker.publish(event)
        stamped = event.with_seq(seq)
        self.events.append(stamped)
        self._pending.append(stamped)
        return seq

    def _drain(self, now: int) -> None:
        while self._pending:
            event = self._pending.pop(0)
            for derived in self.engine.on_event(event, now):
                self._publish(derived)
            self.orchestrator.route(event, now)
            self._check_decision_triggers(event, now)

    def _emit_sensor_measures(self, now: int) -> None:
        for group in self.script.groups:
            if now % group.cadence_ms != 0:
                continue
            for event in sensor_tick(group, now, self.make_id):
                self._publish(event)

    def _apply_action(self, action: dict, now: int) -> None:
        (verb, args), = action.items()
        if verb == "publish":
            self._publish(make_event(
                args["etype"], args["source"], now,
                args.get("attrs", {}),
                tuple(args["geo"]) if "geo" in args else None,
                event_id=self.make_id(),
            ))
        elif verb == "activate_sensors":
            self.activate_sensors(args["group"], args["add"], now, args.get("ring"), args.get("program"))
        elif verb == "request_resources":
            self.orchestrator.request_resources(args["kind"], args["quantity"], args["holder"], now)
        elif verb == "set_status":
            self.orchestrator.set_activity_status(args["instance"], args["activity"], args["status"], now)
        elif verb == "field_loss":
            self.orchestrator.report_field_loss(args["reservation"], args["quantity"], now)
        elif verb == "release":
            self.orchestrator.release_resources(args["reservation"], now)
        else:
            raise ValueError(f"unknown action {verb!r}")

    def activate_sensors(self, group_id: str, additional: int, now: int, ring: dict | None = None, program: list | None = None) -> None:
        """Grow a sensor group; new sensors measure from this very boundary
        when the activation lands on one (keeps the phase rates exact)."""
        if additional < 1:
            raise ValueError(f"additional_count must be >= 1, got {additional}")
        group = next((g for g in self.script.groups if g.group_id == group_id), None)
        if group is None:
            raise ValueError(f"unknown sensor group {group_id!r}")
        rng = random.Random(self._placement_seed * 1000003 + len(group.sensors))
        positions = self._rng_positions(self.script.plant, ring or {"radius_km": 5.0}, additional, rng)
        start_index = len(group.sensors)
        prog = ValueProgram.parse(program, f"activation of {group_id}") if program is not None else None
        new_sensors = [
            Sensor(f"{group_id}-{start_index + i + 1:03d}", positions[i], activated_ms=now, program=prog)
            for i in range(additional)
        ]
        group.sensors.extend(new_sensors)
        if now % group.cadence_ms == 0:
            for event in sensor_tick(group, now, self.make_id, only=new_sensors):
                self._publish(event)

    # -- decisions -------------------------------------------------------------

    def _check_decision_triggers(self, event: Event, now: int) -> None:
        for spec in self.script.decision_points:
            if spec.point_id in self._points:
                continue
            if spec.trigger.matches(event):
                self._issue_point(spec, event, now)

    def _issue_point(self, spec: DecisionPointSpec, context: Event, now: int) -> None:
        self._points[spec.point_id] = OpenDecisionPoint(spec, now, context.id)
        self._publish(make_event(
            "DecisionPointIssued", DRIVER_SOURCE, now,
            {
                "point": spec.point_id,
                "role": spec.role,
                "prompt": spec.prompt,
                "options": ",".join(spec.option_ids()),
                "labels": "|".join(label for _, label in spec.options),
                "context_event": context.id,
            },
            event_id=self.make_id(),
        ))

    def _resolve_decisions(self, now: int) -> None:
        while True:
            with self.lock:
                self._apply_due_scheduled(now)
                progress = False
                for point in list(self._points.values()):
                    if point.decided or self._is_scheduled(point.spec.point_id):
                        continue
                    if self.decisions == "scripted" or point.spec.always_scripted:
                        self._schedule_scripted_point(point, now)
                        progress = True
                if self.decisions == "scripted":
                    for proposal in self.recommender.open_proposals():
                        if not self._is_scheduled(proposal.proposal_id):
                            self._schedule_scripted_proposal(proposal, now)
                            progress = True
                if progress:
                    continue  # zero-delay choices become due right away
                waiting_ids = [
                    p.spec.point_id
                    for p in self._points.values()
                    if not p.decided and not self._is_scheduled(p.spec.point_id)
                ]
                if self.decisions == "external":
                    waiting_ids += [p.proposal_id for p in self.recommender.open_proposals()]
                self.paused_for = waiting_ids
                if not waiting_ids:
                    return
                if self.decisions == "scripted":
                    return  # only future-scheduled scripted choices remain
            # External mode: the clock stays at `now` until a choice arrives.
            self._await_external_choice(now)

    def _is_scheduled(self, target_id: str) -> bool:
        return any(t == target_id for _, _, t, _ in self._scheduled_choices)

    def _schedule_scripted_point(self, point: OpenDecisionPoint, now: int) -> None:
        spec = point.spec
        if spec.scripted_choice is None:
            raise MissingScriptedChoice(spec.point_id)
        self._scheduled_choices.append((now + spec.scripted_delay_ms, "point", spec.point_id, spec.scripted_choice))

    def _schedule_scripted_proposal(self, proposal, now: int) -> None:
        choice = self.script.adaptation_choices.get(proposal.gap.kind.value)
        if choice is None:
            raise MissingScriptedChoice(f"proposal {proposal.proposal_id} ({proposal.gap.kind.value})")
        option, delay = choice
        if not self._is_scheduled(proposal.proposal_id):
            self._scheduled_choices.append((now + delay, "proposal", proposal.proposal_id, option))

    def _apply_due_scheduled(self, now: int) -> None:
        due = [s for s in self._scheduled_choices if s[0] <= now]
        self._scheduled_choices = [s for s in self._scheduled_choices if s[0] > now]
        for _, kind, target, option in due:
            if kind == "point":
                point = self._points[target]
                self._apply_point_choice(point, option, point.spec.role, now)
            else:
                role = self.recommender.proposals[target].role
                self.recommender.apply_choice(target, option, role, now)
                self._drain(now)

    def _apply_point_choice(self, point: OpenDecisionPoint, option_id: str, chooser: str, now: int) -> int:
        spec = point.spec
        if option_id not in spec.option_ids():
            raise UnknownPoint(f"option {option_id!r} not offered by {spec.point_id}")
        point.decided = True
        point.chosen = option_id
        seq = self._publish(make_event(
            "DecisionChoice", DRIVER_SOURCE, now,
            {"point": spec.point_id, "option": option_id, "chooser": chooser},
            event_id=self.make_id(),
        ))
        for action in spec.effects.get(option_id, []):
            self._apply_action(action, now)
        self._drain(now)
        return seq

    def _await_external_choice(self, now: int) -> None:
        while True:
            if self._abort.is_set():
                raise AbortedByOperator(f"aborted while paused at t0+{now // 60000} min")
            try:
                request = self._choice_queue.get(timeout=0.1)
            except queue.Empty:
                continue
            with self.lock:
                try:
                    request.seq = self._apply_external(request, now)
                except Exception as exc:  # surfaced to the gateway session
                    request.error = exc
                finally:
                    request.done.set()
            return

    def _apply_external(self, request: ChoiceRequest, now: int) -> int:
        point = self._points.get(request.target_id)
        if point is not None:
            if point.decided:
                raise AlreadyDecided(request.target_id)
            return self._apply_point_choice(point, request.option_id, request.chooser, now)
        proposal = self.recommender.proposals.get(request.target_id)
        if proposal is not None:
            if proposal.state is not ProposalState.OPEN:
                raise AlreadyDecided(request.target_id)
            self.recommender.apply_choice(request.target_id, request.option_id, request.chooser, now)
            self._drain(now)
            return next(
                e.seq for e in reversed(self.events)
                if e.etype == "DecisionChoice" and e.attrs.get("proposal") == request.target_id
            )
        raise UnknownPoint(request.target_id)


def run_scenario(
    script: ScenarioScript,
    decisions: str = "scripted",
    speed: float | None = None,
    log_sink: IO[str] | None = None,
) -> RunLog:
    """One-call scripted execution; returns the complete run log."""
    return Driver(script, decisions=decisions, speed=speed, log_sink=log_sink).run()
