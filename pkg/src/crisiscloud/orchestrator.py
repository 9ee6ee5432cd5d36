"""Workflow orchestrator: process definitions, activity tracking, inventory.

Process definitions are data, not code: declared activities per lane and
event-triggered transitions.  Each activity instance walks the one-way
ladder Waiting -> Ongoing -> Finished; the orchestrator never loops an
activity back, so repeatable steps simply stay Ongoing.

The resource inventory enforces conservation (available + committed ==
total per kind after every operation).  A field loss removes units from
the fleet entirely; releasing a reservation returns its surviving units.

Every state change is also emitted as an event through the injected
``emit`` callable so the broker log remains the single source of truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .model import Event, Scalar, make_event

ORCH_SOURCE = "orchestrator"

# Status transitions that interactive callers may request explicitly.
_LEGAL = {("waiting", "ongoing"), ("ongoing", "finished")}


class MalformedProcess(ValueError):
    """Definition violates its structural constraints; lists every violation."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class UnknownProcess(KeyError):
    pass


class UnknownInstance(KeyError):
    pass


class IllegalTransition(ValueError):
    pass


class InvalidRequest(ValueError):
    pass


class InsufficientResources(RuntimeError):
    def __init__(self, kind: str, requested: int, available: int):
        super().__init__(f"{kind}: requested {requested}, available {available}")
        self.available = available


class InvalidLoss(ValueError):
    pass


class UnknownReservation(KeyError):
    pass


class ActivityStatus(str, Enum):
    WAITING = "waiting"
    ONGOING = "ongoing"
    FINISHED = "finished"


class ProcessLevel(str, Enum):
    STRATEGIC = "Strategic"
    OPERATIONAL = "Operational"
    SUPPORT = "Support"


@dataclass(frozen=True)
class ActivityDef:
    id: str
    lane: str
    start: bool = False
    planned_duration_ms: int | None = None


@dataclass(frozen=True)
class TransitionDef:
    """Fires when an event matches; moves ``to`` to Ongoing and optionally
    finishes ``from``.  ``to`` may be None for pure completion triggers."""

    from_activity: str
    trigger_etype: str
    to_activity: str | None = None
    finish_from: bool = False
    trigger_source: str | None = None
    trigger_attrs: dict[str, Scalar] = field(default_factory=dict)

    def matches(self, event: Event) -> bool:
        if event.etype != self.trigger_etype:
            return False
        if self.trigger_source is not None and event.source != self.trigger_source:
            return False
        for key, wanted in self.trigger_attrs.items():
            if event.attrs.get(key) != wanted:
                return False
        return True


@dataclass(frozen=True)
class ProcessDefinition:
    process_id: str
    level: ProcessLevel
    lanes: tuple[str, ...]
    activities: tuple[ActivityDef, ...]
    transitions: tuple[TransitionDef, ...] = ()

    def validate(self) -> None:
        violations = []
        ids = [a.id for a in self.activities]
        if len(ids) != len(set(ids)):
            violations.append("duplicate activity ids")
        starts = [a.id for a in self.activities if a.start]
        if len(starts) != 1:
            violations.append(f"need exactly one start activity, got {starts}")
        known = set(ids)
        lanes = set(self.lanes)
        for a in self.activities:
            if a.lane not in lanes:
                violations.append(f"activity {a.id} references undeclared lane {a.lane}")
        for t in self.transitions:
            if t.from_activity not in known:
                violations.append(f"transition from undeclared activity {t.from_activity}")
            if t.to_activity is not None and t.to_activity not in known:
                violations.append(f"transition to undeclared activity {t.to_activity}")
        if violations:
            raise MalformedProcess(violations)

    @staticmethod
    def from_dict(doc: dict) -> "ProcessDefinition":
        try:
            activities = tuple(
                ActivityDef(
                    id=a["id"],
                    lane=a["lane"],
                    start=bool(a.get("start", False)),
                    planned_duration_ms=a.get("planned_duration_ms"),
                )
                for a in doc.get("activities", [])
            )
            transitions = tuple(
                TransitionDef(
                    from_activity=t["from"],
                    trigger_etype=t["trigger"]["etype"],
                    to_activity=t.get("to"),
                    finish_from=bool(t.get("finish_from", False)),
                    trigger_source=t["trigger"].get("source"),
                    trigger_attrs=t["trigger"].get("attrs", {}),
                )
                for t in doc.get("transitions", [])
            )
            definition = ProcessDefinition(
                process_id=doc["id"],
                level=ProcessLevel(doc["level"]),
                lanes=tuple(doc.get("lanes", [])),
                activities=activities,
                transitions=transitions,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedProcess([f"bad process document: {exc}"]) from exc
        definition.validate()
        return definition


@dataclass
class Activity:
    """One activity's live state inside a process instance."""

    activity_id: str
    lane: str
    status: ActivityStatus = ActivityStatus.WAITING
    planned_duration_ms: int | None = None
    started_ts: int | None = None
    intended_finish_ts: int | None = None
    finished_ts: int | None = None


@dataclass
class ProcessInstance:
    instance_id: str
    process_id: str
    activities: dict[str, Activity]
    context: dict[str, Scalar] = field(default_factory=dict)


@dataclass
class Inventory:
    kind: str
    total: int
    available: int
    committed: int = 0

    def check(self) -> None:
        assert self.available + self.committed == self.total, (
            f"inventory conservation broken for {self.kind}: "
            f"{self.available}+{self.committed} != {self.total}"
        )


@dataclass
class Reservation:
    reservation_id: str
    kind: str
    requested: int
    committed: int
    holder: str
    confirmed_for_ts: int
    active: bool = True


class Orchestrator:
    """Owns process instances and the resource inventory.

    Mutations must come from the single serialized engine context; the
    snapshot methods build plain dicts safe to hand elsewhere.
    """

    def __init__(
        self,
        emit: Callable[[Event], None] | None = None,
        make_id: Callable[[], str] | None = None,
        reservation_lead_ms: int = 300_000,
    ):
        self._definitions: dict[str, ProcessDefinition] = {}
        self._instances: dict[str, ProcessInstance] = {}
        self._inventory: dict[str, Inventory] = {}
        self._reservations: dict[str, Reservation] = {}
        self._emit = emit or (lambda event: None)
        self._make_id = make_id
        self._instance_counter = 0
        self._reservation_counter = 0
        self.reservation_lead_ms = reservation_lead_ms

    # -- processes ------------------------------------------------------

    def load_process(self, definition: ProcessDefinition | dict) -> str:
        if isinstance(definition, dict):
            definition = ProcessDefinition.from_dict(definition)
        else:
            definition.validate()
        self._definitions[definition.process_id] = definition
        return definition.process_id

    def start_instance(self, process_id: str, context: dict | None = None, now: int = 0, instance_id: str | None = None) -> str:
        definition = self._definitions.get(process_id)
        if definition is None:
            raise UnknownProcess(process_id)
        if instance_id is None:
            self._instance_counter += 1
            instance_id = f"{process_id}#{self._instance_counter}"
        elif instance_id in self._instances:
            raise ValueError(f"instance id {instance_id!r} already in use")
        activities = {
            a.id: Activity(a.id, a.lane, planned_duration_ms=a.planned_duration_ms)
            for a in definition.activities
        }
        instance = ProcessInstance(instance_id, process_id, activities, dict(context or {}))
        self._instances[instance_id] = instance
        start = next(a for a in definition.activities if a.start)
        self._set_status(instance, start.id, ActivityStatus.ONGOING, now)
        return instance_id

    def advance(self, instance_id: str, trigger: Event, now: int) -> list[Event]:
        """Fire every matching transition; no match leaves state unchanged."""
        instance = self._instances.get(instance_id)
        if instance is None:
            raise UnknownInstance(instance_id)
        definition = self._definitions[instance.process_id]
        emitted: list[Event] = []
        for t in definition.transitions:
            if not t.matches(trigger):
                continue
            source = instance.activities[t.from_activity]
            if source.status != ActivityStatus.ONGOING:
                continue
            if t.to_activity is not None:
                target = instance.activities[t.to_activity]
                if target.status == ActivityStatus.WAITING:
                    emitted.append(self._set_status(instance, t.to_activity, ActivityStatus.ONGOING, now))
            if t.finish_from:
                emitted.append(self._set_status(instance, t.from_activity, ActivityStatus.FINISHED, now))
        return emitted

    def route(self, event: Event, now: int) -> list[Event]:
        """Offer an event to every live instance (driver convenience)."""
        out: list[Event] = []
        for instance_id in list(self._instances):
            out.extend(self.advance(instance_id, event, now))
        return out

    def set_activity_status(self, instance_id: str, activity_id: str, status: ActivityStatus | str, now: int) -> Event:
        instance = self._instances.get(instance_id)
        if instance is None:
            raise UnknownInstance(instance_id)
        if activity_id not in instance.activities:
            raise IllegalTransition(f"unknown activity {activity_id} in {instance_id}")
        return self._set_status(instance, activity_id, ActivityStatus(status), now)

    def _set_status(self, instance: ProcessInstance, activity_id: str, status: ActivityStatus, now: int) -> Event:
        activity = instance.activities[activity_id]
        if (activity.status.value, status.value) not in _LEGAL:
            raise IllegalTransition(f"{activity_id}: {activity.status.value} -> {status.value}")
        activity.status = status
        attrs: dict[str, Scalar] = {
            "instance": instance.instance_id,
            "activity": activity_id,
            "status": status.value,
        }
        if status == ActivityStatus.ONGOING:
            activity.started_ts = now
            if activity.planned_duration_ms is not None:
                activity.intended_finish_ts = now + activity.planned_duration_ms
                attrs["intended_finish_ts"] = activity.intended_finish_ts
        elif status == ActivityStatus.FINISHED:
            activity.finished_ts = now
        event = self._event("ActivityStatusChange", now, attrs)
        self._emit(event)
        return event

    # -- inventory ------------------------------------------------------

    def stock(self, kind: str, total: int) -> None:
        """Declare (or restate) the fleet size for a resource kind."""
        inv = self._inventory.get(kind)
        if inv is None:
            self._inventory[kind] = Inventory(kind, total, total)
        else:
            delta = total - inv.total
            inv.total = total
            inv.available += delta
        self._inventory[kind].check()

    def request_resources(self, kind: str, quantity: int, holder: str, now: int) -> Reservation:
        if quantity < 1:
            raise InvalidRequest(f"quantity must be >= 1, got {quantity}")
        inv = self._inventory.get(kind)
        if inv is None or inv.available < quantity:
            raise InsufficientResources(kind, quantity, inv.available if inv else 0)
        inv.available -= quantity
        inv.committed += quantity
        inv.check()
        self._reservation_counter += 1
        reservation = Reservation(
            reservation_id=f"rsv-{self._reservation_counter}",
            kind=kind,
            requested=quantity,
            committed=quantity,
            holder=holder,
            confirmed_for_ts=now + self.reservation_lead_ms,
        )
        self._reservations[reservation.reservation_id] = reservation
        self._emit(self._event(
            "ResourceRequest",
            now,
            {
                "reservation": reservation.reservation_id,
                "kind": kind,
                "quantity": quantity,
                "holder": holder,
                "confirmed_for_ts": reservation.confirmed_for_ts,
            },
        ))
        return reservation

    def report_field_loss(self, reservation_id: str, quantity_lost: int, now: int) -> Event:
        reservation = self._reservations.get(reservation_id)
        if reservation is None or not reservation.active:
            raise UnknownReservation(reservation_id)
        if quantity_lost < 0 or quantity_lost > reservation.committed:
            raise InvalidLoss(f"lost {quantity_lost} of committed {reservation.committed}")
        reservation.committed -= quantity_lost
        inv = self._inventory[reservation.kind]
        inv.committed -= quantity_lost
        inv.total -= quantity_lost
        inv.check()
        event = self._event(
            "FieldAlert",
            now,
            {
                "reservation": reservation_id,
                "kind": reservation.kind,
                "quantity_lost": quantity_lost,
                "remaining": reservation.committed,
            },
        )
        self._emit(event)
        return event

    def release_resources(self, reservation_id: str, now: int) -> None:
        reservation = self._reservations.get(reservation_id)
        if reservation is None or not reservation.active:
            raise UnknownReservation(reservation_id)
        inv = self._inventory[reservation.kind]
        inv.available += reservation.committed
        inv.committed -= reservation.committed
        released = reservation.committed
        reservation.committed = 0
        reservation.active = False
        inv.check()
        self._emit(self._event(
            "InventoryUpdate",
            now,
            {
                "reservation": reservation_id,
                "kind": reservation.kind,
                "released": released,
                "available": inv.available,
                "total": inv.total,
            },
        ))

    def adjust_reservation_requested(self, reservation_id: str, requested: int) -> None:
        """Lower (or raise) the theoretical need; used by adaptations."""
        reservation = self._reservations.get(reservation_id)
        if reservation is None:
            raise UnknownReservation(reservation_id)
        reservation.requested = requested

    # -- views ------------------------------------------------------------

    def instance(self, instance_id: str) -> ProcessInstance:
        if instance_id not in self._instances:
            raise UnknownInstance(instance_id)
        return self._instances[instance_id]

    def reservation(self, reservation_id: str) -> Reservation:
        if reservation_id not in self._reservations:
            raise UnknownReservation(reservation_id)
        return self._reservations[reservation_id]

    def snapshot(self) -> dict:
        """Consistent point-in-time view for SAR and the gateway."""
        return {
            "instances": {
                iid: {
                    "process_id": inst.process_id,
                    "activities": {
                        aid: {
                            "lane": a.lane,
                            "status": a.status.value,
                            "started_ts": a.started_ts,
                            "intended_finish_ts": a.intended_finish_ts,
                            "finished_ts": a.finished_ts,
                        }
                        for aid, a in inst.activities.items()
                    },
                }
                for iid, inst in self._instances.items()
            },
            "inventory": {
                kind: {"total": inv.total, "available": inv.available, "committed": inv.committed}
                for kind, inv in self._inventory.items()
            },
            "reservations": {
                rid: {
                    "kind": r.kind,
                    "requested": r.requested,
                    "committed": r.committed,
                    "holder": r.holder,
                    "confirmed_for_ts": r.confirmed_for_ts,
                    "active": r.active,
                }
                for rid, r in self._reservations.items()
            },
        }

    def _event(self, etype: str, now: int, attrs: dict) -> Event:
        return make_event(etype, ORCH_SOURCE, now, attrs, event_id=self._make_id() if self._make_id else None)
