"""Adaptation recommender: theoretical-vs-situational gap detection.

Every 10 simulated minutes the recommender snapshots the orchestrator,
derives the theoretical model (requested resources, intended activity
statuses) and the situational model (committed resources, current
statuses), and opens a proposal for every divergence:

* resource gap  -> "ask for a new resource" OR "dispatch residual tasks
  on the remaining resources";
* status gap    -> "require immediate reporting" OR "send someone on the
  field" OR "wait".

Proposals await a human choice; applying one executes its effect against
the orchestrator exactly once and records the exchange as ordinary events.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .model import Event, Scalar, make_event
from .orchestrator import ActivityStatus, Orchestrator

SAR_SOURCE = "sar"


class UnknownGapKind(ValueError):
    pass


class ProposalClosed(RuntimeError):
    pass


class UnknownProposal(KeyError):
    pass


class UnknownAlternative(ValueError):
    pass


class GapKind(str, Enum):
    RESOURCE = "resource"
    STATUS = "status"


class ProposalState(str, Enum):
    OPEN = "open"
    CHOSEN = "chosen"
    EXPIRED = "expired"


@dataclass(frozen=True)
class Gap:
    kind: GapKind
    subject: str
    expected: Scalar
    actual: Scalar
    detected_ts: int

    def __post_init__(self):
        if self.expected == self.actual:
            raise ValueError(f"not a gap: expected == actual == {self.expected!r}")


@dataclass(frozen=True)
class AlternativeSpec:
    id: str
    label: str


RESOURCE_ALTERNATIVES = (
    AlternativeSpec("ask-new-resource", "Ask for a new resource"),
    AlternativeSpec("dispatch-remaining", "Dispatch residual tasks on the remaining resources"),
)

STATUS_ALTERNATIVES = (
    AlternativeSpec("require-immediate-report", "Require immediate reporting"),
    AlternativeSpec("send-someone", "Send someone on the field"),
    AlternativeSpec("wait", "Wait"),
)


@dataclass
class AdaptationProposal:
    proposal_id: str
    gap: Gap
    alternatives: tuple[AlternativeSpec, ...]
    role: str
    state: ProposalState = ProposalState.OPEN
    chosen: str | None = None
    chooser: str | None = None


def snapshot_models(snapshot: dict, now: int) -> tuple[dict[str, Scalar], dict[str, Scalar]]:
    """Build (theoretical, situational) models from one orchestrator snapshot.

    Keys are "reservation:<id>" and "activity:<instance>/<id>".  An
    activity's intended status is finished once now is past its intended
    finish; otherwise the plan expects whatever is currently happening.
    """
    theoretical: dict[str, Scalar] = {}
    situational: dict[str, Scalar] = {}
    for rid, r in snapshot.get("reservations", {}).items():
        if not r.get("active", True):
            continue
        theoretical[f"reservation:{rid}"] = r["requested"]
        situational[f"reservation:{rid}"] = r["committed"]
    for iid, inst in snapshot.get("instances", {}).items():
        for aid, a in inst.get("activities", {}).items():
            key = f"activity:{iid}/{aid}"
            current = a["status"]
            intended = current
            finish = a.get("intended_finish_ts")
            if finish is not None and now > finish:
                intended = ActivityStatus.FINISHED.value
            theoretical[key] = intended
            situational[key] = current
    return theoretical, situational


def detect_gaps(theoretical: dict[str, Scalar], situational: dict[str, Scalar], now: int) -> list[Gap]:
    """One gap per divergent key; resources first, then activities, each by id."""
    gaps: list[Gap] = []
    for prefix, kind in (("reservation:", GapKind.RESOURCE), ("activity:", GapKind.STATUS)):
        for key in sorted(k for k in theoretical if k.startswith(prefix)):
            expected, actual = theoretical[key], situational.get(key)
            if expected != actual:
                gaps.append(Gap(kind, key.split(":", 1)[1], expected, actual, now))
    return gaps


def propose(gap: Gap, proposal_id: str, role: str) -> AdaptationProposal:
    """Wrap a gap with its fixed alternative list (order as presented)."""
    if gap.kind == GapKind.RESOURCE:
        alternatives = RESOURCE_ALTERNATIVES
    elif gap.kind == GapKind.STATUS:
        alternatives = STATUS_ALTERNATIVES
    else:
        raise UnknownGapKind(str(gap.kind))
    return AdaptationProposal(proposal_id, gap, alternatives, role)


class Recommender:
    """Holds open proposals and applies human choices to the orchestrator."""

    def __init__(
        self,
        orchestrator: Orchestrator,
        emit: Callable[[Event], None] | None = None,
        make_id: Callable[[], str] | None = None,
    ):
        self.orchestrator = orchestrator
        self._emit = emit or (lambda event: None)
        self._make_id = make_id
        self.proposals: dict[str, AdaptationProposal] = {}
        self._counter = 0

    def tick(self, now: int) -> list[Event]:
        """Run gap detection at a 10-minute boundary; returns proposal events."""
        snapshot = self.orchestrator.snapshot()
        theoretical, situational = snapshot_models(snapshot, now)
        events: list[Event] = []
        for gap in detect_gaps(theoretical, situational, now):
            if self._has_open_proposal(gap):
                continue
            self._counter += 1
            proposal = propose(gap, f"prop-{self._counter}", self._role_for(gap, snapshot))
            self.proposals[proposal.proposal_id] = proposal
            event = self._event(
                "AdaptationProposalEvent",
                now,
                {
                    "proposal": proposal.proposal_id,
                    "gap_kind": gap.kind.value,
                    "subject": gap.subject,
                    "expected": gap.expected,
                    "actual": gap.actual,
                    "role": proposal.role,
                    "alternatives": ",".join(a.id for a in proposal.alternatives),
                },
            )
            self._emit(event)
            events.append(event)
        return events

    def apply_choice(self, proposal_id: str, alternative_id: str, chooser: str, now: int) -> list[Event]:
        """Close the proposal and execute the chosen effect exactly once."""
        proposal = self.proposals.get(proposal_id)
        if proposal is None:
            raise UnknownProposal(proposal_id)
        if proposal.state != ProposalState.OPEN:
            raise ProposalClosed(proposal_id)
        if alternative_id not in {a.id for a in proposal.alternatives}:
            raise UnknownAlternative(alternative_id)
        proposal.state = ProposalState.CHOSEN
        proposal.chosen = alternative_id
        proposal.chooser = chooser
        events: list[Event] = []
        choice = self._event(
            "DecisionChoice",
            now,
            {"proposal": proposal_id, "option": alternative_id, "chooser": chooser},
        )
        self._emit(choice)
        events.append(choice)
        events.extend(self._execute(proposal, alternative_id, now))
        return events

    def expire(self, proposal_id: str) -> None:
        """Mark an ignored proposal Expired (runs past scenario end)."""
        proposal = self.proposals.get(proposal_id)
        if proposal is None:
            raise UnknownProposal(proposal_id)
        if proposal.state == ProposalState.OPEN:
            proposal.state = ProposalState.EXPIRED

    def open_proposals(self) -> list[AdaptationProposal]:
        return [p for p in self.proposals.values() if p.state == ProposalState.OPEN]

    # -- internals --------------------------------------------------------

    def _has_open_proposal(self, gap: Gap) -> bool:
        return any(
            p.state == ProposalState.OPEN and p.gap.kind == gap.kind and p.gap.subject == gap.subject
            for p in self.proposals.values()
        )

    def _role_for(self, gap: Gap, snapshot: dict) -> str:
        if gap.kind == GapKind.RESOURCE:
            holder = snapshot["reservations"].get(gap.subject, {}).get("holder")
            return holder or "OfficeOfInfrastructureFieldTeam"
        iid, _, aid = gap.subject.partition("/")
        lane = snapshot["instances"].get(iid, {}).get("activities", {}).get(aid, {}).get("lane")
        return lane or "OfficeOfInfrastructureRepresentative"

    def _execute(self, proposal: AdaptationProposal, alternative_id: str, now: int) -> list[Event]:
        gap = proposal.gap
        events: list[Event] = []
        if alternative_id == "dispatch-remaining":
            reservation = self.orchestrator.reservation(gap.subject)
            self.orchestrator.adjust_reservation_requested(gap.subject, reservation.committed)
            event = self._event(
                "TaskAssignment",
                now,
                {
                    "reservation": gap.subject,
                    "assigned_to_units": reservation.committed,
                    "note": "residual tasks dispatched on remaining resources",
                },
            )
            self._emit(event)
            events.append(event)
        elif alternative_id == "ask-new-resource":
            reservation = self.orchestrator.reservation(gap.subject)
            missing = reservation.requested - reservation.committed
            if missing > 0:
                self.orchestrator.request_resources(reservation.kind, missing, reservation.holder, now)
        elif alternative_id == "require-immediate-report":
            event = self._event(
                "ReportRequest",
                now,
                {"subject": gap.subject, "requested_by": proposal.role},
            )
            self._emit(event)
            events.append(event)
        elif alternative_id == "send-someone":
            event = self._event(
                "FieldDispatch",
                now,
                {"subject": gap.subject, "note": "observer sent to the field"},
            )
            self._emit(event)
            events.append(event)
        elif alternative_id == "wait":
            pass
        return events

    def _event(self, etype: str, now: int, attrs: dict) -> Event:
        return make_event(etype, SAR_SOURCE, now, attrs, event_id=self._make_id() if self._make_id else None)
