"""Event data model, canonical wire format, and triple view.

Events are flat, typed, timestamped facts: a sensor measure, an alert, a
report, a decision.  Attribute values are scalars only; structured payloads
(plans, report series) travel as a single string attribute holding a nested
JSON document plus summary scalar attributes.

The canonical wire format is one UTF-8 JSON object per line, LF-terminated,
no insignificant whitespace, keys in fixed order (seq, id, etype, source,
ts, attrs, geo) with attrs keys sorted lexicographically.  Encoding is
deterministic: the same event always yields byte-identical lines, and
``decode_event(encode_event(e)) == e`` on every field.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

Scalar = str | int | float | bool

# Fixed top-level key order of the canonical line format.
_WIRE_KEYS = ("seq", "id", "etype", "source", "ts", "attrs", "geo")


class InvalidEvent(ValueError):
    """Raised when an event violates the model's invariants."""


class DecodeError(ValueError):
    """Raised on malformed wire input; carries the byte offset of the fault."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Event:
    """A single platform event.

    ``seq`` is the global sequence number the broker assigns at publish
    time; it is None until then.  ``ts`` is simulated milliseconds since
    the scenario epoch t0, never wall-clock time.
    """

    id: str
    etype: str
    source: str
    ts: int
    attrs: dict[str, Scalar] = field(default_factory=dict)
    geo: tuple[float, float] | None = None
    seq: int | None = None

    def with_seq(self, seq: int) -> "Event":
        return Event(self.id, self.etype, self.source, self.ts, self.attrs, self.geo, seq)


@dataclass(frozen=True)
class Triple:
    """One (subject, predicate, object) fact of an event's triple view."""

    subject: str
    predicate: str
    object: Scalar


def _check_scalar(name: str, value: object) -> Scalar:
    if isinstance(value, bool):
        return value
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvalidEvent(f"attribute {name!r} is not finite: {value!r}")
        return value
    if isinstance(value, str):
        return value
    raise InvalidEvent(f"attribute {name!r} has non-scalar value {value!r}")


def validate_event(event: Event) -> None:
    """Check all model invariants, raising InvalidEvent on the first violation."""
    if not event.id or not isinstance(event.id, str):
        raise InvalidEvent(f"id must be a non-empty string, got {event.id!r}")
    if not event.etype or not isinstance(event.etype, str):
        raise InvalidEvent(f"etype must be a non-empty string, got {event.etype!r}")
    if not isinstance(event.source, str) or not event.source:
        raise InvalidEvent(f"source must be a non-empty string, got {event.source!r}")
    if isinstance(event.ts, bool) or not isinstance(event.ts, int):
        raise InvalidEvent(f"ts must be an integer, got {event.ts!r}")
    if event.ts < 0:
        raise InvalidEvent(f"ts must be >= 0, got {event.ts}")
    if event.seq is not None and (isinstance(event.seq, bool) or not isinstance(event.seq, int) or event.seq < 1):
        raise InvalidEvent(f"seq must be a positive integer or None, got {event.seq!r}")
    for name, value in event.attrs.items():
        if not isinstance(name, str) or not name:
            raise InvalidEvent(f"attribute name must be a non-empty string, got {name!r}")
        _check_scalar(name, value)
    if event.geo is not None:
        lat, lon = event.geo
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise InvalidEvent(f"geo coordinates must be finite, got {event.geo!r}")


_id_counter = itertools.count(1)


def _fresh_id() -> str:
    return f"ev-{next(_id_counter):06d}"


def make_event(
    etype: str,
    source: str,
    ts: int,
    attrs: dict[str, Scalar] | None = None,
    geo: tuple[float, float] | None = None,
    event_id: str | None = None,
) -> Event:
    """Build a validated event with a fresh id and seq unset.

    The scenario driver passes ``event_id`` to keep ids deterministic
    across replays; ad-hoc callers let the module counter assign one.
    """
    if geo is not None:
        geo = (float(geo[0]), float(geo[1]))
    event = Event(
        id=event_id if event_id is not None else _fresh_id(),
        etype=etype,
        source=source,
        ts=ts,
        attrs=dict(attrs) if attrs else {},
        geo=geo,
    )
    validate_event(event)
    return event


def encode_event(event: Event) -> str:
    """Serialize to the canonical single-line format (no trailing newline).

    Numbers use Python's shortest round-trip repr via json; absent optional
    fields (seq before publish, geo) are omitted entirely.
    """
    validate_event(event)
    obj: dict[str, object] = {}
    if event.seq is not None:
        obj["seq"] = event.seq
    obj["id"] = event.id
    obj["etype"] = event.etype
    obj["source"] = event.source
    obj["ts"] = event.ts
    obj["attrs"] = dict(sorted(event.attrs.items()))
    if event.geo is not None:
        obj["geo"] = [event.geo[0], event.geo[1]]
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def decode_event(line: str) -> Event:
    """Parse one canonical line back into an Event.

    Inverse of encode_event on canonical input; lenient about key order but
    strict about structure (unknown keys, wrong types and missing required
    fields are DecodeErrors).
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        offset = len(line[: exc.pos].encode("utf-8"))
        raise DecodeError(f"invalid JSON: {exc.msg}", offset) from exc
    if not isinstance(obj, dict):
        raise DecodeError(f"expected a JSON object, got {type(obj).__name__}")
    unknown = set(obj) - set(_WIRE_KEYS)
    if unknown:
        raise DecodeError(f"unknown keys {sorted(unknown)}")
    for required in ("id", "etype", "source", "ts", "attrs"):
        if required not in obj:
            raise DecodeError(f"missing required key {required!r}")
    attrs = obj["attrs"]
    if not isinstance(attrs, dict):
        raise DecodeError("attrs must be an object")
    geo = None
    if "geo" in obj:
        raw = obj["geo"]
        if not (isinstance(raw, list) and len(raw) == 2 and all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in raw)):
            raise DecodeError(f"geo must be a [lat, lon] pair, got {raw!r}")
        geo = (float(raw[0]), float(raw[1]))
    event = Event(
        id=obj["id"],
        etype=obj["etype"],
        source=obj["source"],
        ts=obj["ts"],
        attrs=attrs,
        geo=geo,
        seq=obj.get("seq"),
    )
    try:
        validate_event(event)
    except InvalidEvent as exc:
        raise DecodeError(str(exc)) from exc
    return event


def as_triples(event: Event) -> list[Triple]:
    """Flatten an event to its triple view.

    Deterministic: three fixed triples (etype, source, ts), then one per
    attribute in sorted order, then the geo triple last when present, so
    ``len == len(attrs) + 3 (+1 with geo)``.
    """
    validate_event(event)
    triples = [
        Triple(event.id, "etype", event.etype),
        Triple(event.id, "source", event.source),
        Triple(event.id, "ts", event.ts),
    ]
    for name in sorted(event.attrs):
        triples.append(Triple(event.id, name, event.attrs[name]))
    if event.geo is not None:
        triples.append(Triple(event.id, "geo", f"{event.geo[0]!r},{event.geo[1]!r}"))
    return triples
