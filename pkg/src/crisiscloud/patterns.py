"""Content-based subscription patterns and the match predicate.

A Pattern is a conjunction of optional filters: event-type set, attribute
comparisons, a geo radius, and a source set.  A pattern with every filter
absent matches every event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import Event, Scalar

EARTH_RADIUS_KM = 6371.0

_OPS = ("==", "!=", "<", "<=", ">", ">=")
_ORDERING_OPS = ("<", "<=", ">", ">=")


class TypeMismatch(TypeError):
    """An ordering predicate compared incompatible scalar kinds."""


class MalformedPattern(ValueError):
    """Raised when a pattern document fails structural validation."""


@dataclass(frozen=True)
class GeoFilter:
    lat: float
    lon: float
    radius_km: float


@dataclass(frozen=True)
class Pattern:
    """Conjunctive content filter over events.

    predicates entries are (attribute name, operator, scalar); supported
    operators: ==, !=, <, <=, >, >=.
    """

    etypes: frozenset[str] | None = None
    predicates: tuple[tuple[str, str, Scalar], ...] = field(default_factory=tuple)
    geo: GeoFilter | None = None
    sources: frozenset[str] | None = None

    def __post_init__(self):
        for attr, op, value in self.predicates:
            if op not in _OPS:
                raise MalformedPattern(f"unknown operator {op!r} in predicate on {attr!r}")

    @staticmethod
    def of(
        etypes=None,
        predicates=None,
        geo: tuple[float, float, float] | None = None,
        sources=None,
    ) -> "Pattern":
        """Convenience constructor taking plain containers."""
        return Pattern(
            etypes=frozenset(etypes) if etypes is not None else None,
            predicates=tuple((a, op, v) for a, op, v in (predicates or [])),
            geo=GeoFilter(*geo) if geo is not None else None,
            sources=frozenset(sources) if sources is not None else None,
        )

    def to_dict(self) -> dict:
        """Wire form used by the gateway (documented in docs/api.md)."""
        doc: dict = {}
        if self.etypes is not None:
            doc["etypes"] = sorted(self.etypes)
        if self.predicates:
            doc["predicates"] = [[a, op, v] for a, op, v in self.predicates]
        if self.geo is not None:
            doc["geo"] = {"lat": self.geo.lat, "lon": self.geo.lon, "radius_km": self.geo.radius_km}
        if self.sources is not None:
            doc["sources"] = sorted(self.sources)
        return doc

    @staticmethod
    def from_dict(doc: dict) -> "Pattern":
        if not isinstance(doc, dict):
            raise MalformedPattern(f"pattern must be an object, got {type(doc).__name__}")
        unknown = set(doc) - {"etypes", "predicates", "geo", "sources"}
        if unknown:
            raise MalformedPattern(f"unknown pattern keys {sorted(unknown)}")
        geo = None
        if "geo" in doc:
            g = doc["geo"]
            try:
                geo = (float(g["lat"]), float(g["lon"]), float(g["radius_km"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedPattern(f"bad geo filter {g!r}") from exc
        preds = []
        for entry in doc.get("predicates", []):
            if not (isinstance(entry, (list, tuple)) and len(entry) == 3):
                raise MalformedPattern(f"bad predicate {entry!r}")
            preds.append(tuple(entry))
        return Pattern.of(
            etypes=doc.get("etypes"),
            predicates=preds,
            geo=geo,
            sources=doc.get("sources"),
        )


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on a sphere of radius 6371.0 km."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


def _kind(value: Scalar) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, (int, float)):
        return "number"
    return "str"


def _compare(attr: str, actual: Scalar, op: str, wanted: Scalar) -> bool:
    if op == "==":
        return _kind(actual) == _kind(wanted) and actual == wanted
    if op == "!=":
        return not (_kind(actual) == _kind(wanted) and actual == wanted)
    # Ordering: both numeric or both strings, anything else is a caller bug.
    ka, kw = _kind(actual), _kind(wanted)
    if ka != kw or ka == "bool":
        raise TypeMismatch(f"cannot order {attr!r}: {actual!r} {op} {wanted!r}")
    if op == "<":
        return actual < wanted
    if op == "<=":
        return actual <= wanted
    if op == ">":
        return actual > wanted
    return actual >= wanted


def match(pattern: Pattern, event: Event) -> bool:
    """True iff every present filter is satisfied (pure function).

    A predicate on an attribute the event does not carry fails the match;
    a geo filter fails against events without coordinates.
    """
    if pattern.etypes is not None and event.etype not in pattern.etypes:
        return False
    if pattern.sources is not None and event.source not in pattern.sources:
        return False
    for attr, op, wanted in pattern.predicates:
        if attr not in event.attrs:
            return False
        if not _compare(attr, event.attrs[attr], op, wanted):
            return False
    if pattern.geo is not None:
        if event.geo is None:
            return False
        dist = haversine_km(pattern.geo.lat, pattern.geo.lon, event.geo[0], event.geo[1])
        if dist > pattern.geo.radius_km:
            return False
    return True
