"""Content-based publish/subscribe broker with a sharded event history.

The broker serializes global sequence assignment, forwards each published
event to every matching subscription exactly once, and appends it to a
time-indexed history shard chosen by event type.  Subscribers receive
events in publish (seq) order; the platform publishes with non-decreasing
timestamps, so per-subscriber delivery is time-ordered.

History queries are range scans sorted by (ts, source, seq) and equal a
brute-force filter over the full log regardless of shard count.
"""

from __future__ import annotations

import queue
import threading
import zlib
from bisect import bisect_left
from typing import Callable, IO, Iterable

from .model import Event, InvalidEvent, encode_event
from .patterns import Pattern, match

Subscriber = Callable[[Event], None]


class UnknownSubscription(KeyError):
    """unsubscribe() of an id that is not (or no longer) registered."""


class InvalidRange(ValueError):
    """query_history with ts_from > ts_to."""


def shard_of(etype: str, n_shards: int) -> int:
    """Shard index for an event type: stable across runs and processes."""
    if n_shards < 1:
        raise ValueError(f"n_shards must be >= 1, got {n_shards}")
    return zlib.crc32(etype.encode("utf-8")) % n_shards


class HistoryStore:
    """Append-only per-shard logs indexed by timestamp.

    Events arrive in non-decreasing ts order within a shard (publish order),
    so range scans are two bisects plus a filter.
    """

    def __init__(self, n_shards: int = 1):
        if n_shards < 1:
            raise ValueError(f"n_shards must be >= 1, got {n_shards}")
        self.n_shards = n_shards
        self._shards: list[list[Event]] = [[] for _ in range(n_shards)]
        self._ts_index: list[list[int]] = [[] for _ in range(n_shards)]

    def append(self, event: Event) -> None:
        idx = shard_of(event.etype, self.n_shards)
        self._shards[idx].append(event)
        self._ts_index[idx].append(event.ts)

    def __len__(self) -> int:
        return sum(len(s) for s in self._shards)

    def shard_sizes(self) -> list[int]:
        return [len(s) for s in self._shards]

    def scan(self, ts_from: int, ts_to: int, pattern: Pattern) -> list[Event]:
        """All stored events with ts in [ts_from, ts_to) matching pattern,
        sorted by (ts, source, seq)."""
        if ts_from > ts_to:
            raise InvalidRange(f"ts_from {ts_from} > ts_to {ts_to}")
        out: list[Event] = []
        for idx in range(self.n_shards):
            ts_col = self._ts_index[idx]
            lo = bisect_left(ts_col, ts_from)
            hi = bisect_left(ts_col, ts_to)
            shard = self._shards[idx]
            for i in range(lo, hi):
                e = shard[i]
                if match(pattern, e):
                    out.append(e)
        out.sort(key=lambda e: (e.ts, e.source, e.seq if e.seq is not None else 0))
        return out

    def all_events(self) -> Iterable[Event]:
        for shard in self._shards:
            yield from shard


class Broker:
    """The event cloud: forwarding plus history.

    Thread-safe: publish, subscribe, unsubscribe and query_history may be
    called from any thread.  Matching subscribers are notified inside the
    publish critical section, which keeps delivery exactly-once and in
    publish order per subscriber; callbacks may re-publish (the lock is
    re-entrant) but must not block.
    """

    def __init__(self, n_shards: int = 1, log_sink: IO[str] | None = None):
        self._lock = threading.RLock()
        self._store = HistoryStore(n_shards)
        self._next_seq = 1
        self._subs: dict[str, tuple[Pattern, Subscriber]] = {}
        self._sub_counter = 0
        self._log_sink = log_sink

    @property
    def n_shards(self) -> int:
        return self._store.n_shards

    def publish(self, event: Event) -> int:
        """Assign the next global seq, store, forward; returns the seq."""
        if event.seq is not None:
            raise InvalidEvent(f"event {event.id} already published with seq {event.seq}")
        with self._lock:
            stamped = event.with_seq(self._next_seq)
            self._next_seq += 1
            self._store.append(stamped)
            if self._log_sink is not None:
                self._log_sink.write(encode_event(stamped) + "\n")
            for pattern, deliver in list(self._subs.values()):
                if match(pattern, stamped):
                    deliver(stamped)
            return stamped.seq

    def subscribe(self, pattern: Pattern, subscriber: Subscriber | queue.Queue) -> str:
        """Register for future matching publishes (no retroactive delivery).

        ``subscriber`` is either a callable or a queue; queue subscribers
        get events put() in delivery order.
        """
        deliver = subscriber.put if isinstance(subscriber, queue.Queue) else subscriber
        with self._lock:
            self._sub_counter += 1
            sub_id = f"sub-{self._sub_counter}"
            self._subs[sub_id] = (pattern, deliver)
            return sub_id

    def unsubscribe(self, sub_id: str) -> None:
        with self._lock:
            if sub_id not in self._subs:
                raise UnknownSubscription(sub_id)
            del self._subs[sub_id]

    def query_history(self, ts_from: int, ts_to: int, pattern: Pattern | None = None) -> list[Event]:
        """Stored events with ts in [ts_from, ts_to) matching the pattern."""
        with self._lock:
            return self._store.scan(ts_from, ts_to, pattern or Pattern())

    def event_count(self) -> int:
        with self._lock:
            return len(self._store)

    def shard_sizes(self) -> list[int]:
        with self._lock:
            return self._store.shard_sizes()

    def load(self, events: Iterable[Event]) -> None:
        """Seed the store with already-sequenced events (log replay)."""
        with self._lock:
            for event in events:
                if event.seq is None:
                    raise InvalidEvent(f"replayed event {event.id} has no seq")
                self._store.append(event)
                self._next_seq = max(self._next_seq, event.seq + 1)
