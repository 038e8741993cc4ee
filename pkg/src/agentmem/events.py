"""Event coordination: persistent log, ring buffer, retention, registry.

Publishing assigns sequence numbers and fans out to subscribers under one
lock, so every subscriber observes the same total order. Durable appends
are batched onto a background thread; ``flush()`` is the barrier.

Retention tiers by event age: hot (<=48h, in the ring buffer with full
payload), warm (<=14d, log only), cold (<=30d, payload dropped), then
deleted after folding into per-day per-type counters kept indefinitely.
"""

from __future__ import annotations

import json
import logging
import queue
import sqlite3
import threading
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

from .clock import Clock, DAY_MS, HOUR_MS

logger = logging.getLogger(__name__)

EVENT_TYPES = frozenset(
    {
        "memory.created",
        "memory.recalled",
        "memory.deleted",
        "agent.connected",
        "graph.updated",
        "trust.changed",
        "feedback.recorded",
    }
)

RING_CAPACITY = 200
SUBSCRIBER_BACKLOG = 1000
HOT_MS = 48 * HOUR_MS
WARM_MS = 14 * DAY_MS
COLD_MS = 30 * DAY_MS

_SCHEMA = """
CREATE TABLE IF NOT EXISTS events (
    seq     INTEGER PRIMARY KEY,
    type    TEXT NOT NULL,
    agent   TEXT,
    payload TEXT,
    ts      INTEGER NOT NULL,
    tier    TEXT NOT NULL DEFAULT 'hot'
);
CREATE INDEX IF NOT EXISTS idx_events_ts ON events(ts);

CREATE TABLE IF NOT EXISTS event_aggregates (
    day   TEXT NOT NULL,
    type  TEXT NOT NULL,
    count INTEGER NOT NULL,
    PRIMARY KEY (day, type)
);
"""


@dataclass(frozen=True)
class Event:
    seq: int
    type: str
    agent: Optional[str]
    payload: dict
    timestamp: int

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "type": self.type,
            "agent": self.agent,
            "payload": self.payload,
            "timestamp": self.timestamp,
        }


@dataclass
class SweepReport:
    demoted: int = 0
    pruned: int = 0
    aggregated: int = 0


class Subscription:
    """One consumer. Reads block on an internal queue; a consumer that
    falls more than the backlog limit behind is disconnected rather than
    ever slowing the publisher."""

    def __init__(self, types: Optional[set[str]], backlog: int):
        self.types = types
        self._queue: queue.Queue = queue.Queue()
        self._backlog = backlog
        self.closed = False

    def _offer(self, event: Event) -> bool:
        if self.closed:
            return False
        if self.types is not None and event.type not in self.types:
            return True
        if self._queue.qsize() >= self._backlog:
            self.closed = True
            return False
        self._queue.put(event)
        return True

    def get(self, timeout: Optional[float] = None) -> Optional[Event]:
        if self.closed and self._queue.empty():
            return None
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None

    def drain(self) -> list[Event]:
        out = []
        while True:
            try:
                out.append(self._queue.get_nowait())
            except queue.Empty:
                return out

    def close(self) -> None:
        self.closed = True


def _day_of(ts_ms: int) -> str:
    return datetime.fromtimestamp(ts_ms / 1000, tz=timezone.utc).strftime("%Y-%m-%d")


class EventBus:
    def __init__(self, path: str | Path, clock: Optional[Clock] = None):
        self.path = Path(path)
        self.clock = clock or Clock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._db_lock = threading.Lock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False, timeout=30.0)
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA synchronous=NORMAL")
        self._conn.executescript(_SCHEMA)
        self._conn.commit()

        self._pub_lock = threading.Lock()
        self._ring: deque[Event] = deque(maxlen=RING_CAPACITY)
        self._subs: list[Subscription] = []
        row = self._conn.execute("SELECT MAX(seq) FROM events").fetchone()
        self._seq = row[0] or 0
        for r in self._conn.execute(
            "SELECT seq, type, agent, payload, ts FROM events"
            " WHERE payload IS NOT NULL ORDER BY seq DESC LIMIT ?",
            (RING_CAPACITY,),
        ).fetchall()[::-1]:
            self._ring.append(Event(r[0], r[1], r[2], json.loads(r[3]), r[4]))

        self._persist_queue: queue.Queue = queue.Queue()
        self._closed = False
        self._persister = threading.Thread(
            target=self._persist_loop, name="eventbus-persist", daemon=True
        )
        self._persister.start()

    # -- publishing -----------------------------------------------------

    def publish(
        self, type: str, agent: Optional[str] = None, payload: Optional[dict] = None
    ) -> int:
        if type not in EVENT_TYPES:
            raise ValueError(f"unknown event type {type!r}")
        with self._pub_lock:
            self._seq += 1
            event = Event(self._seq, type, agent, payload or {}, self.clock.now_ms())
            self._ring.append(event)
            self._subs = [s for s in self._subs if s._offer(event)]
        self._persist_queue.put(event)
        return event.seq

    def _persist_loop(self) -> None:
        while True:
            item = self._persist_queue.get()
            if item is None:
                break
            batch = [item]
            while len(batch) < 256:
                try:
                    nxt = self._persist_queue.get_nowait()
                except queue.Empty:
                    break
                if nxt is None:
                    self._persist_queue.put(None)
                    break
                batch.append(nxt)
            events = [e for e in batch if isinstance(e, Event)]
            barriers = [e for e in batch if isinstance(e, threading.Event)]
            if events:
                with self._db_lock:
                    self._conn.executemany(
                        "INSERT OR IGNORE INTO events (seq, type, agent, payload, ts)"
                        " VALUES (?,?,?,?,?)",
                        [
                            (e.seq, e.type, e.agent, json.dumps(e.payload), e.timestamp)
                            for e in events
                        ],
                    )
                    self._conn.commit()
            for b in barriers:
                b.set()

    def flush(self) -> None:
        barrier = threading.Event()
        self._persist_queue.put(barrier)
        barrier.wait(timeout=30)

    # -- subscriptions ----------------------------------------------------

    def subscribe(
        self, types: Optional[Iterable[str]] = None, replay_buffer: bool = False
    ) -> Subscription:
        type_set = set(types) if types is not None else None
        sub = Subscription(type_set, SUBSCRIBER_BACKLOG)
        with self._pub_lock:
            if replay_buffer:
                for event in self._ring:
                    sub._offer(event)
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        sub.close()
        with self._pub_lock:
            if sub in self._subs:
                self._subs.remove(sub)

    def recent(self, count: int = 20, types: Optional[set[str]] = None) -> list[Event]:
        with self._pub_lock:
            events = list(self._ring)
        if types:
            events = [e for e in events if e.type in types]
        return events[-count:]

    # -- retention --------------------------------------------------------

    def retention_sweep(self, now_ms: Optional[int] = None) -> SweepReport:
        now = now_ms if now_ms is not None else self.clock.now_ms()
        self.flush()
        report = SweepReport()
        with self._db_lock:
            cur = self._conn.execute(
                "UPDATE events SET tier='warm' WHERE tier='hot' AND ts < ?",
                (now - HOT_MS,),
            )
            report.demoted += cur.rowcount
            cur = self._conn.execute(
                "UPDATE events SET tier='cold', payload=NULL"
                " WHERE tier='warm' AND ts < ?",
                (now - WARM_MS,),
            )
            report.demoted += cur.rowcount

            expired = self._conn.execute(
                "SELECT ts, type, COUNT(*) FROM events WHERE ts < ?"
                " GROUP BY ts/?, type",
                (now - COLD_MS, DAY_MS),
            ).fetchall()
            folds: dict[tuple[str, str], int] = {}
            for ts, type_, cnt in expired:
                key = (_day_of(ts), type_)
                folds[key] = folds.get(key, 0) + cnt
            for (day, type_), cnt in sorted(folds.items()):
                self._conn.execute(
                    "INSERT INTO event_aggregates (day, type, count) VALUES (?,?,?)"
                    " ON CONFLICT(day, type) DO UPDATE SET count = count + ?",
                    (day, type_, cnt, cnt),
                )
                report.aggregated += cnt
            cur = self._conn.execute(
                "DELETE FROM events WHERE ts < ?", (now - COLD_MS,)
            )
            report.pruned = cur.rowcount
            self._conn.commit()
        return report

    def tier_of(self, seq: int) -> Optional[str]:
        with self._db_lock:
            row = self._conn.execute(
                "SELECT tier FROM events WHERE seq=?", (seq,)
            ).fetchone()
        return row[0] if row else None

    def aggregate_counts(self) -> dict[tuple[str, str], int]:
        with self._db_lock:
            rows = self._conn.execute(
                "SELECT day, type, count FROM event_aggregates"
            ).fetchall()
        return {(r[0], r[1]): r[2] for r in rows}

    def log_count(self) -> int:
        with self._db_lock:
            return self._conn.execute("SELECT COUNT(*) FROM events").fetchone()[0]

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._persist_queue.put(None)
        self._persister.join(timeout=30)
        with self._db_lock:
            self._conn.commit()
            self._conn.close()


@dataclass
class AgentProfile:
    agent: str
    protocol: str
    write_count: int = 0
    recall_count: int = 0
    first_seen: int = 0
    last_seen: int = 0

    def to_dict(self) -> dict:
        return {
            "agent": self.agent,
            "protocol": self.protocol,
            "write_count": self.write_count,
            "recall_count": self.recall_count,
            "first_seen": self.first_seen,
            "last_seen": self.last_seen,
        }


class AgentRegistry:
    """Protocol-aware per-agent counters; persisted via the store writer."""

    def __init__(self, store, bus: Optional[EventBus] = None):
        self._store = store
        self._bus = bus
        self._lock = threading.Lock()
        self._profiles: dict[str, AgentProfile] = {}
        for row in store.read_conn().execute(
            "SELECT id, protocol, write_count, recall_count, first_seen, last_seen"
            " FROM agents"
        ):
            self._profiles[row[0]] = AgentProfile(*row)

    def ensure(self, agent: str, protocol: str) -> AgentProfile:
        """Create or update a profile; re-registering with a different
        protocol updates the protocol and preserves counters."""
        published = False
        with self._lock:
            profile = self._profiles.get(agent)
            now = self._store.clock.now_ms()
            if profile is None:
                profile = AgentProfile(agent, protocol, 0, 0, now, now)
                self._profiles[agent] = profile
                published = True
            elif profile.protocol != protocol:
                profile.protocol = protocol
            self._persist(profile)
            snap = AgentProfile(**profile.to_dict() | {})
        if published and self._bus is not None:
            self._bus.publish("agent.connected", agent=agent, payload={"protocol": protocol})
        return snap

    def touch(self, agent: str, op_kind: str) -> None:
        with self._lock:
            profile = self._profiles.get(agent)
            if profile is None:
                return
            if op_kind == "write":
                profile.write_count += 1
            elif op_kind == "recall":
                profile.recall_count += 1
            profile.last_seen = self._store.clock.now_ms()
            self._persist(profile)

    def _persist(self, profile: AgentProfile) -> None:
        snap = (
            profile.agent,
            profile.protocol,
            profile.write_count,
            profile.recall_count,
            profile.first_seen,
            profile.last_seen,
        )

        def work(conn):
            conn.execute(
                "INSERT OR REPLACE INTO agents"
                " (id, protocol, write_count, recall_count, first_seen, last_seen)"
                " VALUES (?,?,?,?,?,?)",
                snap,
            )

        self._store.submit(work, wait=False)

    def get(self, agent: str) -> Optional[AgentProfile]:
        with self._lock:
            profile = self._profiles.get(agent)
            if profile is None:
                return None
            return AgentProfile(**profile.to_dict())

    def is_registered(self, agent: str) -> bool:
        with self._lock:
            return agent in self._profiles

    def all_profiles(self) -> list[AgentProfile]:
        with self._lock:
            return [AgentProfile(**p.to_dict()) for p in self._profiles.values()]
