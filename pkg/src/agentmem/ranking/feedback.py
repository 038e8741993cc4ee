"""Behavioral feedback, isolated from the memory store.

Everything the ranker learns from lives in its own single-file database
so one command can erase it without touching stored memories. The file
is created lazily on first write and reset() deletes it outright.
"""

from __future__ import annotations

import os
import sqlite3
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..patterns import PatternState

CONSUMPTION_CHANNELS = ("tool_used", "cli_useful", "dashboard_click")
CHANNEL_POLARITY = {
    "tool_used": 1.0,
    "cli_useful": 1.0,
    "dashboard_click": 1.0,
    "passive_decay": -0.1,
}

_SCHEMA = """
CREATE TABLE IF NOT EXISTS feedback (
    id         INTEGER PRIMARY KEY AUTOINCREMENT,
    channel    TEXT NOT NULL,
    memory_id  INTEGER NOT NULL,
    query      TEXT NOT NULL DEFAULT '',
    query_norm TEXT NOT NULL DEFAULT '',
    polarity   REAL NOT NULL,
    ts         INTEGER NOT NULL,
    synthetic  INTEGER NOT NULL DEFAULT 0
);

CREATE TABLE IF NOT EXISTS pattern_states (
    kind     TEXT NOT NULL,
    category TEXT NOT NULL,
    alpha    REAL NOT NULL,
    beta     REAL NOT NULL,
    k        INTEGER NOT NULL,
    n        INTEGER NOT NULL,
    PRIMARY KEY (kind, category)
);

CREATE TABLE IF NOT EXISTS models (
    name       TEXT PRIMARY KEY,
    payload    TEXT NOT NULL,
    meta       TEXT NOT NULL DEFAULT '{}',
    trained_at INTEGER NOT NULL
);

CREATE TABLE IF NOT EXISTS display_counts (
    memory_id INTEGER PRIMARY KEY,
    shown     INTEGER NOT NULL DEFAULT 0
);
"""


def normalize_query(query: str) -> str:
    """Lowercase, whitespace-collapsed, token-sorted form for dedup."""
    return " ".join(sorted(query.lower().split()))


@dataclass(frozen=True)
class FeedbackSignal:
    channel: str
    memory_id: int
    query: str
    polarity: float
    timestamp: int

    @classmethod
    def make(cls, channel: str, memory_id: int, query: str, timestamp: int) -> "FeedbackSignal":
        if channel not in CHANNEL_POLARITY:
            raise ValueError(f"unknown feedback channel {channel!r}")
        return cls(channel, memory_id, query, CHANNEL_POLARITY[channel], timestamp)


class LearningStore:
    """Lazily created SQLite file; all writes behind one lock."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.RLock()
        self._conn: Optional[sqlite3.Connection] = None
        self._signal_count: Optional[int] = None
        self._query_count: Optional[int] = None
        # Display counters live in memory on the hot recall path and are
        # persisted on flush/close; losing a partial window on crash only
        # delays a weak negative signal.
        self._display: Optional[dict[int, int]] = None
        self._display_dirty: set[int] = set()
        if self.path.exists():
            self._open()

    def _open(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(self.path, check_same_thread=False, timeout=30.0)
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA synchronous=NORMAL")
        self._conn.executescript(_SCHEMA)
        self._conn.commit()

    def _writable(self) -> sqlite3.Connection:
        if self._conn is None:
            self._open()
        return self._conn

    def exists(self) -> bool:
        return self.path.exists()

    # -- feedback ---------------------------------------------------------

    def record(self, signal: FeedbackSignal, synthetic: bool = False) -> None:
        with self._lock:
            conn = self._writable()
            conn.execute(
                "INSERT INTO feedback (channel, memory_id, query, query_norm,"
                " polarity, ts, synthetic) VALUES (?,?,?,?,?,?,?)",
                (
                    signal.channel,
                    signal.memory_id,
                    signal.query,
                    normalize_query(signal.query),
                    signal.polarity,
                    signal.timestamp,
                    1 if synthetic else 0,
                ),
            )
            conn.commit()
            if not synthetic:
                self._signal_count = None
                self._query_count = None

    def counts(self) -> tuple[int, int]:
        """(real signal count, distinct normalized non-empty queries)."""
        with self._lock:
            if self._conn is None:
                return 0, 0
            if self._signal_count is None:
                self._signal_count = self._conn.execute(
                    "SELECT COUNT(*) FROM feedback WHERE synthetic=0"
                ).fetchone()[0]
                self._query_count = self._conn.execute(
                    "SELECT COUNT(DISTINCT query_norm) FROM feedback"
                    " WHERE synthetic=0 AND query_norm != ''"
                ).fetchone()[0]
            return self._signal_count, self._query_count

    def signals(
        self, positive_only: bool = False, include_synthetic: bool = False
    ) -> list[FeedbackSignal]:
        with self._lock:
            if self._conn is None:
                return []
            sql = "SELECT channel, memory_id, query, polarity, ts FROM feedback WHERE 1=1"
            if not include_synthetic:
                sql += " AND synthetic=0"
            if positive_only:
                sql += " AND polarity > 0"
            rows = self._conn.execute(sql + " ORDER BY ts, id").fetchall()
        return [FeedbackSignal(r[0], r[1], r[2], r[3], r[4]) for r in rows]

    # -- display bookkeeping (passive decay) -------------------------------

    def _display_map(self) -> dict[int, int]:
        if self._display is None:
            self._display = {}
            if self._conn is not None:
                for mem_id, shown in self._conn.execute(
                    "SELECT memory_id, shown FROM display_counts"
                ):
                    self._display[mem_id] = shown
        return self._display

    def note_displayed(self, memory_ids: list[int], threshold: int) -> list[int]:
        """Count result-set appearances; returns ids that just crossed the
        no-consumption threshold (their counters reset)."""
        crossed = []
        with self._lock:
            display = self._display_map()
            for mem_id in memory_ids:
                shown = display.get(mem_id, 0) + 1
                if shown >= threshold:
                    crossed.append(mem_id)
                    shown = 0
                display[mem_id] = shown
                self._display_dirty.add(mem_id)
        return crossed

    def note_consumed(self, memory_id: int) -> None:
        with self._lock:
            display = self._display_map()
            display[memory_id] = 0
            self._display_dirty.add(memory_id)

    def flush_display(self) -> None:
        with self._lock:
            if not self._display_dirty or self._display is None:
                return
            conn = self._writable()
            conn.executemany(
                "INSERT INTO display_counts (memory_id, shown) VALUES (?,?)"
                " ON CONFLICT(memory_id) DO UPDATE SET shown=excluded.shown",
                [(mid, self._display[mid]) for mid in sorted(self._display_dirty)],
            )
            conn.commit()
            self._display_dirty.clear()

    # -- pattern states -----------------------------------------------------

    def save_pattern(self, state: PatternState) -> None:
        with self._lock:
            conn = self._writable()
            conn.execute(
                "INSERT OR REPLACE INTO pattern_states"
                " (kind, category, alpha, beta, k, n) VALUES (?,?,?,?,?,?)",
                (
                    state.pattern_kind,
                    state.category,
                    state.alpha,
                    state.beta,
                    state.k,
                    state.n,
                ),
            )
            conn.commit()

    def load_patterns(self) -> list[PatternState]:
        with self._lock:
            if self._conn is None:
                return []
            rows = self._conn.execute(
                "SELECT kind, category, alpha, beta, k, n FROM pattern_states"
            ).fetchall()
        return [PatternState(*row) for row in rows]

    # -- models --------------------------------------------------------------

    def save_model(self, name: str, payload: str, meta: str, trained_at: int) -> None:
        with self._lock:
            conn = self._writable()
            conn.execute(
                "INSERT OR REPLACE INTO models (name, payload, meta, trained_at)"
                " VALUES (?,?,?,?)",
                (name, payload, meta, trained_at),
            )
            conn.commit()

    def load_model(self, name: str) -> Optional[tuple[str, str]]:
        with self._lock:
            if self._conn is None:
                return None
            row = self._conn.execute(
                "SELECT payload, meta FROM models WHERE name=?", (name,)
            ).fetchone()
        return (row[0], row[1]) if row else None

    # -- lifecycle -------------------------------------------------------------

    def reset(self) -> None:
        """Delete the whole learning store in one operation."""
        with self._lock:
            if self._conn is not None:
                self._conn.close()
                self._conn = None
            for suffix in ("", "-wal", "-shm"):
                p = Path(str(self.path) + suffix)
                if p.exists():
                    os.remove(p)
            self._signal_count = None
            self._query_count = None
            self._display = {}
            self._display_dirty.clear()

    def close(self) -> None:
        with self._lock:
            self.flush_display()
            if self._conn is not None:
                self._conn.commit()
                self._conn.close()
                self._conn = None
