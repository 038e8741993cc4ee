"""Persistent memory records.

Single SQLite file in WAL mode. All mutations are funneled through one
writer thread fed by an in-process queue (group-committed in batches),
so concurrent clients block briefly while queued but can never hit a
lock/contention error. Reads go to per-thread read connections that
never block on the writer.

Deletion is tombstoning: the row stays, flagged deleted, so provenance
chains survive for forensics. ``compact()`` performs the physical purge.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import sqlite3
import threading
from concurrent.futures import Future
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from .clock import Clock
from .errors import (
    InvalidImportance,
    IoFailure,
    NotFound,
    SchemaMismatch,
    UnknownParent,
)

logger = logging.getLogger(__name__)

PROTOCOLS = ("MCP", "CLI", "REST", "A2A")
PROV_ACTIONS = ("create", "update", "delete-request")

EXPORT_VERSION = 1

_SCHEMA = """
CREATE TABLE IF NOT EXISTS meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);

CREATE TABLE IF NOT EXISTS memories (
    id              INTEGER PRIMARY KEY,
    content         TEXT NOT NULL,
    tags            TEXT NOT NULL DEFAULT '[]',
    importance      INTEGER NOT NULL,
    created_at      INTEGER NOT NULL,
    updated_at      INTEGER NOT NULL,
    parent_id       INTEGER,
    path            TEXT NOT NULL,
    entity_vector   TEXT,
    created_by      TEXT NOT NULL,
    source_protocol TEXT NOT NULL,
    trust_at_write  REAL NOT NULL,
    chain           TEXT NOT NULL,
    access_count    INTEGER NOT NULL DEFAULT 0,
    deleted         INTEGER NOT NULL DEFAULT 0
);

CREATE INDEX IF NOT EXISTS idx_mem_parent ON memories(parent_id);
CREATE INDEX IF NOT EXISTS idx_mem_path ON memories(path);
CREATE INDEX IF NOT EXISTS idx_mem_deleted ON memories(deleted);

CREATE TABLE IF NOT EXISTS agents (
    id           TEXT PRIMARY KEY,
    protocol     TEXT NOT NULL,
    write_count  INTEGER NOT NULL DEFAULT 0,
    recall_count INTEGER NOT NULL DEFAULT 0,
    first_seen   INTEGER NOT NULL,
    last_seen    INTEGER NOT NULL
);

CREATE TABLE IF NOT EXISTS trust (
    agent  TEXT PRIMARY KEY,
    alpha  REAL NOT NULL,
    beta   REAL NOT NULL,
    t_inc  REAL NOT NULL,
    n      INTEGER NOT NULL
);
"""


@dataclass
class ProvenanceEntry:
    agent: str
    action: str
    timestamp: int
    note: Optional[str] = None

    def to_dict(self) -> dict:
        d = {"agent": self.agent, "action": self.action, "timestamp": self.timestamp}
        if self.note is not None:
            d["note"] = self.note
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProvenanceEntry":
        return cls(d["agent"], d["action"], d["timestamp"], d.get("note"))


@dataclass
class ProvenanceBlock:
    created_by: str
    source_protocol: str
    trust_at_write: float
    chain: list[ProvenanceEntry] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "created_by": self.created_by,
            "source_protocol": self.source_protocol,
            "trust_at_write": self.trust_at_write,
            "chain": [e.to_dict() for e in self.chain],
        }


@dataclass
class MemoryRecord:
    id: int
    content: str
    tags: set[str]
    importance: int
    created_at: int
    updated_at: int
    parent_id: Optional[int]
    path: str
    entity_vector: Optional[dict[str, float]]
    provenance: ProvenanceBlock
    access_count: int = 0
    deleted: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "content": self.content,
            "tags": sorted(self.tags),
            "importance": self.importance,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "parent_id": self.parent_id,
            "path": self.path,
            "entity_vector": self.entity_vector,
            "access_count": self.access_count,
            "deleted": self.deleted,
            "provenance": self.provenance.to_dict(),
        }


@dataclass(frozen=True)
class AgentContext:
    """Caller-asserted identity attached to every mutation."""

    agent: str
    protocol: str = "CLI"


@dataclass
class _WorkItem:
    work: Callable[[sqlite3.Connection], Any]
    post: Optional[Callable[[Any], None]]
    future: Future


_STOP = object()
_BATCH_MAX = 128


class MemoryStore:
    """Embedded record store with one logical writer and pooled readers."""

    def __init__(self, path: str | Path, clock: Optional[Clock] = None):
        self.path = Path(path)
        self.clock = clock or Clock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._queue: queue.Queue = queue.Queue()
        self._local = threading.local()
        self._closed = False
        # Read-mostly record cache; mutations (all on the writer thread)
        # keep it coherent. Bounded by the 10k graph cap in practice.
        self._cache: dict[int, MemoryRecord] = {}

        self._write_conn = self._connect()
        self._write_conn.executescript(_SCHEMA)
        self._write_conn.commit()
        row = self._write_conn.execute(
            "SELECT value FROM meta WHERE key='next_id'"
        ).fetchone()
        self._next_id = int(row[0]) if row else 1

        self._writer = threading.Thread(
            target=self._writer_loop, name="memstore-writer", daemon=True
        )
        self._writer.start()

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.path, check_same_thread=False, timeout=30.0)
        conn.execute("PRAGMA journal_mode=WAL")
        conn.execute("PRAGMA synchronous=NORMAL")
        conn.execute("PRAGMA busy_timeout=30000")
        return conn

    def read_conn(self) -> sqlite3.Connection:
        """Per-thread read connection; safe alongside the writer under WAL."""
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = self._connect()
            self._local.conn = conn
        return conn

    # ------------------------------------------------------------------
    # Writer queue
    # ------------------------------------------------------------------

    def submit(
        self,
        work: Callable[[sqlite3.Connection], Any],
        post: Optional[Callable[[Any], None]] = None,
        wait: bool = True,
    ):
        """Run ``work`` on the writer thread inside the next group commit.

        ``post`` runs on the writer thread after the commit succeeds and
        before the caller unblocks (used for index/cache updates that must
        be visible once the call returns). With ``wait=False`` the call
        returns immediately and durability is deferred.
        """
        if self._closed:
            raise IoFailure("store is closed")
        item = _WorkItem(work, post, Future())
        self._queue.put(item)
        if wait:
            return item.future.result()
        return item.future

    def flush(self) -> None:
        """Barrier: returns once every previously queued mutation is durable."""
        self.submit(lambda conn: None)

    def _writer_loop(self) -> None:
        conn = self._write_conn
        while True:
            item = self._queue.get()
            if item is _STOP:
                break
            batch = [item]
            while len(batch) < _BATCH_MAX:
                try:
                    nxt = self._queue.get_nowait()
                except queue.Empty:
                    break
                if nxt is _STOP:
                    self._queue.put(nxt)
                    break
                batch.append(nxt)

            results: list[tuple[_WorkItem, Any, Optional[BaseException]]] = []
            for it in batch:
                try:
                    conn.execute("SAVEPOINT op")
                    value = it.work(conn)
                    conn.execute("RELEASE op")
                    results.append((it, value, None))
                except Exception as exc:  # per-op failure, batch continues
                    conn.execute("ROLLBACK TO op")
                    conn.execute("RELEASE op")
                    results.append((it, None, exc))
            conn.commit()

            for it, value, exc in results:
                if exc is None and it.post is not None:
                    try:
                        it.post(value)
                    except Exception:
                        logger.exception("post-commit hook failed")
                if exc is None:
                    it.future.set_result(value)
                else:
                    it.future.set_exception(exc)
        conn.commit()
        conn.close()

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._queue.put(_STOP)
        self._writer.join(timeout=30)

    # ------------------------------------------------------------------
    # Mutations (run on the writer thread)
    # ------------------------------------------------------------------

    def insert(
        self,
        content: str,
        tags: Iterable[str],
        importance: int,
        parent_id: Optional[int],
        created_by: str,
        source_protocol: str,
        trust_at_write: float,
        entity_vector: Optional[dict[str, float]] = None,
        post: Optional[Callable[[MemoryRecord], None]] = None,
    ) -> MemoryRecord:
        if not isinstance(importance, int) or not 1 <= importance <= 10:
            raise InvalidImportance(f"importance must be 1..10, got {importance!r}")
        tags = set(tags)

        def work(conn: sqlite3.Connection) -> MemoryRecord:
            if parent_id is not None:
                row = conn.execute(
                    "SELECT path FROM memories WHERE id=? AND deleted=0",
                    (parent_id,),
                ).fetchone()
                if row is None:
                    raise UnknownParent(f"parent {parent_id} not found")
                parent_path = row[0]
            else:
                parent_path = None

            mem_id = self._next_id
            self._next_id += 1
            conn.execute(
                "INSERT OR REPLACE INTO meta VALUES ('next_id', ?)",
                (str(self._next_id),),
            )
            now = self.clock.now_ms()
            path = f"{parent_path}/{mem_id}" if parent_path else str(mem_id)
            entry = ProvenanceEntry(created_by, "create", now)
            chain = json.dumps([entry.to_dict()])
            conn.execute(
                "INSERT INTO memories (id, content, tags, importance, created_at,"
                " updated_at, parent_id, path, entity_vector, created_by,"
                " source_protocol, trust_at_write, chain)"
                " VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?)",
                (
                    mem_id,
                    content,
                    json.dumps(sorted(tags)),
                    importance,
                    now,
                    now,
                    parent_id,
                    path,
                    json.dumps(entity_vector) if entity_vector else None,
                    created_by,
                    source_protocol,
                    trust_at_write,
                    chain,
                ),
            )
            return MemoryRecord(
                id=mem_id,
                content=content,
                tags=tags,
                importance=importance,
                created_at=now,
                updated_at=now,
                parent_id=parent_id,
                path=path,
                entity_vector=dict(entity_vector) if entity_vector else None,
                provenance=ProvenanceBlock(
                    created_by, source_protocol, trust_at_write, [entry]
                ),
            )

        def after(record: MemoryRecord) -> None:
            self._cache[record.id] = record
            if post is not None:
                post(record)

        return self.submit(work, post=after)

    def tombstone(
        self,
        mem_id: int,
        agent: str,
        post: Optional[Callable[[MemoryRecord], None]] = None,
    ) -> MemoryRecord:
        """Append a delete-request provenance entry, then mark deleted."""

        def work(conn: sqlite3.Connection) -> MemoryRecord:
            row = conn.execute(
                "SELECT chain FROM memories WHERE id=? AND deleted=0", (mem_id,)
            ).fetchone()
            if row is None:
                raise NotFound(f"memory {mem_id} not found")
            now = self.clock.now_ms()
            chain = json.loads(row[0])
            chain.append(ProvenanceEntry(agent, "delete-request", now).to_dict())
            conn.execute(
                "UPDATE memories SET chain=?, updated_at=?, deleted=1 WHERE id=?",
                (json.dumps(chain), now, mem_id),
            )
            return self._fetch(conn, mem_id, include_deleted=True)

        def after(record: MemoryRecord) -> None:
            self._cache.pop(mem_id, None)
            if post is not None:
                post(record)

        return self.submit(work, post=after)

    def update(
        self,
        mem_id: int,
        agent: str,
        content: Optional[str] = None,
        tags: Optional[Iterable[str]] = None,
        importance: Optional[int] = None,
        entity_vector: Optional[dict[str, float]] = None,
        note: Optional[str] = None,
        post: Optional[Callable[[MemoryRecord], None]] = None,
    ) -> MemoryRecord:
        """Field update; appends exactly one provenance entry per call."""
        if importance is not None and (
            not isinstance(importance, int) or not 1 <= importance <= 10
        ):
            raise InvalidImportance(f"importance must be 1..10, got {importance!r}")

        def work(conn: sqlite3.Connection) -> MemoryRecord:
            row = conn.execute(
                "SELECT chain FROM memories WHERE id=? AND deleted=0", (mem_id,)
            ).fetchone()
            if row is None:
                raise NotFound(f"memory {mem_id} not found")
            now = self.clock.now_ms()
            chain = json.loads(row[0])
            chain.append(ProvenanceEntry(agent, "update", now, note).to_dict())
            sets = ["chain=?", "updated_at=?"]
            args: list[Any] = [json.dumps(chain), now]
            if content is not None:
                sets.append("content=?")
                args.append(content)
            if tags is not None:
                sets.append("tags=?")
                args.append(json.dumps(sorted(set(tags))))
            if importance is not None:
                sets.append("importance=?")
                args.append(importance)
            if entity_vector is not None:
                sets.append("entity_vector=?")
                args.append(json.dumps(entity_vector))
            args.append(mem_id)
            conn.execute(f"UPDATE memories SET {', '.join(sets)} WHERE id=?", args)
            return self._fetch(conn, mem_id)

        def after(record: MemoryRecord) -> None:
            self._cache[mem_id] = record
            if post is not None:
                post(record)

        return self.submit(work, post=after)

    def append_provenance_note(self, mem_id: int, agent: str, note: str) -> None:
        """Forensic annotation (e.g. content flag) without field changes."""

        def work(conn: sqlite3.Connection) -> None:
            row = conn.execute(
                "SELECT chain FROM memories WHERE id=? AND deleted=0", (mem_id,)
            ).fetchone()
            if row is None:
                raise NotFound(f"memory {mem_id} not found")
            chain = json.loads(row[0])
            chain.append(
                ProvenanceEntry(agent, "update", self.clock.now_ms(), note).to_dict()
            )
            conn.execute(
                "UPDATE memories SET chain=? WHERE id=?", (json.dumps(chain), mem_id)
            )

        self.submit(work, post=lambda _res: self._cache.pop(mem_id, None))

    def bump_access(self, ids: list[int]) -> None:
        """Increment access counters; fire-and-forget (recall never waits)."""
        if not ids:
            return

        def work(conn: sqlite3.Connection) -> None:
            conn.executemany(
                "UPDATE memories SET access_count = access_count + 1 WHERE id=?",
                [(i,) for i in ids],
            )

        def after(_res) -> None:
            for mem_id in ids:
                record = self._cache.get(mem_id)
                if record is not None:
                    record.access_count += 1

        self.submit(work, post=after, wait=False)

    def compact(self) -> list[int]:
        """Physically purge tombstoned records; returns the purged ids."""

        def work(conn: sqlite3.Connection) -> list[int]:
            ids = [
                r[0]
                for r in conn.execute("SELECT id FROM memories WHERE deleted=1")
            ]
            conn.execute("DELETE FROM memories WHERE deleted=1")
            return ids

        return self.submit(work, post=lambda _ids: self._cache.clear())

    # ------------------------------------------------------------------
    # Reads
    # ------------------------------------------------------------------

    _COLS = (
        "id, content, tags, importance, created_at, updated_at, parent_id,"
        " path, entity_vector, created_by, source_protocol, trust_at_write,"
        " chain, access_count, deleted"
    )

    def _row_to_record(self, row) -> MemoryRecord:
        chain = [ProvenanceEntry.from_dict(d) for d in json.loads(row[12])]
        return MemoryRecord(
            id=row[0],
            content=row[1],
            tags=set(json.loads(row[2])),
            importance=row[3],
            created_at=row[4],
            updated_at=row[5],
            parent_id=row[6],
            path=row[7],
            entity_vector=json.loads(row[8]) if row[8] else None,
            provenance=ProvenanceBlock(row[9], row[10], row[11], chain),
            access_count=row[13],
            deleted=bool(row[14]),
        )

    def _fetch(
        self, conn: sqlite3.Connection, mem_id: int, include_deleted: bool = False
    ) -> MemoryRecord:
        where = "id=?" if include_deleted else "id=? AND deleted=0"
        row = conn.execute(
            f"SELECT {self._COLS} FROM memories WHERE {where}", (mem_id,)
        ).fetchone()
        if row is None:
            raise NotFound(f"memory {mem_id} not found")
        return self._row_to_record(row)

    def get(self, mem_id: int, include_deleted: bool = False) -> MemoryRecord:
        cached = self._cache.get(mem_id)
        if cached is not None and (include_deleted or not cached.deleted):
            return cached
        record = self._fetch(self.read_conn(), mem_id, include_deleted)
        if not record.deleted:
            self._cache[mem_id] = record
        return record

    def exists(self, mem_id: int) -> bool:
        row = self.read_conn().execute(
            "SELECT 1 FROM memories WHERE id=? AND deleted=0", (mem_id,)
        ).fetchone()
        return row is not None

    def children(self, mem_id: int) -> list[MemoryRecord]:
        if not self.exists(mem_id):
            raise NotFound(f"memory {mem_id} not found")
        rows = self.read_conn().execute(
            f"SELECT {self._COLS} FROM memories WHERE parent_id=? AND deleted=0"
            " ORDER BY id",
            (mem_id,),
        ).fetchall()
        return [self._row_to_record(r) for r in rows]

    def subtree(self, mem_id: int) -> list[MemoryRecord]:
        """All descendants (excluding the node itself) via path-prefix scan."""
        record = self.get(mem_id)
        prefix = record.path + "/"
        rows = self.read_conn().execute(
            f"SELECT {self._COLS} FROM memories WHERE path LIKE ? AND deleted=0"
            " ORDER BY id",
            (prefix + "%",),
        ).fetchall()
        return [self._row_to_record(r) for r in rows]

    def parent_of(self, mem_id: int) -> Optional[MemoryRecord]:
        record = self.get(mem_id)
        if record.parent_id is None:
            return None
        return self.get(record.parent_id)

    def all_live(self) -> list[MemoryRecord]:
        rows = self.read_conn().execute(
            f"SELECT {self._COLS} FROM memories WHERE deleted=0 ORDER BY id"
        ).fetchall()
        return [self._row_to_record(r) for r in rows]

    def all_records(self) -> list[MemoryRecord]:
        rows = self.read_conn().execute(
            f"SELECT {self._COLS} FROM memories ORDER BY id"
        ).fetchall()
        return [self._row_to_record(r) for r in rows]

    def count_live(self) -> int:
        return self.read_conn().execute(
            "SELECT COUNT(*) FROM memories WHERE deleted=0"
        ).fetchone()[0]

    def ids_touched_by(self, agent: str) -> list[int]:
        """Live ids whose provenance chain contains any entry by ``agent``."""
        out = []
        for rec in self.all_live():
            if any(e.agent == agent for e in rec.provenance.chain):
                out.append(rec.id)
        return out

    # ------------------------------------------------------------------
    # Export / import / maintenance
    # ------------------------------------------------------------------

    def export_json(self, dest: str | Path) -> int:
        records = self.all_records()
        payload = {
            "version": EXPORT_VERSION,
            "exported_at": self.clock.now_ms(),
            "memories": [r.to_dict() for r in records],
        }
        try:
            with open(dest, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, indent=1)
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        return len(records)

    def import_json(self, src: str | Path) -> int:
        try:
            with open(src, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise SchemaMismatch(f"not valid JSON: {exc}") from exc

        if not isinstance(payload, dict) or payload.get("version") != EXPORT_VERSION:
            raise SchemaMismatch("unrecognized export version")
        memories = payload.get("memories")
        if not isinstance(memories, list):
            raise SchemaMismatch("missing memories array")
        required = {
            "id", "content", "tags", "importance", "created_at", "updated_at",
            "parent_id", "path", "provenance",
        }
        for m in memories:
            if not isinstance(m, dict) or not required <= set(m):
                raise SchemaMismatch("memory entry missing required fields")
            prov = m["provenance"]
            if not isinstance(prov, dict) or not prov.get("chain"):
                raise SchemaMismatch("memory entry missing provenance chain")

        if self.count_live() or self.all_records():
            raise IoFailure("import requires an empty store")

        def work(conn: sqlite3.Connection) -> int:
            max_id = 0
            for m in memories:
                prov = m["provenance"]
                conn.execute(
                    "INSERT INTO memories (id, content, tags, importance,"
                    " created_at, updated_at, parent_id, path, entity_vector,"
                    " created_by, source_protocol, trust_at_write, chain,"
                    " access_count, deleted) VALUES (?,?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                    (
                        m["id"],
                        m["content"],
                        json.dumps(sorted(m["tags"])),
                        m["importance"],
                        m["created_at"],
                        m["updated_at"],
                        m["parent_id"],
                        m["path"],
                        json.dumps(m["entity_vector"]) if m.get("entity_vector") else None,
                        prov["created_by"],
                        prov["source_protocol"],
                        prov["trust_at_write"],
                        json.dumps(prov["chain"]),
                        m.get("access_count", 0),
                        1 if m.get("deleted") else 0,
                    ),
                )
                max_id = max(max_id, int(m["id"]))
            self._next_id = max(self._next_id, max_id + 1)
            conn.execute(
                "INSERT OR REPLACE INTO meta VALUES ('next_id', ?)",
                (str(self._next_id),),
            )
            return len(memories)

        return self.submit(work, post=lambda _n: self._cache.clear())

    def file_bytes(self) -> int:
        """On-disk size with the WAL folded back into the main file."""
        self.flush()
        self.submit(lambda conn: conn.execute("PRAGMA wal_checkpoint(TRUNCATE)").fetchone())
        return os.path.getsize(self.path)

    def verify_paths(self) -> list[int]:
        """Full-scan path consistency check; returns violating ids."""
        bad = []
        by_id = {r.id: r for r in self.all_records()}
        for rec in by_id.values():
            if rec.parent_id is None:
                if rec.path != str(rec.id):
                    bad.append(rec.id)
            else:
                parent = by_id.get(rec.parent_id)
                if parent is None or rec.path != f"{parent.path}/{rec.id}":
                    bad.append(rec.id)
        return bad
