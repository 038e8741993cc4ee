"""Millisecond clocks.

The writer stamps every record and provenance entry from a single
nondecreasing source so chains stay ordered even if the wall clock
steps backwards. Benchmarks and retention tests inject a fake clock.
"""

from __future__ import annotations

import threading
import time


class Clock:
    """Wall-clock milliseconds, forced nondecreasing."""

    def __init__(self) -> None:
        self._last = 0
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            now = int(time.time() * 1000)
            if now < self._last:
                now = self._last
            self._last = now
            return now


class FakeClock(Clock):
    """Manually advanced clock for retention and decay tests."""

    def __init__(self, start_ms: int = 1_700_000_000_000) -> None:
        super().__init__()
        self._now = start_ms

    def now_ms(self) -> int:
        with self._lock:
            return self._now

    def advance(self, ms: int) -> None:
        with self._lock:
            self._now += ms

    def set(self, ms: int) -> None:
        with self._lock:
            self._now = ms


DAY_MS = 24 * 60 * 60 * 1000
HOUR_MS = 60 * 60 * 1000
