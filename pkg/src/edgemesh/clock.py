"""Clocks and timers in integer milliseconds.

The simulator uses :class:`VirtualScheduler`, where time only moves when the
harness advances it. Live daemons use :class:`RealTimeScheduler`. Node code
only sees ``now()`` and ``call_later()``, so it runs unchanged on either.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import threading
import time
from typing import Callable, List, Tuple

log = logging.getLogger(__name__)


class VirtualScheduler:
    def __init__(self, start_ms: int = 0):
        self._now = int(start_ms)
        self._queue: List[Tuple[int, int, Callable, tuple]] = []
        self._seq = itertools.count()

    def now(self) -> int:
        return self._now

    def call_later(self, delay_ms: float, fn: Callable, *args) -> None:
        when = self._now + max(0, int(round(delay_ms)))
        heapq.heappush(self._queue, (when, next(self._seq), fn, args))

    def call_at(self, when_ms: int, fn: Callable, *args) -> None:
        heapq.heappush(self._queue, (max(int(when_ms), self._now), next(self._seq), fn, args))

    def run_until(self, end_ms: int) -> int:
        """Run every event scheduled strictly before ``end_ms``; return the count."""
        ran = 0
        while self._queue and self._queue[0][0] < end_ms:
            when, _, fn, args = heapq.heappop(self._queue)
            self._now = when
            fn(*args)
            ran += 1
        self._now = max(self._now, int(end_ms))
        return ran

    def advance(self, delta_ms: int) -> int:
        return self.run_until(self._now + int(delta_ms))

    def pending(self) -> int:
        return len(self._queue)


class RealTimeScheduler:
    """Wall-clock timers on daemon threads."""

    def __init__(self):
        self._timers: List[threading.Timer] = []
        self._lock = threading.Lock()
        self._closed = False

    def now(self) -> int:
        return int(time.time() * 1000)

    def call_later(self, delay_ms: float, fn: Callable, *args) -> None:
        with self._lock:
            if self._closed:
                return
            timer = threading.Timer(max(0.0, delay_ms) / 1000.0, fn, args)
            timer.daemon = True
            self._timers = [t for t in self._timers if t.is_alive()]
            self._timers.append(timer)
        timer.start()

    def close(self) -> None:
        with self._lock:
            self._closed = True
            timers, self._timers = self._timers, []
        for t in timers:
            t.cancel()


class PeriodicTask:
    """Run ``fn`` every ``period_ms`` on its own thread until stopped."""

    def __init__(self, name: str, period_ms: float, fn: Callable[[], None]):
        self.period = period_ms / 1000.0
        self.fn = fn
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name=name, daemon=True)

    def start(self) -> "PeriodicTask":
        self._thread.start()
        return self

    def _run(self) -> None:
        next_at = time.monotonic()
        while not self._stop.is_set():
            try:
                self.fn()
            except Exception:  # a failing tick must not kill the task
                log.exception("periodic task %s failed", self._thread.name)
            next_at += self.period
            self._stop.wait(max(0.0, next_at - time.monotonic()))

    def stop(self, join: bool = True) -> None:
        self._stop.set()
        if join and self._thread.is_alive() and threading.current_thread() is not self._thread:
            self._thread.join(timeout=5)
