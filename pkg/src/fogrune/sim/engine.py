"""Discrete-event engine on a virtual microsecond clock."""

from __future__ import annotations

import heapq
import time
from typing import Any, Callable


class Engine:
    """Runs callbacks in (time, insertion order) order.

    With ``realtime=True`` the engine sleeps so that wall time keeps pace with
    virtual time; simulated delays are then charged in wall-clock too.
    """

    def __init__(self, realtime: bool = False) -> None:
        self.now_us = 0
        self.realtime = realtime
        self._queue: list[tuple[int, int, Callable[..., Any], tuple]] = []
        self._seq = 0
        self.executed = 0
        self._wall0: float | None = None

    def now(self) -> int:
        return self.now_us

    def at(self, when_us: int, fn: Callable[..., Any], *args: Any) -> None:
        if when_us < self.now_us:
            raise ValueError(f"cannot schedule in the past ({when_us} < {self.now_us})")
        self._seq += 1
        heapq.heappush(self._queue, (int(when_us), self._seq, fn, args))

    def call_later(self, delay_us: int, fn: Callable[..., Any], *args: Any) -> None:
        self.at(self.now_us + max(0, int(delay_us)), fn, *args)

    def wall_elapsed(self) -> float:
        return 0.0 if self._wall0 is None else time.perf_counter() - self._wall0

    def run(self, until_us: int | None = None,
            stop: Callable[[], bool] | None = None) -> None:
        """Process events up to ``until_us`` (inclusive) or until ``stop()`` holds."""
        if self._wall0 is None:
            self._wall0 = time.perf_counter() - self.now_us / 1e6
        while self._queue:
            when = self._queue[0][0]
            if until_us is not None and when > until_us:
                break
            if self.realtime:
                lag = self._wall0 + when / 1e6 - time.perf_counter()
                if lag > 0:
                    time.sleep(lag)
            when, _, fn, args = heapq.heappop(self._queue)
            self.now_us = when
            fn(*args)
            self.executed += 1
            if stop is not None and stop():
                return
        if until_us is not None and until_us > self.now_us:
            self.now_us = until_us

    def pending(self) -> int:
        return len(self._queue)
