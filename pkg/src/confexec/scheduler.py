"""Deterministic discrete-event scheduler.

Events run in (tick, insertion sequence) order. Nothing here reads a clock or
an unseeded random source, so the execution order is a pure function of what
was scheduled.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable


@dataclass(order=True)
class Event:
    tick: int
    seq: int
    target: str = field(compare=False, default="")
    action: Callable[..., Any] | None = field(compare=False, default=None)
    args: tuple = field(compare=False, default=())
    trace_id: int = field(compare=False, default=0)
    cancelled: bool = field(compare=False, default=False)


class Scheduler:
    def __init__(self):
        self.now = 0
        self._queue: list[Event] = []
        self._seq = itertools.count()
        self.executed = 0

    def at(self, tick: int, action: Callable[..., Any], *args, target: str = "", trace_id: int = 0) -> Event:
        if tick < self.now:
            raise ValueError(f"cannot schedule in the past ({tick} < {self.now})")
        ev = Event(int(tick), next(self._seq), target, action, args, trace_id)
        heapq.heappush(self._queue, ev)
        return ev

    def schedule(self, delay: int, action: Callable[..., Any], *args, target: str = "", trace_id: int = 0) -> Event:
        if delay < 0:
            raise ValueError("delay must be non-negative")
        return self.at(self.now + int(delay), action, *args, target=target, trace_id=trace_id)

    @staticmethod
    def cancel(event: Event) -> None:
        event.cancelled = True

    def pending(self) -> int:
        return sum(1 for e in self._queue if not e.cancelled)

    def step(self) -> bool:
        while self._queue:
            ev = heapq.heappop(self._queue)
            if ev.cancelled:
                continue
            self.now = ev.tick
            self.executed += 1
            ev.action(*ev.args)
            return True
        return False

    def run(self, until: int | None = None) -> None:
        """Run events with tick <= ``until`` (all events when None)."""
        while self._queue:
            head = self._queue[0]
            if head.cancelled:
                heapq.heappop(self._queue)
                continue
            if until is not None and head.tick > until:
                break
            self.step()
        if until is not None and until > self.now:
            self.now = until
