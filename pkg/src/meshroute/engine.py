"""Deterministic discrete-event engine.

Time is an integer count of microseconds.  Events fire in ``(fire_at,
insertion order)`` order, so two runs with the same seed and the same
scenario process exactly the same sequence of events.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import random
from typing import Any, Callable, Optional

US_PER_MS = 1_000
US_PER_S = 1_000_000


def seconds(value: float) -> int:
    """Convert seconds to integer simulation time."""
    return int(round(value * US_PER_S))


def millis(value: float) -> int:
    return int(round(value * US_PER_MS))


class EventKind(enum.Enum):
    TRAFFIC_ARRIVAL = "traffic_arrival"
    TX_ATTEMPT_START = "tx_attempt_start"
    TX_ATTEMPT_END = "tx_attempt_end"
    CONTROL_BEACON = "control_beacon"
    PROBE_TICK = "probe_tick"
    MEASURE_RECOMPUTE = "measure_recompute"
    SIM_END = "sim_end"


class SchedulingError(ValueError):
    """Raised when an event is scheduled before the current clock."""


class Event:
    __slots__ = ("fire_at", "kind", "payload", "action", "cancelled")

    def __init__(
        self,
        fire_at: int,
        kind: EventKind,
        action: Optional[Callable[[], Any]] = None,
        payload: Any = None,
    ):
        self.fire_at = fire_at
        self.kind = kind
        self.action = action
        self.payload = payload
        self.cancelled = False

    def __repr__(self) -> str:
        return f"Event({self.fire_at}, {self.kind.name})"


class EventHandle:
    __slots__ = ("_event",)

    def __init__(self, event: Event):
        self._event = event

    @property
    def fire_at(self) -> int:
        return self._event.fire_at

    @property
    def cancelled(self) -> bool:
        return self._event.cancelled

    def cancel(self) -> None:
        self._event.cancelled = True


class Simulator:
    """Virtual clock plus a stable priority queue of events.

    If ``record`` is true every processed event is appended to ``log`` as
    ``(fire_at, kind name)``; the log is the reference trace for replay
    checks.
    """

    def __init__(self, record: bool = False):
        self.now = 0
        self._queue: list = []
        self._seq = 0
        self.events_processed = 0
        self.record = record
        self.log: list[tuple[int, str]] = []

    def schedule(self, event: Event) -> EventHandle:
        if event.fire_at < self.now:
            raise SchedulingError(
                f"event {event.kind.name} at t={event.fire_at} is before clock {self.now}"
            )
        heapq.heappush(self._queue, (event.fire_at, self._seq, event))
        self._seq += 1
        return EventHandle(event)

    def at(self, fire_at: int, kind: EventKind, action: Callable[[], Any], payload: Any = None) -> EventHandle:
        return self.schedule(Event(fire_at, kind, action, payload))

    def after(self, delay: int, kind: EventKind, action: Callable[[], Any], payload: Any = None) -> EventHandle:
        return self.schedule(Event(self.now + delay, kind, action, payload))

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._queue if not ev.cancelled)

    def run_until(self, end: int) -> int:
        """Process every event with ``fire_at <= end``; leave the clock at ``end``.

        A ``SIM_END`` event stops the run early at its own time.
        """
        queue = self._queue
        pop = heapq.heappop
        while queue and queue[0][0] <= end:
            fire_at, _, event = pop(queue)
            if event.cancelled:
                continue
            self.now = fire_at
            self.events_processed += 1
            if self.record:
                self.log.append((fire_at, event.kind.name))
            if event.kind is EventKind.SIM_END:
                return self.now
            if event.action is not None:
                event.action()
        if self.now < end:
            self.now = end
        return self.now


class RngFactory:
    """Derives independent ``random.Random`` streams from one master seed.

    Each consumer asks for a stream by label (``"flow:A"``, ``"backoff:14"``,
    ...).  The stream seed is a hash of ``(seed, label)``, so adding a
    consumer never perturbs the draws of another.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def stream(self, label: str) -> random.Random:
        digest = hashlib.sha256(f"{self.seed}/{label}".encode()).digest()
        return random.Random(int.from_bytes(digest[:8], "little"))
