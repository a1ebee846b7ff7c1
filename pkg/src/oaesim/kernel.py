"""Deterministic virtual-time event kernel.

A single-threaded discrete-event loop over integer nanosecond ticks. Events
fire in (time, id) order, so two events at the same tick fire in the order
they were scheduled. Randomness comes only from labelled streams derived
from the run seed. Nothing here consults the wall clock, which is what makes
whole-run traces reproducible byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from heapq import heappop, heappush
from typing import Any, Callable

from .errors import CausalityViolation

# Simulated time in integer nanosecond ticks.
VirtualTime = int


@dataclass(frozen=True)
class EventRecord:
    """One fired (or scheduled) event. Payloads never appear in exports."""

    id: int
    at: VirtualTime
    target: str
    kind: str
    payload: Any = None

    def trace_line(self) -> str:
        # Fixed key order keeps exported traces diffable.
        return json.dumps(
            {"id": self.id, "at": self.at, "target": self.target, "kind": self.kind},
            separators=(",", ":"),
        )


def rng_stream(seed: int, label: str) -> random.Random:
    """Deterministic random stream for (seed, label).

    The same pair always yields the same sequence; distinct labels give
    independent sequences because the generator state is seeded from a
    cryptographic digest of both.
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return random.Random(int.from_bytes(digest[:16], "big"))


def derive_seed(seed: int, index: int) -> int:
    """Child seed for sweep point `index`, independent across indices."""
    digest = hashlib.sha256(f"{seed}/{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Simulator:
    """Virtual-time scheduler owning one simulation instance.

    Entities register a handler under a target id; every fired event is
    appended to the trace whether or not a handler exists. `emit` records an
    instantaneous observable (recovery transcripts, belief records) without
    dispatching it.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.now: VirtualTime = 0
        self.trace: list[EventRecord] = []
        self._queue: list[tuple[VirtualTime, int, EventRecord]] = []
        self._next_id = 1
        self._handlers: dict[str, Callable[[EventRecord], None]] = {}

    def register(self, target: str, handler: Callable[[EventRecord], None]) -> None:
        self._handlers[target] = handler

    def rng(self, label: str) -> random.Random:
        return rng_stream(self.seed, label)

    def schedule(self, at: VirtualTime, target: str, kind: str, payload: Any = None) -> int:
        if at < self.now:
            raise CausalityViolation(
                f"schedule at t={at} but clock already at t={self.now}"
            )
        ev = EventRecord(self._next_id, at, target, kind, payload)
        self._next_id += 1
        heappush(self._queue, (at, ev.id, ev))
        return ev.id

    def emit(self, target: str, kind: str, payload: Any = None) -> int:
        """Record an observable at the current instant without dispatching it."""
        ev = EventRecord(self._next_id, self.now, target, kind, payload)
        self._next_id += 1
        self.trace.append(ev)
        return ev.id

    def _fire(self, ev: EventRecord) -> None:
        self.now = ev.at
        self.trace.append(ev)
        handler = self._handlers.get(ev.target)
        if handler is not None:
            handler(ev)

    def run_until(self, t: VirtualTime) -> int:
        """Fire everything due at or before t; clock ends at max(fired, t)."""
        fired = 0
        while self._queue and self._queue[0][0] <= t:
            _, _, ev = heappop(self._queue)
            self._fire(ev)
            fired += 1
        if t > self.now:
            self.now = t
        return fired

    def run_to_quiescence(self, max_events: int | None = None) -> int:
        """Fire until the queue drains (or max_events, as a runaway guard)."""
        fired = 0
        while self._queue:
            if max_events is not None and fired >= max_events:
                break
            _, _, ev = heappop(self._queue)
            self._fire(ev)
            fired += 1
        return fired

    def pending(self) -> int:
        return len(self._queue)

    def next_event_for(self, target: str) -> EventRecord | None:
        """Earliest queued event for a target. Instrumentation helper."""
        best = None
        for at, eid, ev in self._queue:
            if ev.target == target and (best is None or (at, eid) < (best.at, best.id)):
                best = ev
        return best

    def trace_jsonl(self) -> str:
        return "".join(ev.trace_line() + "\n" for ev in self.trace)
