"""Deterministic discrete-event kernel.

Time is an integer tick count (1 tick = 1 microsecond of simulated time).
Events dispatch in ``(fire_at, seq)`` order where ``seq`` is assigned at
scheduling, so same-tick cascades keep their causal order. Every dispatch
appends ``tick,seq,target,kind`` to the trace.
"""

from __future__ import annotations

import copy
import enum
import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

TICKS_PER_MS = 1_000
TICKS_PER_S = 1_000_000


class SchedulingInPast(ValueError):
    pass


class EventKind(str, enum.Enum):
    PACKET_ARRIVAL = "packet-arrival"
    AGENT_TICK = "agent-tick"
    SYNC_TRIGGER = "sync-trigger"
    NEGOTIATION_ROUND = "negotiation-round"
    METRIC_SAMPLE = "metric-sample"


@dataclass(frozen=True, order=True)
class Event:
    fire_at: int
    seq: int
    target: str = field(compare=False)
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)


class Entity(Protocol):
    def handle(self, kernel: "Kernel", event: Event) -> None: ...


def _label_words(label: str) -> list[int]:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=16).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


class RngStreams:
    """One independent PCG64 stream per label, derived from a 64-bit seed.

    Streams are keyed by a stable hash of the label, so creating a new
    stream never shifts the draws of an existing one.
    """

    def __init__(self, seed: int):
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {seed}")
        self.seed = seed
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, label: str) -> np.random.Generator:
        gen = self._streams.get(label)
        if gen is None:
            words = [self.seed & 0xFFFFFFFF, self.seed >> 32, *_label_words(label)]
            gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))
            self._streams[label] = gen
        return gen


class Kernel:
    """Virtual clock, event queue, entity registry and trace."""

    def __init__(self, seed: int = 0, horizon: int | None = None):
        self.now = 0
        self.horizon = horizon
        self.rng = RngStreams(seed)
        self.entities: dict[str, Entity] = {}
        self.trace: list[str] = []
        self._queue: list[Event] = []
        self._seq = 0

    def register(self, entity_id: str, entity: Entity) -> None:
        if entity_id in self.entities and self.entities[entity_id] is not entity:
            raise ValueError(f"entity id already registered: {entity_id}")
        self.entities[entity_id] = entity

    def schedule(self, fire_at: int, target: str, kind: EventKind, payload: Any = None) -> Event:
        if fire_at < self.now:
            raise SchedulingInPast(f"fire_at={fire_at} < now={self.now}")
        if target not in self.entities:
            raise KeyError(f"unknown target entity: {target}")
        ev = Event(int(fire_at), self._seq, target, EventKind(kind), payload)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def after(self, delay: int, target: str, kind: EventKind, payload: Any = None) -> Event:
        return self.schedule(self.now + delay, target, kind, payload)

    @property
    def pending(self) -> int:
        return len(self._queue)

    def peek(self) -> Event | None:
        return self._queue[0] if self._queue else None

    def run_until(self, t: int) -> int:
        if t < self.now:
            raise SchedulingInPast(f"run_until({t}) < now={self.now}")
        if self.horizon is not None:
            t = min(t, self.horizon)
        count = 0
        q = self._queue
        while q and q[0].fire_at <= t:
            ev = heapq.heappop(q)
            self.now = ev.fire_at
            self.trace.append(f"{ev.fire_at},{ev.seq},{ev.target},{ev.kind.value}")
            self.entities[ev.target].handle(self, ev)
            count += 1
        self.now = max(self.now, t)
        return count

    def fork(self) -> "Kernel":
        """Deep copy of clock, queue, entities, RNG state and trace."""
        return copy.deepcopy(self)

    def trace_text(self) -> str:
        return "".join(line + "\n" for line in self.trace)

    def trace_hash(self) -> str:
        return hashlib.sha256(self.trace_text().encode()).hexdigest()
