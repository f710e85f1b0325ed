"""Event-triggered delta synchronisation between knowledge replicas.

Flat mode is a full mesh: every replica sends its own changes straight to
every other replica. Hierarchical mode groups agents into clusters of ``k``
under an aggregator replica, stacks aggregators the same way until a single
root remains, pushes deltas up the tree and then back down.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

from krakensim.knowledge.graph import Delta, KnowledgeGraph, UnknownEpoch
from krakensim.knowledge.objects import Kind

DEFAULT_SYNC_KINDS = (Kind.FACT, Kind.INTENTION)


class OrphanAgent(LookupError):
    pass


class SyncMode(str, enum.Enum):
    FLAT = "flat"
    HIERARCHICAL = "hierarchical"


@dataclass(frozen=True)
class Hierarchy:
    clusters: tuple[tuple[str, ...], ...]
    k: int

    @classmethod
    def build(cls, agent_ids: Iterable[str], k: int) -> "Hierarchy":
        if k < 2:
            raise ValueError("cluster size k must be >= 2")
        ids = sorted(agent_ids)
        return cls(tuple(tuple(ids[i : i + k]) for i in range(0, len(ids), k)), k)

    def tree(self) -> list[dict[str, list[str]]]:
        """Aggregator levels, bottom first: ``[{aggregator: children}, ...]``."""
        levels = []
        groups = [list(c) for c in self.clusters]
        depth = 1
        while True:
            level = {f"agg{depth}.{i}": sorted(g) for i, g in enumerate(groups)}
            levels.append(level)
            names = sorted(level)
            if len(names) <= 1:
                return levels
            groups = [names[i : i + self.k] for i in range(0, len(names), self.k)]
            depth += 1


class SyncFabric:
    def __init__(
        self,
        replicas: Mapping[str, KnowledgeGraph],
        hierarchy: Hierarchy | None = None,
        kinds: Iterable[Kind] = DEFAULT_SYNC_KINDS,
        thresholds: Mapping[Kind, float] | None = None,
        object_bits: int = 256,
        header_bits: int = 64,
        on_message: Callable[[str, str, int, int], None] | None = None,
    ):
        """``on_message(sender, receiver, bits, fresh_bits)`` sees every message sent."""
        self.replicas = dict(replicas)
        self.kinds = tuple(Kind(k) for k in kinds)
        self.thresholds = dict(thresholds or {})
        self.object_bits = object_bits
        self.header_bits = header_bits
        self.hierarchy = hierarchy
        self.levels: list[dict[str, list[str]]] = []
        self.aggregators: dict[str, KnowledgeGraph] = {}
        if hierarchy is not None:
            members = [a for c in hierarchy.clusters for a in c]
            dup = {a for a in members if members.count(a) > 1}
            if dup:
                raise ValueError(f"agents in more than one cluster: {sorted(dup)}")
            orphans = sorted(set(self.replicas) - set(members))
            if orphans:
                raise OrphanAgent(f"agents without a cluster: {orphans}")
            unknown = sorted(set(members) - set(self.replicas))
            if unknown:
                raise KeyError(f"clustered agents without a replica: {unknown}")
            self.levels = hierarchy.tree()
            for level in self.levels:
                for agg in level:
                    self.aggregators[agg] = KnowledgeGraph(owner=agg)
        self.on_message = on_message
        self._sent: dict[tuple[str, str], int] = {}
        self.messages = 0
        self.bits = 0
        self.round_messages: list[int] = []

    def graph(self, node: str) -> KnowledgeGraph:
        return self.replicas.get(node) or self.aggregators[node]

    def _delta(self, sender: str, receiver: str, origin: str | None = None) -> Delta:
        g = self.graph(sender)
        since = self._sent.get((sender, receiver), 0)
        try:
            delta = g.compute_delta(since, receiver, self.kinds, self.thresholds, origin)
        except UnknownEpoch:
            # peer fell out of the retained window: resend the full state
            full =tuple(o for o in g.current_map(self.kinds).values() if origin is None or o.origin == origin)
            delta = Delta(0, g.epoch, full, ())
        self._sent[(sender, receiver)] = g.epoch
        return delta

    def _deliver(self, sender: str, receiver: str, delta: Delta, now: int) -> int:
        if not delta:
            return 0
        self.graph(sender).mark_sent(receiver, delta)
        fresh = self.graph(receiver).apply_delta(delta, now, sender=sender)
        bits = self.header_bits + self.object_bits * len(delta)
        self.messages += 1
        self.bits += bits
        if self.on_message is not None:
            self.on_message(sender, receiver, bits, self.object_bits * min(fresh, len(delta)))
        return 1

    def sync_round(self, mode: SyncMode | str, now: int) -> int:
        """Run one synchronisation round; returns directed messages sent."""
        mode = SyncMode(mode)
        sent = 0
        if mode is SyncMode.FLAT:
            ids = sorted(self.replicas)
            outbox = [(i, j, self._delta(i, j, origin=i)) for i in ids for j in ids if i != j]
            for i, j, d in outbox:
                sent += self._deliver(i, j, d, now)
        else:
            if self.hierarchy is None:
                raise OrphanAgent("hierarchical sync needs a cluster hierarchy")
            for level in self.levels:
                for agg in sorted(level):
                    for child in level[agg]:
                        sent += self._deliver(child, agg, self._delta(child, agg), now)
            for level in reversed(self.levels):
                for agg in sorted(level):
                    for child in level[agg]:
                        sent += self._deliver(agg, child, self._delta(agg, child), now)
        self.round_messages.append(sent)
        return sent
