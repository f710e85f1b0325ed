from __future__ import annotations

import enum
from dataclasses import dataclass, field


class NodeLevel(str, enum.Enum):
    USER_EQUIPMENT = "user-equipment"
    EDGE = "edge"
    BASE_STATION = "base-station"
    REGIONAL = "regional"

    @property
    def rank(self) -> int:
        # UE and edge share the bottom tier
        return {"user-equipment": 0, "edge": 0, "base-station": 1, "regional": 2}[self.value]


@dataclass(frozen=True)
class Node:
    id: str
    level: NodeLevel = NodeLevel.EDGE
    compute_budget: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "level", NodeLevel(self.level))
        if self.compute_budget < 0:
            raise ValueError("compute_budget must be non-negative")


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    capacity: float  # bits per tick
    base_latency: int  # ticks
    base_loss: float = 0.0

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError(f"link {self.src}->{self.dst}: capacity must be > 0")
        if self.base_latency < 1:
            raise ValueError(f"link {self.src}->{self.dst}: base_latency must be >= 1 tick")
        if not 0.0 <= self.base_loss < 1.0:
            raise ValueError(f"link {self.src}->{self.dst}: base_loss must be in [0, 1)")

    @property
    def key(self) -> tuple[str, str]:
        return (self.src, self.dst)


@dataclass
class Topology:
    nodes: dict[str, Node] = field(default_factory=dict)
    links: dict[tuple[str, str], Link] = field(default_factory=dict)

    def add_node(self, node_id: str, level=NodeLevel.EDGE, compute_budget: float = 1.0) -> Node:
        node = Node(node_id, NodeLevel(level), compute_budget)
        self.nodes[node_id] = node
        return node

    def add_link(
        self,
        src: str,
        dst: str,
        capacity: float,
        base_latency: int,
        base_loss: float = 0.0,
        bidirectional: bool = True,
    ) -> None:
        for a, b in ((src, dst), (dst, src)) if bidirectional else ((src, dst),):
            if a not in self.nodes or b not in self.nodes:
                raise KeyError(f"link endpoint not in topology: {a}->{b}")
            self.links[(a, b)] = Link(a, b, capacity, base_latency, base_loss)

    def out_links(self, node_id: str) -> list[Link]:
        return sorted((l for l in self.links.values() if l.src == node_id), key=lambda l: l.dst)

    def link(self, src: str, dst: str) -> Link:
        return self.links[(src, dst)]

    @property
    def max_latency(self) -> int:
        return max((l.base_latency for l in self.links.values()), default=1)
