"""Shortest-latency and knowledge-aware path selection."""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass
from typing import Mapping

from krakensim.infra.phy import DEFAULT_PROTECTION, ProtectionPolicy, effective_loss, select_protection
from krakensim.infra.topology import Link, Topology
from krakensim.infra.traffic import Packet

COST_TOL = 1e-9


class Unreachable(LookupError):
    pass


class RoutingMode(str, enum.Enum):
    SHORTEST_LATENCY = "shortest-latency"
    KNOWLEDGE_AWARE = "knowledge-aware"


@dataclass(frozen=True)
class RouteWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("route weights need alpha > 0, beta >= 0, gamma >= 0")


def link_cost(
    link: Link,
    packet: Packet,
    topology: Topology,
    mode: RoutingMode | str,
    weights: RouteWeights = RouteWeights(),
    congestion: Mapping[tuple[str, str], float] | None = None,
    protection: ProtectionPolicy = DEFAULT_PROTECTION,
) -> float:
    mode = RoutingMode(mode)
    if mode is RoutingMode.SHORTEST_LATENCY:
        return float(link.base_latency)
    level = packet.protection or select_protection(packet, protection)
    survival = 1.0 - effective_loss(link, level)
    lat = link.base_latency / topology.max_latency
    cong = (congestion or {}).get(link.key, 0.0)
    return (
        weights.alpha * lat
        + weights.beta * (1.0 - survival) * packet.contribution_score
        + weights.gamma * cong
    )


def path_cost(path: list[Link], packet: Packet, topology: Topology, mode, **kw) -> float:
    return sum(link_cost(l, packet, topology, mode, **kw) for l in path)


def route(
    packet: Packet,
    topology: Topology,
    src: str,
    dst: str,
    mode: RoutingMode | str = RoutingMode.SHORTEST_LATENCY,
    weights: RouteWeights = RouteWeights(),
    congestion: Mapping[tuple[str, str], float] | None = None,
    protection: ProtectionPolicy = DEFAULT_PROTECTION,
) -> list[Link]:
    """Minimum-cost path; equal costs resolve to the lexicographically first node sequence."""
    if src not in topology.nodes or dst not in topology.nodes:
        raise Unreachable(f"{src} or {dst} not in topology")
    if src == dst:
        return []
    costs = {
        key: link_cost(l, packet, topology, mode, weights, congestion, protection)
        for key, l in topology.links.items()
    }
    adj: dict[str, list[Link]] = {}
    for l in topology.links.values():
        adj.setdefault(l.src, []).append(l)

    best: dict[str, tuple[float, tuple[str, ...]]] = {src: (0.0, (src,))}
    done: set[str] = set()
    heap = [(0.0, (src,))]
    while heap:
        cost, nodes = heapq.heappop(heap)
        u = nodes[-1]
        if u in done or best[u] != (cost, nodes):
            continue
        done.add(u)
        if u == dst:
            break
        for l in adj.get(u, ()):
            v = l.dst
            if v in done:
                continue
            cand = (cost + costs[l.key], nodes + (v,))
            cur = best.get(v)
            if (
                cur is None
                or cand[0] < cur[0] - COST_TOL
                or (abs(cand[0] - cur[0]) <= COST_TOL and cand[1] < cur[1])
            ):
                best[v] = cand
                heapq.heappush(heap, cand)
    if dst not in done:
        raise Unreachable(f"no path {src} -> {dst}")
    nodes = best[dst][1]
    return [topology.link(a, b) for a, b in zip(nodes, nodes[1:])]
