"""Packet transport over a topology with a link-level transmission log."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

from krakensim.infra.mac import DEFAULT_RETRANSMIT, RetransmitPolicy, retransmit_decision
from krakensim.infra.phy import (
    DEFAULT_PROTECTION,
    ProtectionLevel,
    ProtectionPolicy,
    effective_loss,
    effective_size,
    select_protection,
)
from krakensim.infra.routing import RouteWeights, RoutingMode, route
from krakensim.infra.topology import Topology
from krakensim.infra.traffic import Packet
from krakensim.sim import EventKind, Kernel


@dataclass(frozen=True)
class TxRecord:
    """One transmission attempt over one link."""

    tick: int
    src: str
    dst: str
    bits: int
    category: str
    delivered: bool


@dataclass(frozen=True)
class Delivery:
    """End-to-end outcome of one packet (after retransmissions)."""

    tick: int
    src: str
    dst: str
    size: int
    relevant: bool
    delivered: bool
    category: str
    attempts: int
    relevant_bits: int = 0


@dataclass
class Network:
    topology: Topology
    protection: ProtectionPolicy = DEFAULT_PROTECTION
    retransmit: RetransmitPolicy = DEFAULT_RETRANSMIT
    routing_mode: RoutingMode = RoutingMode.SHORTEST_LATENCY
    route_weights: RouteWeights = field(default_factory=RouteWeights)
    semantic_retransmit: bool = True
    uniform_max_attempts: int = 1
    tx_log: list[TxRecord] = field(default_factory=list)
    deliveries: list[Delivery] = field(default_factory=list)

    def send(
        self,
        kernel: Kernel,
        src: str,
        dst: str,
        packet: Packet,
        category: str,
        receiver: str | None = None,
        payload: Any = None,
        protection: ProtectionLevel | None = None,
        congestion: Mapping[tuple[str, str], float] | None = None,
    ) -> bool:
        """Carry ``packet`` from ``src`` to ``dst`` hop by hop.

        Losses are drawn per link from the link's own RNG stream. A lost hop
        is retried while the retransmission rule allows. On success a
        packet-arrival event is scheduled at ``receiver`` (default ``dst``)
        after the summed latency and serialisation delay.
        """
        level = protection or packet.protection or select_protection(packet, self.protection)
        path = route(
            packet,
            self.topology,
            src,
            dst,
            self.routing_mode,
            self.route_weights,
            congestion,
            self.protection,
        )
        wire = effective_size(packet.size, level)
        delay = 0
        attempts = 0
        delivered = True
        for link in path:
            rng = kernel.rng.stream(f"link:{link.src}->{link.dst}")
            p_loss = effective_loss(link, level)
            hop_attempts = 0
            while True:
                hop_attempts += 1
                ok = p_loss <= 0.0 or rng.random() >= p_loss
                self.tx_log.append(TxRecord(kernel.now, link.src, link.dst, wire, category, ok))
                delay += link.base_latency + int(math.ceil(wire / link.capacity))
                if ok or not self._retry(packet, hop_attempts):
                    break
            attempts += hop_attempts
            if not ok:
                delivered = False
                break
        self.deliveries.append(
            Delivery(
                kernel.now,
                src,
                dst,
                packet.size,
                packet.relevant_bits > 0,
                delivered,
                category,
                attempts,
                packet.relevant_bits,
            )
        )
        if delivered and receiver is not None:
            kernel.after(delay, receiver, EventKind.PACKET_ARRIVAL, payload)
        return delivered

    def _retry(self, packet: Packet, attempts: int) -> bool:
        if self.semantic_retransmit:
            return retransmit_decision(packet, attempts, self.retransmit)
        return attempts < self.uniform_max_attempts

    def account(self, tick: int, src: str, dst: str, bits: int, category: str, relevant_bits: int = 0) -> None:
        """Record a lossless control-plane transmission that bypasses the PHY model."""
        if not 0 <= relevant_bits <= bits:
            raise ValueError("relevant_bits must lie in [0, bits]")
        self.tx_log.append(TxRecord(tick, src, dst, bits, category, True))
        self.deliveries.append(Delivery(tick, src, dst, bits, relevant_bits > 0, True, category, 1, relevant_bits))
