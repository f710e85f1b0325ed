from krakensim.infra.mac import (
    DEFAULT_RETRANSMIT,
    EmptyFrame,
    ResourceFrame,
    RetransmitPolicy,
    SchedulerMode,
    allocate_frame,
    granted_bits,
    priority,
    retransmit_decision,
    urgency,
)
from krakensim.infra.network import Delivery, Network, TxRecord
from krakensim.infra.phy import (
    DEFAULT_PROTECTION,
    LIGHT,
    STANDARD,
    STRONG,
    ProtectionLevel,
    ProtectionPolicy,
    Tier,
    effective_loss,
    effective_size,
    select_protection,
)
from krakensim.infra.routing import RouteWeights, RoutingMode, Unreachable, link_cost, path_cost, route
from krakensim.infra.topology import Link, Node, NodeLevel, Topology
from krakensim.infra.traffic import Flow, Packet

__all__ = [
    "DEFAULT_PROTECTION",
    "DEFAULT_RETRANSMIT",
    "Delivery",
    "EmptyFrame",
    "Flow",
    "LIGHT",
    "Link",
    "Network",
    "Node",
    "NodeLevel",
    "Packet",
    "ProtectionLevel",
    "ProtectionPolicy",
    "ResourceFrame",
    "RetransmitPolicy",
    "RouteWeights",
    "RoutingMode",
    "STANDARD",
    "STRONG",
    "SchedulerMode",
    "Tier",
    "Topology",
    "TxRecord",
    "Unreachable",
    "allocate_frame",
    "effective_loss",
    "effective_size",
    "granted_bits",
    "link_cost",
    "path_cost",
    "priority",
    "retransmit_decision",
    "route",
    "select_protection",
    "urgency",
]
