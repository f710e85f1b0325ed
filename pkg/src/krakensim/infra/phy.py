"""Importance-weighted link protection.

The radio is reduced to a Bernoulli loss per link; a protection tier scales
that loss down and the airtime cost up. Tiers are picked from the packet's
contribution score alone: the PHY executes priority, it does not interpret.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from krakensim.infra.topology import Link

MAX_LOSS = 1.0 - 1e-9


class Tier(str, enum.Enum):
    LIGHT = "light"
    STANDARD = "standard"
    STRONG = "strong"


@dataclass(frozen=True)
class ProtectionLevel:
    tier: Tier
    loss_multiplier: float
    capacity_cost_multiplier: float


LIGHT = ProtectionLevel(Tier.LIGHT, 1.5, 1.0)
STANDARD = ProtectionLevel(Tier.STANDARD, 1.0, 1.25)
STRONG = ProtectionLevel(Tier.STRONG, 0.25, 1.6)


@dataclass(frozen=True)
class ProtectionPolicy:
    theta_lo: float = 0.3
    theta_hi: float = 0.7
    light: ProtectionLevel = LIGHT
    standard: ProtectionLevel = STANDARD
    strong: ProtectionLevel = STRONG

    def __post_init__(self):
        if not 0.0 <= self.theta_lo < self.theta_hi <= 1.0:
            raise ValueError("need 0 <= theta_lo < theta_hi <= 1")
        tiers = (self.light, self.standard, self.strong)
        loss = [t.loss_multiplier for t in tiers]
        cost = [t.capacity_cost_multiplier for t in tiers]
        if not (loss[0] > loss[1] > loss[2] > 0):
            raise ValueError("loss multipliers must strictly decrease light > standard > strong")
        if not (0 < cost[0] < cost[1] < cost[2]):
            raise ValueError("capacity cost must strictly increase light < standard < strong")

    def level(self, tier: Tier | str) -> ProtectionLevel:
        return {Tier.LIGHT: self.light, Tier.STANDARD: self.standard, Tier.STRONG: self.strong}[Tier(tier)]


DEFAULT_PROTECTION = ProtectionPolicy()


def select_protection(packet, policy: ProtectionPolicy = DEFAULT_PROTECTION) -> ProtectionLevel:
    score = packet.contribution_score
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"contribution_score must be in [0, 1], got {score}")
    if score >= policy.theta_hi:
        return policy.strong
    if score < policy.theta_lo:
        return policy.light
    return policy.standard


def effective_loss(link: Link, level: ProtectionLevel) -> float:
    return min(link.base_loss * level.loss_multiplier, MAX_LOSS)


def effective_size(size: int, level: ProtectionLevel) -> int:
    return int(math.ceil(size * level.capacity_cost_multiplier))
