"""Intent descriptors and dual-variable (Lagrange multiplier) governance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping


class MissingMetric(KeyError):
    pass


@dataclass
class Constraint:
    """``metric <= bound`` priced by a non-negative dual ``lam``."""

    metric: str
    bound: float
    lam: float = 0.0
    eta: float = 0.05
    weight: float = 1.0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"constraint {self.metric}: step eta must be > 0")
        if self.lam < 0:
            raise ValueError(f"constraint {self.metric}: dual must be >= 0")
        if self.weight < 0 or not math.isfinite(self.weight):
            raise ValueError(f"constraint {self.metric}: weight must be finite and >= 0")

    def violation(self, measured: float) -> float:
        return max(0.0, measured - self.bound)


@dataclass
class IntentDescriptor:
    id: str
    objective_terms: list[tuple[str, float]]
    constraints: list[Constraint] = field(default_factory=list)

    def __post_init__(self):
        if not self.objective_terms:
            raise ValueError(f"intent {self.id}: needs at least one objective term")
        for name, w in self.objective_terms:
            if w < 0 or not math.isfinite(w):
                raise ValueError(f"intent {self.id}: objective weight for {name} must be finite and >= 0")

    @property
    def duals(self) -> dict[str, float]:
        return {c.metric: c.lam for c in self.constraints}


def update_duals(intent: IntentDescriptor, measured: Mapping[str, float]) -> dict[str, float]:
    """One projected subgradient step: ``lam <- max(0, lam + eta * (measured - bound))``."""
    missing = [c.metric for c in intent.constraints if c.metric not in measured]
    if missing:
        raise MissingMetric(f"intent {intent.id}: no measurement for {', '.join(missing)}")
    for c in intent.constraints:
        c.lam = max(0.0, c.lam + c.eta * (measured[c.metric] - c.bound))
    return intent.duals


def alignment_penalty(intent: IntentDescriptor, measured: Mapping[str, float]) -> float:
    """Weighted constraint violation of one measurement sample."""
    return sum(c.weight * c.violation(measured[c.metric]) for c in intent.constraints)
