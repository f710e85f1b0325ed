from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable

from krakensim.infra.phy import ProtectionLevel


def _check_unit(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return value


class Flow:
    """Traffic flow with a semantic weight that upper planes keep rewriting."""

    __slots__ = ("id", "src", "dst", "_weight", "task_id", "deadline", "remaining_bits")

    def __init__(
        self,
        id: Hashable,
        src: str,
        dst: str,
        semantic_weight: float,
        task_id: str = "",
        deadline: int = 0,
        remaining_bits: int = 0,
    ):
        if remaining_bits < 0:
            raise ValueError("remaining_bits must be non-negative")
        self.id = id
        self.src = src
        self.dst = dst
        self._weight = _check_unit("semantic_weight", semantic_weight)
        self.task_id = task_id
        self.deadline = int(deadline)
        self.remaining_bits = int(remaining_bits)

    @property
    def semantic_weight(self) -> float:
        return self._weight

    @semantic_weight.setter
    def semantic_weight(self, value: float) -> None:
        self._weight = _check_unit("semantic_weight", value)

    def __repr__(self) -> str:
        return (
            f"Flow(id={self.id!r}, w={self._weight:.3f}, deadline={self.deadline}, "
            f"remaining_bits={self.remaining_bits})"
        )

    def __deepcopy__(self, memo):
        return Flow(self.id, self.src, self.dst, self._weight, self.task_id, self.deadline, self.remaining_bits)


@dataclass
class Packet:
    flow_id: Hashable
    size: int
    relevance_flag: bool = False
    contribution_score: float = 0.5
    protection: ProtectionLevel | None = None
    task_id: str = ""
    relevant_bits: int | None = None  # task-relevant share of the payload; default all or nothing

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError("packet size must be > 0")
        if self.relevant_bits is None:
            self.relevant_bits = self.size if self.relevance_flag else 0
        if not 0 <= self.relevant_bits <= self.size:
            raise ValueError("relevant_bits must lie in [0, size]")
        self.contribution_score = _check_unit("contribution_score", self.contribution_score)
