"""Per-frame resource-block allocation and semantic retransmission control."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Hashable, Sequence

from krakensim.infra.traffic import Flow, Packet


class EmptyFrame(ValueError):
    pass


class SchedulerMode(str, enum.Enum):
    THROUGHPUT_MAX = "throughput-max"
    SEMANTIC = "semantic"


@dataclass(frozen=True)
class ResourceFrame:
    frame_index: int
    n_blocks: int
    capacity: int  # bits per frame, split evenly across blocks

    @property
    def block_bits(self) -> int:
        return self.capacity // self.n_blocks if self.n_blocks else 0


def urgency(flow: Flow, now: int, deadline_window: int, eps: float = 0.05) -> float:
    """Inverse normalised slack, scaled into ``[eps, 1]``.

    Slack is ``(deadline - now) / deadline_window`` clamped to ``[eps, 1]``;
    a flow at (or past) its deadline gets urgency 1, a relaxed one ``eps``.
    """
    slack = (flow.deadline - now) / deadline_window
    slack = min(max(slack, eps), 1.0)
    return eps / slack


def priority(flow: Flow, now: int, deadline_window: int, eps: float = 0.05) -> float:
    return flow.semantic_weight * urgency(flow, now, deadline_window, eps)


def allocate_frame(
    frame: ResourceFrame,
    flows: Sequence[Flow],
    mode: SchedulerMode | str = SchedulerMode.SEMANTIC,
    now: int = 0,
    deadline_window: int = 100_000,
    eps: float = 0.05,
) -> list[Hashable | None]:
    """Assign each block of ``frame`` to at most one flow.

    Semantic mode grants each block to the flow with the largest marginal
    weighted value ``p(f) * min(block_bits, backlog)``; with full blocks of
    backlog this is plain descending-priority order. Throughput-max grants to
    the largest remaining backlog. Ties go to the lower flow id. Blocks with
    no backlogged flow stay unassigned (``None``).
    """
    if frame.n_blocks < 1:
        raise EmptyFrame(f"frame {frame.frame_index} has no resource blocks")
    mode = SchedulerMode(mode)
    bb = frame.block_bits
    backlog = {f.id: f.remaining_bits for f in flows}
    prio = {f.id: priority(f, now, deadline_window, eps) for f in flows}
    order = sorted(backlog)
    out: list[Hashable | None] = []
    for _ in range(frame.n_blocks):
        best = None
        best_key = None
        for fid in order:
            left = backlog[fid]
            if left <= 0:
                continue
            if mode is SchedulerMode.SEMANTIC:
                key = (prio[fid] * min(bb, left), prio[fid])
            else:
                key = (left, 0.0)
            if best_key is None or key > best_key:
                best, best_key = fid, key
        out.append(best)
        if best is not None:
            backlog[best] -= bb
    return out


def granted_bits(assignment: Sequence[Hashable | None], flows: Sequence[Flow], block_bits: int) -> dict:
    """Bits actually carried per flow (block grants capped by backlog)."""
    blocks: dict = {}
    for fid in assignment:
        if fid is not None:
            blocks[fid] = blocks.get(fid, 0) + 1
    return {f.id: min(blocks.get(f.id, 0) * block_bits, f.remaining_bits) for f in flows}


@dataclass(frozen=True)
class RetransmitPolicy:
    rho_first: float = 0.1
    rho_step: float = 0.2
    rho_cap: float = 0.9
    max_attempts: int = 4

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.rho_step < 0:
            raise ValueError("rho_step must be >= 0 so the threshold never drops")

    def threshold(self, attempts: int) -> float:
        return min(self.rho_cap, self.rho_first + self.rho_step * (attempts - 1))


DEFAULT_RETRANSMIT = RetransmitPolicy()


def retransmit_decision(packet: Packet, attempts: int, policy: RetransmitPolicy = DEFAULT_RETRANSMIT) -> bool:
    """Whether a lost packet that has been sent ``attempts`` times goes again."""
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    if attempts >= policy.max_attempts:
        return False
    return packet.contribution_score >= policy.threshold(attempts)
