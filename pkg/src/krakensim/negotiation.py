"""Bounded proposal exchange with priority-based concession.

Each round every conflict is settled against its lower-priority party, which
adds the contested (resource, step) pair to its exclusion set and replans.
Sessions end converged once no conflicts remain, or escalated after
``r_max`` rounds.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Container, Hashable, Iterable, Mapping

Resource = Hashable


class SessionClosed(RuntimeError):
    pass


def agent_order(agent_id: str) -> tuple:
    """Natural sort key, so ``v2`` sorts before ``v10``."""
    return tuple((0, int(t), "") if t.isdigit() else (1, 0, t) for t in re.findall(r"\d+|\D+", str(agent_id)))


@dataclass(frozen=True)
class Proposal:
    agent: str
    trajectory: tuple  # per step: a resource, a frozenset of resources, or None
    utility: float
    priority: float
    round: int = 0
    delay: int = 0

    def __post_init__(self):
        if not math.isfinite(self.priority):
            raise ValueError(f"proposal from {self.agent}: priority must be finite")

    def claims(self) -> Iterable[tuple[Resource, int]]:
        for step, res in enumerate(self.trajectory):
            if res is None:
                continue
            if isinstance(res, (frozenset, set)):
                for r in sorted(res, key=repr):
                    yield r, step
            else:
                yield res, step


@dataclass(frozen=True, order=True)
class Conflict:
    step: int
    resource: Resource
    a: str
    b: str


def detect_conflicts(proposals: Iterable[Proposal], exclusive: Container | None = None) -> set[Conflict]:
    """All pairs claiming the same exclusive resource at the same step."""
    holders: dict[tuple[Resource, int], list[str]] = {}
    for p in proposals:
        for res, step in p.claims():
            if exclusive is None or res in exclusive:
                holders.setdefault((res, step), []).append(p.agent)
    out = set()
    for (res, step), ids in holders.items():
        if len(ids) < 2:
            continue
        ids = sorted(set(ids), key=agent_order)
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                out.add(Conflict(step, res, a, b))
    return out


def conceder(a: Proposal, b: Proposal) -> Proposal:
    """Lower priority concedes; on a tie the lower agent id does."""
    if a.priority != b.priority:
        return a if a.priority < b.priority else b
    return a if agent_order(a.agent) < agent_order(b.agent) else b


class Outcome(str, enum.Enum):
    PENDING = "pending"
    CONVERGED = "converged"
    ESCALATED = "escalated"


Replanner = Callable[[Proposal, frozenset], "Proposal | None"]
Holder = Callable[[Proposal], "Proposal | None"]


@dataclass
class NegotiationSession:
    id: str
    proposals: dict[str, Proposal]
    replan: Replanner
    hold: Holder | None = None
    r_max: int = 8
    round_latency: int = 10_000
    start_tick: int = 0
    exclusive: Container | None = None
    round: int = 0
    outcome: Outcome = Outcome.PENDING
    rounds: int | None = None
    exclusions: dict[str, set] = field(default_factory=dict)
    concessions: list[tuple[int, str, str, Conflict]] = field(default_factory=list)
    trace: list[str] = field(default_factory=list)
    conflict_history: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.r_max < 1:
            raise ValueError("r_max must be >= 1")

    @property
    def latency(self) -> int:
        return self.round * self.round_latency

    def conflicts(self) -> set[Conflict]:
        return detect_conflicts(self.proposals.values(), self.exclusive)

    def _close(self, outcome: Outcome) -> None:
        if self.outcome is not Outcome.PENDING:
            raise SessionClosed(f"session {self.id} already {self.outcome.value}")
        self.outcome = outcome
        self.rounds = self.round


def negotiate_round(session: NegotiationSession) -> dict[str, Proposal]:
    if session.outcome is not Outcome.PENDING:
        raise SessionClosed(f"session {session.id} is {session.outcome.value}")
    if session.round >= session.r_max:
        raise SessionClosed(f"session {session.id} reached r_max={session.r_max}")
    conflicts = sorted(session.conflicts(), key=lambda c: (c.step, repr(c.resource), agent_order(c.a), agent_order(c.b)))
    props = session.proposals
    losers: list[str] = []
    session.round += 1
    tick = session.start_tick + session.round * session.round_latency
    for c in conflicts:
        loser = conceder(props[c.a], props[c.b]).agent
        winner = c.b if loser == c.a else c.a
        session.exclusions.setdefault(loser, set()).add((c.resource, c.step))
        session.concessions.append((session.round, loser, winner, c))
        session.trace.append(f"{tick},{session.id},{session.round},{len(conflicts)},{loser}")
        if loser not in losers:
            losers.append(loser)
    for agent in sorted(losers, key=agent_order):
        old = props[agent]
        new = session.replan(old, frozenset(session.exclusions[agent]))
        if new is None and session.hold is not None:
            new = session.hold(old)
        if new is not None:
            props[agent] = replace(new, round=session.round, priority=old.priority)
    session.conflict_history.append(len(session.conflicts()))
    return props


def run_session(session: NegotiationSession) -> Outcome:
    if session.outcome is not Outcome.PENDING:
        raise SessionClosed(f"session {session.id} is {session.outcome.value}")
    initial = len(session.conflicts())
    session.conflict_history.append(initial)
    if initial == 0:
        session.trace.append(f"{session.start_tick},{session.id},0,0,")
        session._close(Outcome.CONVERGED)
        return session.outcome
    while True:
        negotiate_round(session)
        if session.conflict_history[-1] == 0:
            session._close(Outcome.CONVERGED)
            break
        if session.round >= session.r_max:
            session._close(Outcome.ESCALATED)
            break
    return session.outcome


def remaining_disputants(session: NegotiationSession) -> list[str]:
    ids = {x for c in session.conflicts() for x in (c.a, c.b)}
    return sorted(ids, key=agent_order)


def priorities(proposals: Mapping[str, Proposal]) -> dict[str, float]:
    return {k: p.priority for k, p in proposals.items()}
