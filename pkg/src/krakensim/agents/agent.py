"""Generative agents: hierarchy, permissions, acting, shadow validation, escalation."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Protocol, Sequence

import numpy as np

from krakensim.agents.perception import Quantizer, SemanticState, perceive
from krakensim.agents.planner import DEFAULT_GAMMA, PlanMode, PlanResult, plan
from krakensim.agents.world_model import Transition, WorldModel
from krakensim.knowledge.graph import KnowledgeGraph
from krakensim.knowledge.intents import IntentDescriptor
from krakensim.knowledge.objects import Kind
from krakensim.sim import Kernel


class PermissionDenied(PermissionError):
    pass


class VetoedByShadow(RuntimeError):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class NoParent(LookupError):
    pass


class Level(str, enum.Enum):
    EDGE = "edge"
    INFRASTRUCTURE = "infrastructure"
    DOMAIN = "domain"

    @property
    def rank(self) -> int:
        return {"edge": 0, "infrastructure": 1, "domain": 2}[self.value]


class ActionKind(str, enum.Enum):
    SET_FLOW_WEIGHT = "set-flow-weight"
    SET_PROTECTION = "set-protection"
    CHOOSE_PATH = "choose-path"
    DECLARE_INTENTION = "declare-intention"
    YIELD = "yield"
    HOLD = "hold"


class Scope(str, enum.Enum):
    LOCAL = "local"
    CLUSTER = "cluster"
    NETWORK = "network"


# widest scope each level may touch
_MAX_SCOPE = {Level.EDGE: 0, Level.INFRASTRUCTURE: 1, Level.DOMAIN: 2}
_SCOPE_RANK = {Scope.LOCAL: 0, Scope.CLUSTER: 1, Scope.NETWORK: 2}
_KINDS_BY_LEVEL = {
    Level.EDGE: frozenset(ActionKind) - {ActionKind.CHOOSE_PATH},
    Level.INFRASTRUCTURE: frozenset(ActionKind),
    Level.DOMAIN: frozenset(ActionKind),
}


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    params: tuple[tuple[str, Any], ...] = ()
    scope: Scope = Scope.LOCAL
    slot: int = 0  # index into the world model's action alphabet
    issued_at: int = 0

    @classmethod
    def of(cls, kind, slot: int = 0, scope=Scope.LOCAL, issued_at: int = 0, **params) -> "Action":
        return cls(ActionKind(kind), tuple(sorted(params.items())), Scope(scope), slot, issued_at)

    def param(self, name: str, default=None):
        return dict(self.params).get(name, default)

    @property
    def label(self) -> str:
        extra = ";".join(f"{k}={v}" for k, v in self.params)
        return f"{self.kind.value}[{extra}]" if extra else self.kind.value


def is_safety_critical(level: Level, action: Action) -> bool:
    if action.kind is ActionKind.CHOOSE_PATH:
        return True
    if action.kind is ActionKind.SET_FLOW_WEIGHT and level is Level.DOMAIN:
        return True
    return action.kind is ActionKind.DECLARE_INTENTION and bool(action.param("motion", False))


def check_permission(level: Level, action: Action) -> None:
    if action.kind not in _KINDS_BY_LEVEL[level]:
        raise PermissionDenied(f"{level.value} agents may not issue {action.kind.value}")
    if _SCOPE_RANK[action.scope] > _MAX_SCOPE[level]:
        raise PermissionDenied(f"{level.value} agents may not issue {action.scope.value}-scope actions")


@dataclass
class GenerativeAgent:
    id: str
    level: Level
    parent: str | None
    replica: KnowledgeGraph
    model: WorldModel
    intents: list[IntentDescriptor] = field(default_factory=list)
    quantizer: Quantizer | None = None
    memory_size: int = 256
    reasoning_log: list[str] = field(default_factory=list)
    state: SemanticState | None = None

    def __post_init__(self):
        self.level = Level(self.level)
        if self.level is Level.DOMAIN and self.parent is not None:
            raise ValueError("domain agents have no parent")
        if self.level is not Level.DOMAIN and self.parent is None:
            raise ValueError(f"{self.level.value} agent {self.id} needs a parent")
        self.memory: deque[Transition] = deque(maxlen=self.memory_size)

    def perceive(self, raw, now: int) -> tuple[SemanticState, float]:
        if self.quantizer is None:
            raise ValueError(f"agent {self.id} has no observation quantizer")
        st, dist = perceive(raw, self.quantizer, self.id, now)
        self.state = st
        return st, dist

    def learn(self, prev: int, action: int, nxt: int, reward: float, costs: Sequence[float] = ()) -> None:
        self.model.learn(prev, action, nxt, reward, costs)
        self.memory.append(self.model.memory[-1])

    def plan(
        self,
        state: int,
        candidates: Sequence[Action],
        K: int = 32,
        H: int = 3,
        gamma: float = DEFAULT_GAMMA,
        mode: PlanMode | str = PlanMode.EXACT,
        rng: np.random.Generator | None = None,
    ) -> tuple[Action, PlanResult]:
        res = plan(self.model, state, [a.slot for a in candidates], self.intents, K, H, gamma, mode, rng)
        return candidates[res.index], res

    def active_duals(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for it in self.intents:
            for c in it.constraints:
                if c.lam > 0:
                    out[c.metric] = c.lam
        return out


class World(Protocol):
    """What a scenario entity must expose for acting and shadow validation."""

    agents: Mapping[str, GenerativeAgent]
    in_shadow: bool

    def apply_action(self, kernel: Kernel, agent_id: str, action: Action) -> None: ...

    def envelope_violations(self) -> list[str]: ...

    def state_hash(self) -> str: ...


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str | None = None


def shadow_validate(kernel: Kernel, world_id: str, agent_id: str, action: Action, ticks: int) -> Verdict:
    """Apply ``action`` in a forked kernel, run ``ticks`` and check the safety envelope."""
    fork = kernel.fork()
    world = fork.entities[world_id]
    world.in_shadow = True
    before = len(world.envelope_violations())
    world.apply_action(fork, agent_id, action)
    fork.run_until(fork.now + ticks)
    fresh = world.envelope_violations()[before:]
    return Verdict(not fresh, fresh[0] if fresh else None)


def act(
    kernel: Kernel,
    world_id: str,
    agent_id: str,
    action: Action,
    result: PlanResult | None = None,
    candidates: Sequence[Action] = (),
    shadow_ticks: int = 0,
    validity: int = 1_000_000,
) -> None:
    """Check permission, shadow-validate if needed, apply, and record a reasoning trace."""
    world = kernel.entities[world_id]
    agent: GenerativeAgent = world.agents[agent_id]
    check_permission(agent.level, action)
    now = kernel.now
    if is_safety_critical(agent.level, action) and not getattr(world, "in_shadow", False):
        verdict = shadow_validate(kernel, world_id, agent_id, action, shadow_ticks)
        if not verdict.ok:
            _trace(agent, now, f"veto:{action.label}", result, candidates)
            raise VetoedByShadow(verdict.reason or "envelope violated")
    world.apply_action(kernel, agent_id, action)
    _trace(agent, now, action.label, result, candidates, validity)


def _trace(agent, now, label, result, candidates, validity: int = 1_000_000) -> None:
    top = []
    if result is not None:
        top = [
            (candidates[i].label if i < len(candidates) else str(i), round(s, 9)) for i, s in result.top(3)
        ]
    duals = agent.active_duals()
    agent.replica.publish(
        Kind.REASONING_TRACE,
        agent.id,
        {"action": label, "top": top, "duals": sorted(duals.items())},
        now,
        validity,
    )
    score = f"{result.score:.6g}" if result is not None else ""
    dual_txt = ";".join(f"{k}={v:.6g}" for k, v in sorted(duals.items()))
    agent.reasoning_log.append(f"{now},{agent.id},{label},{score},{dual_txt}")


@dataclass(frozen=True)
class Escalation:
    resolver: str
    depth: int
    assignment: Any


def escalate(
    agents: Mapping[str, GenerativeAgent],
    agent_id: str,
    conflict: Any,
    resolve: Callable[[GenerativeAgent, Any], Any],
    serialize: Callable[[GenerativeAgent, Any], Any],
) -> Escalation:
    """Hand an unresolved conflict up the hierarchy.

    ``resolve(parent, conflict)`` returns a binding assignment or ``None``.
    The domain level never fails: if its own resolution attempt is ``None``
    it falls back to ``serialize``.
    """
    agent = agents[agent_id]
    if agent.parent is None:
        raise NoParent(f"{agent_id} is at domain level; escalation is terminal")
    node = agents[agent.parent]
    depth = 1
    while True:
        result = resolve(node, conflict)
        if result is not None:
            return Escalation(node.id, depth, result)
        if node.parent is None:
            return Escalation(node.id, depth, serialize(node, conflict))
        node = agents[node.parent]
        depth += 1
