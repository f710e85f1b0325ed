"""Cooperative crossing of a two-lane grid intersection.

Cells of the junction box, indexed per motion step, are exclusive resources.
Every vehicle claims its path with a one-step margin either side, which is
how trajectory uncertainty shows up in proposals. Baseline modes book
crossings first-come-first-served at the roadside unit; the full stack
negotiates, escalates when stuck and validates every committed motion in a
forked shadow run before applying it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from krakensim.agents import (
    Action,
    ActionKind,
    GenerativeAgent,
    Level,
    Quantizer,
    VetoedByShadow,
    WorldModel,
    act,
    escalate,
)
from krakensim.config import RunConfig
from krakensim.infra.phy import STANDARD, STRONG, LIGHT, ProtectionLevel, effective_size, select_protection
from krakensim.infra.topology import NodeLevel, Topology
from krakensim.infra.traffic import Packet
from krakensim.knowledge.graph import KnowledgeGraph
from krakensim.knowledge.intents import Constraint, IntentDescriptor, update_duals
from krakensim.knowledge.objects import Kind
from krakensim.knowledge.sync import Hierarchy, SyncFabric, SyncMode
from krakensim.metrics import build_report
from krakensim.negotiation import (
    NegotiationSession,
    Outcome,
    Proposal,
    agent_order,
    detect_conflicts,
    negotiate_round,
    remaining_disputants,
)
from krakensim.scenarios.base import (
    InvalidCount,
    Mode,
    RunArtifacts,
    ScenarioWorld,
    common_extras,
    make_network,
    new_kernel,
)
from krakensim.sim import TICKS_PER_MS, EventKind, Kernel

LANES = 2
APPROACH = 1
MARGIN = 1
HORIZON_STEPS = 64
CONTROL_BITS = 64
TIERS: tuple[ProtectionLevel, ...] = (LIGHT, STANDARD, STRONG)

_VEC = {"S": (1, 0), "N": (-1, 0), "E": (0, 1), "W": (0, -1)}
LEFT_OF = {"S": "E", "N": "W", "E": "N", "W": "S"}
RIGHT_OF = {"S": "W", "N": "E", "E": "S", "W": "N"}
QUEUE_KEY = -1

Cell = tuple[int, int]


@dataclass(frozen=True)
class Geometry:
    """Square junction of ``2 * lanes + 2 * approach`` cells per side.

    Headings name where a vehicle enters from: ``S`` comes in on row 0 and
    drives down the grid. Lane 0 is the innermost lane of each direction.
    """

    lanes: int = LANES
    approach: int = APPROACH

    @property
    def size(self) -> int:
        return 2 * self.lanes + 2 * self.approach

    def line(self, heading: str, lane: int) -> tuple[str, int]:
        a, n = self.approach, self.lanes
        return {
            "S": ("col", a + n - 1 - lane),
            "N": ("col", a + n + lane),
            "E": ("row", a + n + lane),
            "W": ("row", a + n - 1 - lane),
        }[heading]

    def entry(self, heading: str, lane: int) -> Cell:
        _, v = self.line(heading, lane)
        g = self.size
        return {"S": (0, v), "N": (g - 1, v), "E": (v, 0), "W": (v, g - 1)}[heading]

    def movements(self, lane: int) -> list[str]:
        out = ["straight"]
        if lane == 0:
            out.append("left")
        if lane == self.lanes - 1:
            out.append("right")
        return out

    def path(self, heading: str, lane: int, movement: str) -> tuple[Cell, ...]:
        if movement == "straight":
            out_h, out_lane = heading, lane
        elif movement == "left":
            out_h, out_lane = LEFT_OF[heading], 0
        elif movement == "right":
            out_h, out_lane = RIGHT_OF[heading], self.lanes - 1
        else:
            raise ValueError(f"unknown movement {movement!r}")
        g = self.size
        p = self.entry(heading, lane)
        cells = [p]
        dy, dx = _VEC[heading]
        if out_h != heading:
            axis, v = self.line(out_h, out_lane)
            while (p[1] if axis == "col" else p[0]) != v:
                p = (p[0] + dy, p[1] + dx)
                cells.append(p)
        dy, dx = _VEC[out_h]
        while 0 <= p[0] + dy < g and 0 <= p[1] + dx < g:
            p = (p[0] + dy, p[1] + dx)
            cells.append(p)
        return tuple(cells)


def claimed(arrival: int, delay: int, path: Sequence[Cell], margin: int, horizon: int) -> tuple:
    """Per-step cell sets a vehicle claims, its path smeared by ``margin`` steps."""
    steps: list[set] = [set() for _ in range(horizon)]
    for k, cell in enumerate(path):
        for s in range(arrival + delay + k - margin, arrival + delay + k + margin + 1):
            if 0 <= s < horizon:
                steps[s].add(cell)
    return tuple(frozenset(s) if s else None for s in steps)


def _hits(traj: tuple, blocked: set) -> bool:
    return any(traj[s] is not None and cell in traj[s] for cell, s in blocked)


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    heading: str
    lane: int
    movement: str
    arrival: int
    path: tuple[Cell, ...]
    utility: float
    contribution: float
    deadline: int

    def max_delay(self, horizon: int, margin: int) -> int:
        return horizon - self.arrival - len(self.path) - margin - 1


@dataclass
class IntersectionScenario:
    """Everything needed to instantiate and run one intersection episode."""

    config: RunConfig
    geometry: Geometry
    vehicles: tuple[VehicleSpec, ...]
    margin: int = MARGIN
    horizon_steps: int = HORIZON_STEPS
    name: str = "intersection"

    @property
    def mode(self) -> Mode:
        return Mode(self.config.mode)

    @property
    def seed(self) -> int:
        return self.config.seed

    def instantiate(self) -> tuple[Kernel, "IntersectionWorld"]:
        step = self.config["intersection.step_ms"] * TICKS_PER_MS
        horizon = self.config["run.horizon"] or (self.horizon_steps + 2) * step
        kernel = new_kernel(self.config, horizon)
        world = IntersectionWorld(self)
        kernel.register(world.name, world)
        kernel.schedule(0, world.name, EventKind.AGENT_TICK, ("start",))
        return kernel, world

    def run(self) -> RunArtifacts:
        kernel, world = self.instantiate()
        kernel.run_until(kernel.horizon)
        return world.artifacts(kernel)


def _default_layout(n: int, geo: Geometry, rng: np.random.Generator, platoon: int) -> list[tuple]:
    rot = int(rng.integers(0, 4))
    out = []
    for i in range(n):
        heading = "SENW"[(i + rot) % 4]
        lane = (i // platoon) % geo.lanes
        movement = str(rng.choice(geo.movements(lane)))
        out.append((heading, lane, movement, i // platoon, float(rng.random())))
    return out


def build_intersection(
    n_vehicles: int,
    seed: int,
    mode: Mode | str = Mode.FULL,
    config: RunConfig | None = None,
    layout: Sequence[tuple] | None = None,
) -> IntersectionScenario:
    """Episode with ``n_vehicles`` arriving in platoons (four by default).

    ``layout`` pins vehicles as ``(heading, lane, movement, arrival[, utility])``
    tuples instead of drawing them from the seed.
    """
    if not 2 <= n_vehicles <= 8:
        raise InvalidCount(f"intersection needs 2..8 vehicles, got {n_vehicles}")
    if layout is not None and len(layout) != n_vehicles:
        raise InvalidCount(f"layout lists {len(layout)} vehicles, expected {n_vehicles}")
    cfg = (config or RunConfig()).with_overrides(
        {"run.scenario": "intersection", "run.mode": Mode(mode).value, "run.seed": seed, "intersection.n": n_vehicles}
    )
    geo = Geometry(cfg["intersection.lanes"])
    root = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, 0x1A7])))
    drawn = _default_layout(n_vehicles, geo, root, cfg["intersection.platoon"])
    scores = root.uniform(0.75, 0.9, n_vehicles)
    slack = cfg["intersection.deadline_slack"]
    vehicles = []
    for i in range(n_vehicles):
        entry = tuple(layout[i]) if layout is not None else drawn[i]
        heading, lane, movement, arrival = entry[:4]
        utility = float(entry[4]) if len(entry) > 4 else drawn[i][4]
        path = geo.path(heading, lane, movement)
        vehicles.append(
            VehicleSpec(
                f"v{i}", heading, lane, movement, int(arrival), path, utility,
                float(scores[i]), int(arrival) + len(path) + slack,
            )
        )
    return IntersectionScenario(cfg, geo, tuple(vehicles), cfg["intersection.margin_steps"], cfg["intersection.horizon_steps"])


class IntersectionWorld(ScenarioWorld):
    name = "intersection"

    def __init__(self, scenario: IntersectionScenario):
        cfg = scenario.config
        super().__init__(cfg)
        self.scenario = scenario
        self.geo = scenario.geometry
        self.specs = {v.id: v for v in scenario.vehicles}
        self.ids = sorted(self.specs, key=agent_order)
        self.H = scenario.horizon_steps
        self.margin = scenario.margin
        self.step_ticks = cfg["intersection.step_ms"] * TICKS_PER_MS
        self.motion_start = self.step_ticks
        self.budget = cfg["intersection.uplink_budget_bits"]
        self.delays: dict[str, int] = {}
        self.tiers = {vid: STANDARD for vid in self.ids}
        self.sent_key: dict[str, int | None] = {vid: None for vid in self.ids}
        self.rsu_key: dict[str, int | None] = {vid: None for vid in self.ids}
        self.collisions = 0
        self.vetoes = 0
        self.step_no = 0
        self.session: NegotiationSession | None = None
        self.outcome: str = ""
        self._now = 0
        self.duals_on = self.mode is Mode.FULL and not cfg["duals.frozen"]

        topo = Topology()
        topo.add_node("rsu", NodeLevel.BASE_STATION)
        topo.add_node("domain", NodeLevel.REGIONAL)
        topo.add_link("rsu", "domain", 1000.0, 5 * TICKS_PER_MS, 0.0)
        topo.add_link("domain", "rsu", 1000.0, 5 * TICKS_PER_MS, 0.0)
        loss = cfg["intersection.link_loss"]
        for vid in self.ids:
            topo.add_node(vid, NodeLevel.USER_EQUIPMENT)
            topo.add_link(vid, "rsu", 100.0, TICKS_PER_MS, loss)
            topo.add_link("rsu", vid, 100.0, TICKS_PER_MS, loss)
        self.network = make_network(topo, cfg)
        if self.mode is Mode.DATA_CENTRIC:
            self.network.semantic_retransmit = False

        eta = cfg["duals.eta"]
        self.rsu_intent = IntentDescriptor(
            "uplink-budget", [("delivered_value", 1.0)], [Constraint("uplink_util", 1.0, eta=eta)]
        )
        g = self.geo.size
        quant = Quantizer((0.0, 0.0), (float(g), float(g)), (g, g))
        d_bits = cfg["intersection.descriptor_bits"]
        for v in scenario.vehicles:
            base = cfg["intersection.link_loss"]
            U = [[(1.0 - base * t.loss_multiplier) * v.contribution for t in TIERS]]
            G = [[[effective_size(d_bits, t) / self.budget for t in TIERS]]]
            model = WorldModel.exact(np.ones((1, 3, 1)), U, G, metrics=("uplink_util",))
            intent = IntentDescriptor(
                f"{v.id}-uplink", [("delivered_value", 1.0)], [Constraint("uplink_util", 1.0, eta=eta)]
            )
            self.agents[v.id] = GenerativeAgent(
                v.id, Level.EDGE, "rsu", KnowledgeGraph(v.id), model, [intent], quantizer=quant
            )
        joint_model = WorldModel.exact(np.ones((1, 1, 1)), [[0.0]])
        self.agents["rsu"] = GenerativeAgent(
            "rsu", Level.INFRASTRUCTURE, "domain", KnowledgeGraph("rsu"), joint_model, [self.rsu_intent]
        )
        self.agents["domain"] = GenerativeAgent(
            "domain", Level.DOMAIN, None, KnowledgeGraph("domain"), joint_model
        )
        self.fabric: SyncFabric | None = None
        if self.mode is Mode.FULL:
            self.fabric = SyncFabric(
                {vid: self.agents[vid].replica for vid in self.ids},
                Hierarchy.build(self.ids, cfg["sync.k"]) if cfg["sync.mode"] == "hierarchical" else None,
                kinds=(Kind.INTENTION,),
                object_bits=cfg["sync.object_bits"],
                header_bits=cfg["sync.header_bits"],
                on_message=self._sync_message,
            )

    # ---- geometry helpers

    def trajectory(self, vid: str, delay: int) -> tuple:
        v = self.specs[vid]
        return claimed(v.arrival, delay, v.path, self.margin, self.H)

    def proposal(self, vid: str, delay: int, priority: float | None = None) -> Proposal:
        v = self.specs[vid]
        pr = self.claimed_priority(vid) if priority is None else priority
        return Proposal(vid, self.trajectory(vid, delay), v.utility, pr, delay=delay)

    def claimed_priority(self, vid: str) -> float:
        """Claimed utility less the dual price of the vehicle's current uplink plan."""
        agent = self.agents[vid]
        util = effective_size(self.cfg["intersection.descriptor_bits"], self.tiers[vid]) / self.budget
        penalty = sum(c.lam * c.violation(util) for it in agent.intents for c in it.constraints)
        return self.specs[vid].utility - penalty

    def cell_at(self, vid: str, step: int) -> Cell | None:
        if vid not in self.delays:
            return None
        v = self.specs[vid]
        k = step - v.arrival - self.delays[vid]
        return v.path[k] if 0 <= k < len(v.path) else None

    def present(self, vid: str, step: int) -> bool:
        v = self.specs[vid]
        end = v.arrival + self.delays.get(vid, self.H) + len(v.path)
        return v.arrival <= step < end

    def earliest_free(self, vid: str, blocked: set, lo: int = 0) -> int:
        v = self.specs[vid]
        for d in range(lo, v.max_delay(self.H, self.margin) + 1):
            if not _hits(self.trajectory(vid, d), blocked):
                return d
        raise RuntimeError(f"no conflict-free slot for {vid} within {self.H} steps")

    @staticmethod
    def _claims(trajs: Sequence[tuple]) -> set:
        return {(c, s) for t in trajs for s, cells in enumerate(t) if cells for c in cells}

    def serialize(self, order: Sequence[str], fixed: Sequence[str]) -> dict[str, int]:
        """Each vehicle in turn takes the earliest slot clear of everyone placed before it."""
        blocked = self._claims([self.trajectory(f, self.delays_or_proposed(f)) for f in fixed])
        out = {}
        for vid in order:
            d = self.earliest_free(vid, blocked)
            out[vid] = d
            blocked |= self._claims([self.trajectory(vid, d)])
        return out

    def delays_or_proposed(self, vid: str) -> int:
        if vid in self.delays:
            return self.delays[vid]
        if self.session is not None:
            return self.session.proposals[vid].delay
        return 0

    # ---- World protocol

    def state_view(self):
        return {
            "delays": sorted(self.delays.items()),
            "tiers": sorted((k, t.tier.value) for k, t in self.tiers.items()),
            "step": self.step_no,
            "collisions": self.collisions,
        }

    def apply_action(self, kernel: Kernel, agent_id: str, action: Action) -> None:
        if action.kind is ActionKind.DECLARE_INTENTION:
            d = int(action.param("delay"))
            self.delays[agent_id] = d
            v = self.specs[agent_id]
            if not self.in_shadow:
                self.agents[agent_id].replica.publish(
                    Kind.INTENTION,
                    agent_id,
                    {"delay": d, "arrival": v.arrival, "path": [list(c) for c in v.path]},
                    kernel.now,
                    self.H * self.step_ticks,
                )
        elif action.kind is ActionKind.SET_PROTECTION:
            self.tiers[agent_id] = TIERS[action.slot]
        elif action.kind in (ActionKind.HOLD, ActionKind.YIELD):
            pass
        else:
            raise ValueError(f"intersection world cannot apply {action.kind.value}")

    # ---- event handling

    def handle(self, kernel: Kernel, event) -> None:
        tag = event.payload[0]
        if tag == "start":
            self._start(kernel)
        elif tag == "round":
            self._round(kernel)
        elif tag == "step":
            self._step(kernel, event.payload[1])

    def _account(self, kernel, src, dst, bits, category, relevant=0) -> None:
        if not self.in_shadow:
            self.network.account(kernel.now, src, dst, bits, category, relevant)

    def _sync_message(self, sender, receiver, bits, fresh_bits) -> None:
        self.recorder.sync_messages += 1
        self.network.account(self._now, sender, receiver, bits, "sync", fresh_bits)

    def _start(self, kernel: Kernel) -> None:
        cfg = self.cfg
        # motion runs on its own clock so shadow forks see it too
        kernel.schedule(max(self.motion_start, kernel.now), self.name, EventKind.AGENT_TICK, ("step", 0))
        intent_bits = cfg["intersection.intent_bits"]
        if self.mode is Mode.FULL:
            props = {vid: self.proposal(vid, 0) for vid in self.ids}
            for vid in self.ids:
                self._account(kernel, vid, "rsu", intent_bits, "proposal", intent_bits)
            self.session = NegotiationSession(
                "s0",
                props,
                self._replan,
                self._hold if cfg["negotiation.hold"] else None,
                r_max=cfg["negotiation.r_max"],
                round_latency=cfg["negotiation.round_latency_ms"] * TICKS_PER_MS,
                start_tick=kernel.now,
            )
            initial = len(self.session.conflicts())
            self.session.conflict_history.append(initial)
            if initial == 0:
                self.session.trace.append(f"{kernel.now},s0,0,0,")
                self.session._close(Outcome.CONVERGED)
                self._commit_all(kernel)
            else:
                kernel.after(self.session.round_latency, self.name, EventKind.NEGOTIATION_ROUND, ("round",))
        else:
            # the roadside unit books requests first-come-first-served
            for vid in self.ids:
                if self.mode is Mode.DATA_CENTRIC:
                    bits = cfg["intersection.frame_bits"]
                    self._uplink(kernel, vid, bits, STANDARD, 0.5, None)
                else:
                    self._account(kernel, vid, "rsu", intent_bits, "intention", intent_bits)
            order = sorted(self.ids, key=lambda v: (self.specs[v].arrival, agent_order(v)))
            for vid, d in self.serialize(order, ()).items():
                self.delays[vid] = d
                self._account(kernel, "rsu", vid, CONTROL_BITS, "grant")

    def _replan(self, old: Proposal, exclusions: frozenset) -> Proposal | None:
        v = self.specs[old.agent]
        for d in range(old.delay + 1, v.max_delay(self.H, self.margin) + 1):
            t = self.trajectory(old.agent, d)
            if not _hits(t, exclusions):
                return Proposal(old.agent, t, old.utility, old.priority, delay=d)
        return None

    def _hold(self, old: Proposal) -> Proposal | None:
        d = old.delay + 1
        if d > self.specs[old.agent].max_delay(self.H, self.margin):
            return None
        return Proposal(old.agent, self.trajectory(old.agent, d), old.utility, old.priority, delay=d)

    def _round(self, kernel: Kernel) -> None:
        s = self.session
        before = {k: p.delay for k, p in s.proposals.items()}
        n_lines = len(s.trace)
        negotiate_round(s)
        intent_bits = self.cfg["intersection.intent_bits"]
        for line in s.trace[n_lines:]:
            loser = line.rsplit(",", 1)[1]
            self._account(kernel, "rsu", loser, CONTROL_BITS, "conflict-notice")
        for vid, p in sorted(s.proposals.items()):
            if p.delay != before[vid]:
                self._account(kernel, vid, "rsu", intent_bits, "proposal", intent_bits)
        if s.conflict_history[-1] == 0:
            s._close(Outcome.CONVERGED)
            self._commit_all(kernel)
        elif s.round >= s.r_max:
            s._close(Outcome.ESCALATED)
            self._escalate(kernel)
            self._commit_all(kernel)
        else:
            kernel.after(s.round_latency, self.name, EventKind.NEGOTIATION_ROUND, ("round",))

    def _escalate(self, kernel: Kernel) -> None:
        s = self.session
        disputants = remaining_disputants(s)
        self.recorder.escalations += 1
        res = escalate(self.agents, disputants[0], disputants, self._resolve, self._serialize)
        if res.depth > 1:
            self._account(kernel, "rsu", "domain", CONTROL_BITS, "escalation")
        for vid, d in sorted(res.assignment.items()):
            s.proposals[vid] = self.proposal(vid, d, s.proposals[vid].priority)
            self._account(kernel, res.resolver if res.depth == 1 else "rsu", vid, CONTROL_BITS, "assignment")
        self.outcome = f"escalated:{res.resolver}"

    def _resolve(self, node: GenerativeAgent, disputants: list[str]) -> dict[str, int] | None:
        """Joint delay search over {d, d+1, d+2} per disputant, conflicts priced hard."""
        if node.level is not Level.INFRASTRUCTURE or len(disputants) > 6:
            return None
        s = self.session
        base = {vid: s.proposals[vid].delay for vid in disputants}
        others = [p for k, p in s.proposals.items() if k not in base]
        grids = np.array(np.meshgrid(*[range(3)] * len(disputants), indexing="ij")).reshape(len(disputants), -1).T
        joint, conflicts, total = [], [], []
        for offs in grids:
            cand = {vid: base[vid] + int(o) for vid, o in zip(disputants, offs)}
            if any(d > self.specs[v].max_delay(self.H, self.margin) for v, d in cand.items()):
                continue
            props = others + [self.proposal(v, d, 0.0) for v, d in cand.items()]
            joint.append(cand)
            conflicts.append(len(detect_conflicts(props)))
            total.append(sum(cand.values()))
        if not joint:
            return None
        A = len(joint)
        model = WorldModel.exact(
            np.ones((1, A, 1)), [[-float(t) for t in total]], [[[float(c) for c in conflicts]]], ("conflicts",)
        )
        node.model = model
        node.intents = [
            IntentDescriptor("conflict-free", [("delay", 1.0)], [Constraint("conflicts", 0.0, lam=1e6)])
        ]
        cands = [Action.of(ActionKind.HOLD, slot=i, scope="cluster") for i in range(A)]
        choice, result = node.plan(0, cands, H=1)
        if conflicts[result.index] != 0:
            return None
        return joint[result.index]

    def _serialize(self, node: GenerativeAgent, disputants: list[str]) -> dict[str, int]:
        fixed = [k for k in self.session.proposals if k not in disputants]
        return self.serialize(sorted(disputants, key=agent_order), fixed)

    def _commit_all(self, kernel: Kernel) -> None:
        s = self.session
        self.recorder.rounds.append(s.rounds)
        if not self.outcome:
            self.outcome = s.outcome.value
        for vid in self.ids:
            d = s.proposals[vid].delay
            self.commit(kernel, vid, d)
        self._now = kernel.now
        if self.fabric is not None and not self.in_shadow:
            self.fabric.sync_round(SyncMode(self.cfg["sync.mode"]), kernel.now)

    def shadow_ticks(self, kernel: Kernel, extra: Sequence[tuple[str, int]] = ()) -> int:
        ends = [self.specs[v].arrival + d + len(self.specs[v].path) for v, d in [*self.delays.items(), *extra]]
        last = self.motion_start + (max(ends, default=0) + 1) * self.step_ticks
        return max(0, last - kernel.now)

    def commit(self, kernel: Kernel, vid: str, delay: int) -> None:
        """Declare a motion intention, shadow-validated; on veto take the earliest safe slot."""
        action = Action.of(ActionKind.DECLARE_INTENTION, issued_at=kernel.now, motion=True, delay=delay)
        try:
            act(kernel, self.name, vid, action, shadow_ticks=self.shadow_ticks(kernel, [(vid, delay)]))
        except VetoedByShadow:
            self.vetoes += 1
            blocked = self._claims([self.trajectory(v, d) for v, d in self.delays.items()])
            safe = self.earliest_free(vid, blocked)
            action = Action.of(ActionKind.DECLARE_INTENTION, issued_at=kernel.now, motion=True, delay=safe)
            act(kernel, self.name, vid, action, shadow_ticks=self.shadow_ticks(kernel, [(vid, safe)]))

    # ---- motion and uplink

    def _uplink(self, kernel, vid, size, level, score, key) -> bool:
        new = key is not None and key != self.rsu_key[vid]
        relevant = min(size, self.cfg["intersection.descriptor_bits"]) if new else 0
        packet = Packet(vid, size, contribution_score=score, protection=level, relevant_bits=relevant)
        ok = self.network.send(kernel, vid, "rsu", packet, "uplink", protection=level)
        if ok and key is not None:
            self.rsu_key[vid] = key
        return ok

    def _step(self, kernel: Kernel, step: int) -> None:
        self.step_no = step
        self._now = kernel.now
        cells: dict[Cell, str] = {}
        for vid in self.ids:
            c = self.cell_at(vid, step)
            if c is None:
                continue
            if c in cells:
                self.collisions += 1
                self.violations.append(f"collision:{c[0]}.{c[1]}@{step}:{cells[c]},{vid}")
            else:
                cells[c] = vid
        if not self.in_shadow:
            self._communicate(kernel, step)
        pending = any(
            vid not in self.delays or step + 1 < self.specs[vid].arrival + self.delays[vid] + len(self.specs[vid].path)
            for vid in self.ids
        )
        if pending and step + 1 < self.H:
            kernel.after(self.step_ticks, self.name, EventKind.AGENT_TICK, ("step", step + 1))

    def _communicate(self, kernel: Kernel, step: int) -> None:
        cfg = self.cfg
        d_bits = cfg["intersection.descriptor_bits"]
        usage = []
        for vid in self.ids:
            if not self.present(vid, step):
                continue
            agent = self.agents[vid]
            cell = self.cell_at(vid, step)
            if cell is None:
                key = QUEUE_KEY
            else:
                jitter = kernel.rng.stream(f"perception:{vid}").uniform(-0.45, 0.45, 2)
                st, dist = agent.perceive((cell[0] + 0.5 + jitter[0], cell[1] + 0.5 + jitter[1]), kernel.now)
                self.recorder.distortions.append(dist)
                key = st.key
            spec = self.specs[vid]
            if self.mode is Mode.DATA_CENTRIC:
                size, level, score = cfg["intersection.frame_bits"], STANDARD, 0.5
            elif self.mode is Mode.SEMANTIC:
                size, score = d_bits, spec.contribution
                level = select_protection(Packet(vid, size, contribution_score=score), self.network.protection)
            else:
                if key == self.sent_key[vid]:
                    continue
                size, score = d_bits, spec.contribution
                cands = [Action.of(ActionKind.SET_PROTECTION, slot=i, tier=t.tier.value) for i, t in enumerate(TIERS)]
                choice, result = agent.plan(0, cands, H=1)
                act(kernel, self.name, vid, choice, result, cands)
                level = self.tiers[vid]
            self.sent_key[vid] = key
            self._uplink(kernel, vid, size, level, score, key)
            usage.append(effective_size(size, level) / self.budget)
        if not usage:
            return
        measured = {"uplink_util": float(np.mean(usage))}
        self.recorder.alignment.append((kernel.now, measured))
        if self.duals_on:
            old = self.rsu_intent.constraints[0].lam
            lam = update_duals(self.rsu_intent, measured)["uplink_util"]
            if lam != old:
                for vid in self.ids:
                    if self.present(vid, step):
                        for it in self.agents[vid].intents:
                            for c in it.constraints:
                                c.lam = lam
                        self.network.account(kernel.now, "rsu", vid, CONTROL_BITS, "dual")

    # ---- results

    def artifacts(self, kernel: Kernel) -> RunArtifacts:
        cfg = self.cfg
        for vid in self.ids:
            v = self.specs[vid]
            done = vid in self.delays and v.arrival + self.delays[vid] + len(v.path) <= v.deadline
            self.recorder.tasks.append(bool(done and self.collisions == 0))
        uplink = sum(r.bits for r in self.network.tx_log if r.dst == "rsu" and r.src in self.specs)
        ex = self.recorder.extras
        ex.update(common_extras(cfg, "intersection"))
        ex.update(
            scenario="intersection",
            mode=self.mode.value,
            vehicles=len(self.ids),
            collisions=self.collisions,
            vetoes=self.vetoes,
            escalations=self.recorder.escalations,
            uplink_bits=uplink,
            run_success=all(self.recorder.tasks),
        )
        if self.session is not None:
            ex["negotiation_outcome"] = self.outcome
            ex["negotiation_delay_ms"] = self.session.latency // TICKS_PER_MS
            ex["concessions"] = len(self.session.concessions)
        # each sample holds for one motion step
        end = self.recorder.alignment[-1][0] + self.step_ticks if self.recorder.alignment else kernel.now
        warmup = self.motion_start + cfg["metrics.warmup_steps"] * self.step_ticks
        report = build_report(self.network.tx_log, self.network.deliveries, self.recorder, [self.rsu_intent], end, warmup)
        replicas = {k: a.replica for k, a in self.agents.items()}
        if self.fabric is not None:
            replicas.update(self.fabric.aggregators)
        reasoning = sorted(
            (line for a in self.agents.values() for line in a.reasoning_log),
            key=lambda ln: (int(ln.split(",", 1)[0]), agent_order(ln.split(",", 2)[1])),
        )
        sidecar = {
            "grid": self.geo.size,
            "vehicles": [
                {
                    "id": v.id,
                    "heading": v.heading,
                    "lane": v.lane,
                    "movement": v.movement,
                    "arrival": v.arrival,
                    "path": [list(c) for c in v.path],
                    "utility": v.utility,
                    "deadline": v.deadline,
                    "delay": self.delays.get(v.id),
                }
                for v in self.specs.values()
            ],
            "collisions": self.collisions,
            "rounds": self.session.rounds if self.session else None,
            "outcome": self.outcome,
        }
        return RunArtifacts(
            config=cfg,
            report=report,
            trace=kernel.trace_text(),
            negotiation=list(self.session.trace) if self.session else [],
            reasoning=reasoning,
            rejections=[ln for g in replicas.values() for ln in g.rejection_lines()],
            snapshots={k: g.snapshot() for k, g in sorted(replicas.items())},
            sidecar=sidecar,
        )
