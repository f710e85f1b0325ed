"""Two senders sharing one link, coordinated only through a price.

Each agent picks an integer rate to maximise ``w * log(1 + r)`` less the
current price times its rate; the link raises the price while the summed
rate exceeds capacity and lowers it otherwise.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from krakensim.agents import Action, ActionKind, GenerativeAgent, Level, WorldModel, act
from krakensim.config import RunConfig
from krakensim.infra.network import Network
from krakensim.infra.topology import NodeLevel, Topology
from krakensim.knowledge.graph import KnowledgeGraph
from krakensim.knowledge.intents import Constraint, IntentDescriptor, update_duals
from krakensim.metrics import build_report
from krakensim.scenarios.base import Mode, RunArtifacts, ScenarioWorld, new_kernel
from krakensim.sim import TICKS_PER_MS, EventKind, Kernel

STEP_TICKS = TICKS_PER_MS
PRICE_BITS = 64
RATE_BITS = 64


def utility(weights: tuple[float, ...], rates: tuple[int, ...]) -> float:
    return sum(w * math.log1p(r) for w, r in zip(weights, rates))


def centralized_optimum(weights: tuple[float, ...], max_rate: int, capacity: float) -> tuple[tuple[int, ...], float]:
    """Best feasible joint rate vector by exhaustive search."""
    best, arg = -math.inf, None
    for rates in itertools.product(range(max_rate + 1), repeat=len(weights)):
        if sum(rates) <= capacity + 1e-12:
            u = utility(weights, rates)
            if u > best + 1e-12:
                best, arg = u, rates
    return arg, best


@dataclass
class DualToyScenario:
    config: RunConfig
    name: str = "dual-toy"

    @property
    def weights(self) -> tuple[float, float]:
        return (self.config["dual_toy.w1"], self.config["dual_toy.w2"])

    @property
    def duals_active(self) -> bool:
        return Mode(self.config.mode) is Mode.FULL and not self.config["duals.frozen"]

    def instantiate(self) -> tuple[Kernel, "DualToyWorld"]:
        steps = self.config["dual_toy.steps"]
        kernel = new_kernel(self.config, self.config["run.horizon"] or steps * STEP_TICKS)
        world = DualToyWorld(self)
        kernel.register(world.name, world)
        kernel.schedule(0, world.name, EventKind.AGENT_TICK, 0)
        return kernel, world

    def run(self) -> RunArtifacts:
        kernel, world = self.instantiate()
        kernel.run_until(kernel.horizon)
        return world.artifacts(kernel)


def build_dual_toy(seed: int = 0, mode: Mode | str = Mode.FULL, config: RunConfig | None = None) -> DualToyScenario:
    cfg = (config or RunConfig()).with_overrides({"run.scenario": "dual-toy", "run.mode": Mode(mode).value, "run.seed": seed})
    return DualToyScenario(cfg)


class DualToyWorld(ScenarioWorld):
    name = "dual-toy"

    def __init__(self, scenario: DualToyScenario):
        cfg = scenario.config
        super().__init__(cfg)
        self.scenario = scenario
        self.weights = scenario.weights
        self.R = cfg["dual_toy.max_rate"]
        self.capacity = cfg["dual_toy.capacity"]
        self.ids = ["a1", "a2"]
        self.rates = {a: 0 for a in self.ids}
        self.lambdas: list[float] = []
        self.totals: list[float] = []
        self.history: list[tuple[int, int]] = []
        self.link = IntentDescriptor(
            "shared-link", [("throughput_utility", 1.0)], [Constraint("load", self.capacity, eta=cfg["duals.eta"])]
        )
        topo = Topology()
        topo.add_node("link", NodeLevel.BASE_STATION)
        for a in self.ids:
            topo.add_node(a, NodeLevel.USER_EQUIPMENT)
        self.network = Network(topo)
        rates = np.arange(self.R + 1, dtype=float)
        self.candidates = [Action.of(ActionKind.SET_FLOW_WEIGHT, slot=r, rate=r) for r in range(self.R + 1)]
        for a, w in zip(self.ids, self.weights):
            model = WorldModel.exact(np.ones((1, self.R + 1, 1)), [w * np.log1p(rates)], [[rates]], ("rate",))
            own = IntentDescriptor(f"{a}-rate", [("utility", w)], [Constraint("rate", 0.0, eta=cfg["duals.eta"])])
            self.agents[a] = GenerativeAgent(a, Level.EDGE, "link", KnowledgeGraph(a), model, [own])
        idle = WorldModel.exact(np.ones((1, 1, 1)), [[0.0]])
        self.agents["link"] = GenerativeAgent("link", Level.INFRASTRUCTURE, "domain", KnowledgeGraph("link"), idle, [self.link])
        self.agents["domain"] = GenerativeAgent("domain", Level.DOMAIN, None, KnowledgeGraph("domain"), idle)

    @property
    def lam(self) -> float:
        return self.link.constraints[0].lam

    def state_view(self):
        return {"rates": sorted(self.rates.items()), "lam": self.lam}

    def apply_action(self, kernel: Kernel, agent_id: str, action: Action) -> None:
        if action.kind is not ActionKind.SET_FLOW_WEIGHT:
            raise ValueError(f"dual toy cannot apply {action.kind.value}")
        self.rates[agent_id] = int(action.param("rate"))

    def handle(self, kernel: Kernel, event) -> None:
        step = event.payload
        for a in self.ids:
            agent = self.agents[a]
            before = self.rates[a] if self.history else None
            choice, result = agent.plan(0, self.candidates, H=1)
            act(kernel, self.name, a, choice, result, self.candidates)
            fresh = RATE_BITS if self.rates[a] != before else 0
            self.network.account(kernel.now, a, "link", RATE_BITS, "rate-report", fresh)
        load = sum(self.rates.values())
        measured = {"load": float(load)}
        self.recorder.alignment.append((kernel.now, measured))
        self.history.append(tuple(self.rates[a] for a in self.ids))
        self.totals.append(utility(self.weights, self.history[-1]))
        if self.scenario.duals_active:
            old = self.lam
            lam = update_duals(self.link, measured)["load"]
            for a in self.ids:
                self.agents[a].intents[0].constraints[0].lam = lam
                relevant = PRICE_BITS if lam != old else 0
                self.network.account(kernel.now, "link", a, PRICE_BITS, "price", relevant)
        self.lambdas.append(self.lam)
        if step + 1 < self.cfg["dual_toy.steps"]:
            kernel.after(STEP_TICKS, self.name, EventKind.AGENT_TICK, step + 1)

    def steady_utility(self) -> float:
        tail = self.totals[len(self.totals) // 2 :]
        return float(np.mean(tail)) if tail else 0.0

    def artifacts(self, kernel: Kernel) -> RunArtifacts:
        cfg = self.cfg
        opt_rates, opt = centralized_optimum(self.weights, self.R, self.capacity)
        steady = self.steady_utility()
        self.recorder.tasks.append(abs(steady - opt) <= 0.05 * abs(opt) + 1e-12)
        ex = self.recorder.extras
        ex.update(
            scenario="dual-toy",
            mode=Mode(cfg.mode).value,
            steady_utility=steady,
            optimum_utility=opt,
            optimum_rates=";".join(map(str, opt_rates)),
            final_rates=";".join(map(str, self.history[-1])) if self.history else "",
            final_lambda=self.lam,
            max_lambda=max(self.lambdas, default=0.0),
            min_lambda=min(self.lambdas, default=0.0),
        )
        warmup = cfg["metrics.warmup_steps"] * STEP_TICKS
        end = len(self.totals) * STEP_TICKS
        report = build_report(self.network.tx_log, self.network.deliveries, self.recorder, [self.link], end, warmup)
        replicas = {k: a.replica for k, a in self.agents.items()}
        reasoning = [ln for a in self.ids for ln in self.agents[a].reasoning_log]
        reasoning.sort(key=lambda ln: (int(ln.split(",", 1)[0]), ln.split(",", 2)[1]))
        return RunArtifacts(
            config=cfg,
            report=report,
            trace=kernel.trace_text(),
            reasoning=reasoning,
            rejections=[ln for g in replicas.values() for ln in g.rejection_lines()],
            snapshots={k: g.snapshot() for k, g in sorted(replicas.items())},
            sidecar={"lambdas": self.lambdas, "rates": [list(r) for r in self.history], "optimum": list(opt_rates)},
        )
