"""Replica synchronisation cost as the agent population grows.

Every replica changes its own state each round (the all-dirty worst case by
default) and one synchronisation round follows. Raw mode rebroadcasts full
state to every peer; semantic mode sends flat deltas; the full stack uses
the configured topology, hierarchical unless overridden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from krakensim.config import RunConfig
from krakensim.infra.network import Network
from krakensim.infra.topology import Topology
from krakensim.knowledge.graph import KnowledgeGraph
from krakensim.knowledge.objects import Kind
from krakensim.knowledge.sync import Hierarchy, SyncFabric, SyncMode
from krakensim.metrics import build_report
from krakensim.scenarios.base import Mode, RunArtifacts, ScenarioWorld, new_kernel
from krakensim.sim import TICKS_PER_MS, EventKind, Kernel

ROUND_TICKS = 10 * TICKS_PER_MS


@dataclass
class SyncScenario:
    config: RunConfig
    name: str = "sync"

    @property
    def sync_mode(self) -> SyncMode:
        mode = Mode(self.config.mode)
        if mode is Mode.FULL:
            return SyncMode(self.config["sync.mode"])
        return SyncMode.FLAT

    def instantiate(self) -> tuple[Kernel, "SyncWorld"]:
        rounds = self.config["sync.rounds"]
        kernel = new_kernel(self.config, self.config["run.horizon"] or rounds * ROUND_TICKS)
        world = SyncWorld(self)
        kernel.register(world.name, world)
        kernel.schedule(0, world.name, EventKind.SYNC_TRIGGER, 0)
        return kernel, world

    def run(self) -> RunArtifacts:
        kernel, world = self.instantiate()
        kernel.run_until(kernel.horizon)
        return world.artifacts(kernel)


def build_sync(n: int, seed: int = 0, mode: Mode | str = Mode.FULL, config: RunConfig | None = None) -> SyncScenario:
    cfg = (config or RunConfig()).with_overrides(
        {"run.scenario": "sync", "run.mode": Mode(mode).value, "run.seed": seed, "sync.n": n}
    )
    return SyncScenario(cfg)


class SyncWorld(ScenarioWorld):
    name = "sync"

    def __init__(self, scenario: SyncScenario):
        cfg = scenario.config
        super().__init__(cfg)
        self.scenario = scenario
        self.ids = [f"n{i:03d}" for i in range(cfg["sync.n"])]
        self.replicas = {i: KnowledgeGraph(i) for i in self.ids}
        self.raw = Mode(cfg.mode) is Mode.DATA_CENTRIC
        self.network = Network(Topology())
        self.now = 0
        self.round_messages: list[int] = []
        hierarchy = Hierarchy.build(self.ids, cfg["sync.k"]) if scenario.sync_mode is SyncMode.HIERARCHICAL else None
        self.fabric = SyncFabric(
            self.replicas,
            hierarchy,
            kinds=(Kind.FACT,),
            object_bits=cfg["sync.object_bits"],
            header_bits=cfg["sync.header_bits"],
            on_message=self._message,
        )

    def state_view(self):
        return {i: g.epoch for i, g in sorted(self.replicas.items())}

    def _message(self, sender, receiver, bits, fresh_bits) -> None:
        self.recorder.sync_messages += 1
        self.network.account(self.now, sender, receiver, bits, "sync", fresh_bits)

    def handle(self, kernel: Kernel, event) -> None:
        r = event.payload
        self.now = kernel.now
        cfg = self.cfg
        rng = kernel.rng.stream("sync:dirty")
        dirty = [i for i in self.ids if r == 0 or rng.random() < cfg["sync.dirty"]]
        for i in dirty:
            self.replicas[i].publish(Kind.FACT, i, {"round": r, "value": round(float(rng.random()), 6)}, kernel.now, 10**12)
        if self.raw:
            sent = self._broadcast_full(kernel, set(dirty))
        else:
            sent = self.fabric.sync_round(self.scenario.sync_mode, kernel.now)
        self.round_messages.append(sent)
        if r + 1 < cfg["sync.rounds"]:
            kernel.after(ROUND_TICKS, self.name, EventKind.SYNC_TRIGGER, r + 1)

    def _broadcast_full(self, kernel: Kernel, dirty: set[str]) -> int:
        """Every node resends its whole own state to every peer, changed or not."""
        bits = self.cfg["sync.header_bits"] + self.cfg["sync.object_bits"]
        sent = 0
        for i in self.ids:
            own = self.replicas[i].current.get((i, Kind.FACT))
            for j in self.ids:
                if i == j or own is None:
                    continue
                self.replicas[j].upsert(own, kernel.now)
                self._message(i, j, bits, self.cfg["sync.object_bits"] if i in dirty else 0)
                sent += 1
        return sent

    def artifacts(self, kernel: Kernel) -> RunArtifacts:
        cfg = self.cfg
        views = [
            sorted((k[0], o.version) for k, o in g.current.items() if k[1] is Kind.FACT) for g in self.replicas.values()
        ]
        converged = all(v == views[0] for v in views)
        self.recorder.tasks.append(converged)
        self.recorder.extras.update(
            scenario="sync",
            mode=Mode(cfg.mode).value,
            sync_topology=self.scenario.sync_mode.value,
            n=len(self.ids),
            k=cfg["sync.k"],
            messages_per_round=float(np.mean(self.round_messages)) if self.round_messages else 0.0,
            first_round_messages=self.round_messages[0] if self.round_messages else 0,
            replicas_converged=converged,
        )
        report = build_report(self.network.tx_log, self.network.deliveries, self.recorder, (), kernel.now)
        snaps = {k: g.snapshot() for k, g in sorted(self.replicas.items())}
        snaps.update({k: g.snapshot() for k, g in sorted(self.fabric.aggregators.items())})
        return RunArtifacts(
            config=cfg,
            report=report,
            trace=kernel.trace_text(),
            rejections=[ln for g in self.replicas.values() for ln in g.rejection_lines()],
            snapshots=snaps,
            sidecar={"round_messages": self.round_messages},
        )
