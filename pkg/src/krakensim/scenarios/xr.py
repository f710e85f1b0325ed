"""Headset to edge-server scene streaming.

The headset observes a pose/gaze state key every frame; the server renders
each frame a few milliseconds later from whatever it believes the key is.
Raw mode ships whole frames. Semantic modes ship one scene descriptor and
then small deltas. With a shared prior the server predicts the next key
itself and the headset, which mirrors that predictor, only sends a delta
when the prediction would be wrong.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from krakensim.agents import Action, ActionKind, GenerativeAgent, Level, Quantizer, WorldModel, act
from krakensim.config import RunConfig
from krakensim.infra.phy import LIGHT, STANDARD, STRONG, ProtectionLevel, effective_size, select_protection
from krakensim.infra.topology import NodeLevel, Topology
from krakensim.infra.traffic import Packet
from krakensim.knowledge.graph import KnowledgeGraph
from krakensim.knowledge.intents import Constraint, IntentDescriptor, update_duals
from krakensim.knowledge.objects import Kind
from krakensim.knowledge.prior import PriorModel
from krakensim.metrics import build_report
from krakensim.scenarios.base import Mode, RunArtifacts, ScenarioWorld, common_extras, make_network, new_kernel
from krakensim.sim import TICKS_PER_MS, EventKind, Kernel

TIERS: tuple[ProtectionLevel, ...] = (LIGHT, STANDARD, STRONG)
DELTA_SCORE = 0.9
SUMMARY_ENTRY_BITS = 32


def gaze_trace(cfg: RunConfig, rng: np.random.Generator) -> list[int]:
    """Ground-truth state key per frame: ``pose * gaze_keys + gaze``."""
    K, period, P = cfg["xr.gaze_keys"], cfg["xr.gaze_period"], cfg["xr.poses"]
    g = pose = 0
    out = []
    for f in range(cfg["xr.ticks"]):
        jump, target, pose_u, pose_to = rng.random(), rng.integers(K), rng.random(), rng.integers(P)
        if f > 0 and f % period == 0:
            g = int(target) if jump < cfg["xr.saccade_prob"] else (g + 1) % K
        if P > 1 and pose_u < cfg["xr.pose_change_prob"] and pose_to != pose:
            pose = int(pose_to)
        out.append(pose * K + g)
    return out


@dataclass
class XRScenario:
    config: RunConfig
    truth: tuple[int, ...]
    name: str = "xr"

    @property
    def mode(self) -> Mode:
        return Mode(self.config.mode)

    def instantiate(self) -> tuple[Kernel, "XRWorld"]:
        frame = self.config["xr.frame_ms"] * TICKS_PER_MS
        horizon = self.config["run.horizon"] or (len(self.truth) + 1) * frame
        kernel = new_kernel(self.config, horizon)
        world = XRWorld(self)
        kernel.register(world.name, world)
        kernel.register("server", world.server)
        kernel.schedule(0, world.name, EventKind.AGENT_TICK, ("frame", 0))
        return kernel, world

    def run(self) -> RunArtifacts:
        kernel, world = self.instantiate()
        kernel.run_until(kernel.horizon)
        return world.artifacts(kernel)


def build_xr(seed: int, mode: Mode | str = Mode.FULL, config: RunConfig | None = None) -> XRScenario:
    cfg = (config or RunConfig()).with_overrides({"run.scenario": "xr", "run.mode": Mode(mode).value, "run.seed": seed})
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, 0x7A])))
    return XRScenario(cfg, tuple(gaze_trace(cfg, rng)))


class Predictor:
    """What the server will assume for the next frame, replayable on the headset."""

    def __init__(self):
        self.key: int | None = None
        self.dwell = 0
        self.table: dict[tuple[int, int], int] = {}

    def expect(self) -> int | None:
        if self.key is None:
            return None
        return self.table.get((self.key, self.dwell), self.key)

    def advance(self, key: int) -> None:
        self.dwell = self.dwell + 1 if key == self.key else 0
        self.key = key


class Server:
    """Edge renderer: holds the believed key and renders on schedule."""

    def __init__(self, world: "XRWorld"):
        self.world = world
        self.view = Predictor()
        self.received: dict[int, int] = {}

    def handle(self, kernel: Kernel, event) -> None:
        tag = event.payload[0]
        if tag == "key":
            _, frame, key = event.payload
            self.received[frame] = key
        elif tag == "render":
            self.world.render(kernel, event.payload[1])


class XRWorld(ScenarioWorld):
    name = "xr"

    def __init__(self, scenario: XRScenario):
        cfg = scenario.config
        super().__init__(cfg)
        self.truth = scenario.truth
        self.frame_ticks = cfg["xr.frame_ms"] * TICKS_PER_MS
        self.render_offset = cfg["xr.render_offset_ms"] * TICKS_PER_MS
        self.use_prior = self.mode is Mode.FULL and cfg["xr.prior"]
        self.budget = cfg["xr.uplink_budget_bits"]
        self.server = Server(self)
        self.mirror = Predictor()
        self.prior = PriorModel(refresh_interval=cfg["xr.prior_refresh_frames"] * self.frame_ticks)
        self.served: dict[tuple[int, int], int] = {}
        self.hits = 0
        self.predicted = 0
        self.matches: list[bool] = []
        self.deltas = 0
        self.suppressed = 0
        self.tier = STANDARD

        topo = Topology()
        topo.add_node("hmd", NodeLevel.USER_EQUIPMENT)
        topo.add_node("server", NodeLevel.EDGE)
        loss = cfg["xr.link_loss"]
        topo.add_link("hmd", "server", 1000.0, 2 * TICKS_PER_MS, loss)
        topo.add_link("server", "hmd", 1000.0, 2 * TICKS_PER_MS, loss)
        self.network = make_network(topo, cfg)
        if self.mode is Mode.DATA_CENTRIC:
            self.network.semantic_retransmit = False

        eta = cfg["duals.eta"]
        self.intent = IntentDescriptor("delta-budget", [("render_match", 1.0)], [Constraint("uplink_util", 1.0, eta=eta)])
        d_bits = cfg["xr.delta_bits"]
        U = [[1.0 - loss * t.loss_multiplier for t in TIERS]]
        G = [[[effective_size(d_bits, t) / self.budget for t in TIERS]]]
        K = cfg["xr.gaze_keys"]
        self.agents["hmd"] = GenerativeAgent(
            "hmd",
            Level.EDGE,
            "server",
            KnowledgeGraph("hmd"),
            WorldModel.exact(np.ones((1, 3, 1)), U, G, ("uplink_util",)),
            [self.intent],
            quantizer=Quantizer((0.0,), (float(K),), (K,)),
        )
        idle = WorldModel.exact(np.ones((1, 1, 1)), [[0.0]])
        self.agents["server"] = GenerativeAgent("server", Level.INFRASTRUCTURE, "domain", KnowledgeGraph("server"), idle)
        self.agents["domain"] = GenerativeAgent("domain", Level.DOMAIN, None, KnowledgeGraph("domain"), idle)

    def state_view(self):
        return {"mirror": [self.mirror.key, self.mirror.dwell], "served": sorted(self.served.items())}

    def apply_action(self, kernel: Kernel, agent_id: str, action: Action) -> None:
        if action.kind is not ActionKind.SET_PROTECTION:
            raise ValueError(f"xr world cannot apply {action.kind.value}")
        self.tier = TIERS[action.slot]

    def handle(self, kernel: Kernel, event) -> None:
        self.frame(kernel, event.payload[1])

    def _send(self, kernel, size, level, score, relevant, payload) -> bool:
        packet = Packet("hmd", size, contribution_score=score, protection=level, relevant_bits=relevant)
        return self.network.send(kernel, "hmd", "server", packet, "uplink", receiver="server", payload=payload, protection=level)

    def frame(self, kernel: Kernel, f: int) -> None:
        cfg = self.cfg
        key = self.truth[f]
        K = cfg["xr.gaze_keys"]
        gaze = key % K
        jitter = kernel.rng.stream("perception:hmd").uniform(-0.45, 0.45)
        _, dist = self.agents["hmd"].perceive(gaze + 0.5 + jitter, kernel.now)
        self.recorder.distortions.append(dist)
        kernel.after(self.render_offset, "server", EventKind.AGENT_TICK, ("render", f))
        if f + 1 < len(self.truth):
            kernel.after(self.frame_ticks, self.name, EventKind.AGENT_TICK, ("frame", f + 1))
        if self.mode is Mode.FULL and f > 0:
            prev = self.truth[f - 1]
            self.prior.observe((prev, self.truth_dwell(f - 1)), key)
            if self.use_prior and self.prior.refresh(kernel.now):
                self._publish_summary(kernel)

        expected = self.mirror.expect()
        if self.use_prior and f >= cfg["xr.warmup_frames"]:
            self.predicted += 1
            self.hits += expected == key
        if self.mode is Mode.DATA_CENTRIC:
            new = key != self.mirror.key
            relevant = (cfg["xr.descriptor_bits"] if f == 0 else cfg["xr.delta_bits"]) if new else 0
            ok = self._send(kernel, cfg["xr.frame_bits"], STANDARD, 0.5, relevant, ("key", f, key))
            self._follow(key if ok else expected)
            return
        if f == 0:
            size = cfg["xr.descriptor_bits"]
            level = select_protection(Packet("hmd", size, contribution_score=1.0), self.network.protection)
            ok = self._send(kernel, size, level, 1.0, size, ("key", f, key))
            self._follow(key if ok else None)
            return
        if key == expected:
            self.suppressed += 1
            self.mirror.advance(key)
            return
        size = cfg["xr.delta_bits"]
        if self.mode is Mode.SEMANTIC:
            level = select_protection(Packet("hmd", size, contribution_score=DELTA_SCORE), self.network.protection)
        else:
            agent = self.agents["hmd"]
            cands = [Action.of(ActionKind.SET_PROTECTION, slot=i, tier=t.tier.value) for i, t in enumerate(TIERS)]
            choice, result = agent.plan(0, cands, H=1)
            act(kernel, self.name, "hmd", choice, result, cands)
            level = self.tier
        self.deltas += 1
        ok = self._send(kernel, size, level, DELTA_SCORE, size, ("key", f, key))
        self._follow(key if ok else expected)
        measured = {"uplink_util": effective_size(size, level) / self.budget}
        self.recorder.alignment.append((kernel.now, measured))
        if self.mode is Mode.FULL and not cfg["duals.frozen"]:
            update_duals(self.intent, measured)

    def _follow(self, key: int | None) -> None:
        # the server advances the same way: the delivered key, else its own guess
        if key is not None:
            self.mirror.advance(key)

    def truth_dwell(self, f: int) -> int:
        d = 0
        while f - d - 1 >= 0 and self.truth[f - d - 1] == self.truth[f]:
            d += 1
        return d

    def _publish_summary(self, kernel: Kernel) -> None:
        table = {}
        for ctx in sorted(self.prior._tables):
            hit = self.prior.predict(ctx)
            if hit is not None:
                table[ctx] = hit[0]
        changed = {c: o for c, o in table.items() if self.served.get(c) != o}
        if not changed:
            return
        self.served = table
        self.mirror.table = dict(table)
        self.server.view.table = dict(table)
        bits = self.cfg["sync.header_bits"] + SUMMARY_ENTRY_BITS * len(changed)
        self.network.account(kernel.now, "hmd", "server", bits, "model-summary", SUMMARY_ENTRY_BITS * len(changed))
        self.recorder.sync_messages += 1
        self.agents["hmd"].replica.publish(
            Kind.MODEL_SUMMARY, "gaze-prior", [[list(c), o] for c, o in sorted(table.items())], kernel.now,
            self.prior.refresh_interval,
        )

    def render(self, kernel: Kernel, f: int) -> None:
        view = self.server.view
        key = self.server.received.pop(f, None)
        if key is None:
            key = view.expect()
        if key is not None:
            view.advance(key)
        self.matches.append(key == self.truth[f])

    def artifacts(self, kernel: Kernel) -> RunArtifacts:
        cfg = self.cfg
        self.recorder.tasks.extend(self.matches)
        ex = self.recorder.extras
        ex.update(common_extras(cfg, "xr"))
        ex.update(
            scenario="xr",
            mode=self.mode.value,
            frames=len(self.truth),
            match_rate=float(np.mean(self.matches)) if self.matches else 0.0,
            deltas=self.deltas,
            suppressed=self.suppressed,
            prior_hit_rate=self.hits / self.predicted if self.predicted else 0.0,
            uplink_bits=sum(r.bits for r in self.network.tx_log if r.src == "hmd"),
            descriptor_to_render_ms=self.render_offset / TICKS_PER_MS,
            run_success=bool(self.matches) and float(np.mean(self.matches)) >= 0.99,
        )
        end = self.recorder.alignment[-1][0] + self.frame_ticks if self.recorder.alignment else kernel.now
        warmup = cfg["xr.warmup_frames"] * self.frame_ticks
        report = build_report(self.network.tx_log, self.network.deliveries, self.recorder, [self.intent], end, warmup)
        replicas = {k: a.replica for k, a in self.agents.items()}
        reasoning = [ln for a in self.agents.values() for ln in a.reasoning_log]
        return RunArtifacts(
            config=cfg,
            report=report,
            trace=kernel.trace_text(),
            reasoning=sorted(reasoning, key=lambda ln: int(ln.split(",", 1)[0])),
            rejections=[ln for g in replicas.values() for ln in g.rejection_lines()],
            snapshots={k: g.snapshot() for k, g in sorted(replicas.items())},
            sidecar={"truth": list(self.truth), "matches": [bool(m) for m in self.matches]},
        )
