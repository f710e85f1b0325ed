"""Distributed anomaly sensing over periodic waveforms.

Each sensor sees a noisy sinusoid with short positive bursts injected after
an anomaly-free training prefix. Its world model is a per-phase-bin mean
learned on that prefix; residuals beyond ``threshold_sigma`` residual
deviations for ``run_len`` samples in a row raise an event. Raw mode ships
every sample in batches and the fusion node runs the same detector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from krakensim import kernels
from krakensim.agents import Action, ActionKind, GenerativeAgent, Level, Quantizer, WorldModel, act
from krakensim.config import RunConfig
from krakensim.infra.phy import LIGHT, STANDARD, STRONG, ProtectionLevel, effective_size, select_protection
from krakensim.infra.topology import NodeLevel, Topology
from krakensim.infra.traffic import Packet
from krakensim.knowledge.graph import KnowledgeGraph
from krakensim.knowledge.intents import Constraint, IntentDescriptor, update_duals
from krakensim.knowledge.objects import Kind, payload_distance
from krakensim.metrics import build_report
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

TIERS: tuple[ProtectionLevel, ...] = (LIGHT, STANDARD, STRONG)
EVENT_SCORE = 0.9
TRAIN = 1024
BIN_BITS = 16
NOISE_SIGMA = 0.1


@dataclass(frozen=True)
class SensorTrace:
    id: str
    samples: np.ndarray
    bursts: tuple[int, ...]  # start index of each injected burst


def synth_traces(cfg: RunConfig, n: int, rng: np.random.Generator) -> list[SensorTrace]:
    T, period = cfg["sensing.samples"], cfg["sensing.period"]
    burst, count = cfg["sensing.burst"], cfg["sensing.anomalies"]
    out = []
    t = np.arange(T)
    for i in range(n):
        phase = rng.uniform(0, 2 * np.pi)
        x = np.sin(2 * np.pi * t / period + phase) + rng.normal(0.0, NOISE_SIGMA, T)
        starts = []
        if count:
            seg = (T - TRAIN) // count
            if seg < 2 * burst:
                raise ValueError("too many anomaly bursts for the sample budget")
            for k in range(count):
                lo = TRAIN + k * seg
                s = int(rng.integers(lo, lo + seg - burst))
                x[s : s + burst] += cfg["sensing.magnitude_sigma"] * NOISE_SIGMA
                starts.append(s)
        out.append(SensorTrace(f"s{i}", x, tuple(starts)))
    return out


def phase_bins(T: int, period: int, bins: int) -> np.ndarray:
    return (np.arange(T) % period) * bins // period


def fit_phase_model(samples: np.ndarray, period: int, bins: int) -> tuple[np.ndarray, float, float]:
    """Per-bin means on the training prefix, plus residual mean and deviation there."""
    idx = phase_bins(TRAIN, period, bins)
    train = samples[:TRAIN]
    means = np.array([train[idx == b].mean() if np.any(idx == b) else 0.0 for b in range(bins)])
    resid = train - means[idx]
    return means, float(resid.mean()), float(resid.std())


def detect(
    samples: np.ndarray, means: np.ndarray, period: int, threshold: float, run_len: int, refractory: int = 0
) -> np.ndarray:
    """Sample indices that raise an event; runs within ``refractory`` of the last event are merged."""
    bins = len(means)
    expected = means[phase_bins(len(samples), period, bins)]
    hits = kernels.residual_scan(samples, expected, threshold, run_len)
    hits = hits[hits >= TRAIN]
    if refractory <= 0 or len(hits) < 2:
        return hits
    keep = [int(hits[0])]
    for h in hits[1:]:
        if h - keep[-1] > refractory:
            keep.append(int(h))
    return np.array(keep, dtype=np.int64)


@dataclass
class SensingScenario:
    config: RunConfig
    sensors: tuple[SensorTrace, ...]
    name: str = "sensing"

    @property
    def mode(self) -> Mode:
        return Mode(self.config.mode)

    def instantiate(self) -> tuple[Kernel, "SensingWorld"]:
        cfg = self.config
        sample = cfg["sensing.sample_us"]
        horizon = cfg["run.horizon"] or (cfg["sensing.samples"] + cfg["sensing.batch"]) * sample
        kernel = new_kernel(cfg, horizon)
        world = SensingWorld(self)
        kernel.register(world.name, world)
        kernel.schedule(0, world.name, EventKind.AGENT_TICK, ("start",))
        return kernel, world

    def run(self) -> RunArtifacts:
        kernel, world = self.instantiate()
        kernel.run_until(kernel.horizon)
        return world.artifacts(kernel)


def build_sensing(
    n_sensors: int, seed: int, mode: Mode | str = Mode.FULL, config: RunConfig | None = None
) -> SensingScenario:
    if not 2 <= n_sensors <= 16:
        raise InvalidCount(f"sensing needs 2..16 sensors, got {n_sensors}")
    cfg = (config or RunConfig()).with_overrides(
        {"run.scenario": "sensing", "run.mode": Mode(mode).value, "run.seed": seed, "sensing.n": n_sensors}
    )
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, 0x5E])))
    return SensingScenario(cfg, tuple(synth_traces(cfg, n_sensors, rng)))


class SensingWorld(ScenarioWorld):
    name = "sensing"

    def __init__(self, scenario: SensingScenario):
        cfg = scenario.config
        super().__init__(cfg)
        self.sensors = {s.id: s for s in scenario.sensors}
        self.ids = [s.id for s in scenario.sensors]
        self.sample_ticks = cfg["sensing.sample_us"]
        self.batch = cfg["sensing.batch"]
        self.period = cfg["sensing.period"]
        self.bins = cfg["sensing.phase_bins"]
        self.budget = cfg["sensing.uplink_budget_bits"]
        self.tier = STANDARD
        self.models: dict[str, np.ndarray] = {}
        self.thresholds: dict[str, float] = {}
        self.hits: dict[str, np.ndarray] = {}
        self.sent_summary: dict[str, np.ndarray] = {}
        self.events: dict[str, list[int]] = {sid: [] for sid in self.ids}
        self.received = {sid: np.full(cfg["sensing.samples"], np.nan) for sid in self.ids}

        topo = Topology()
        topo.add_node("fusion", NodeLevel.EDGE)
        loss = cfg["sensing.link_loss"]
        for sid in self.ids:
            topo.add_node(sid, NodeLevel.USER_EQUIPMENT)
            topo.add_link(sid, "fusion", 100.0, TICKS_PER_MS, loss)
            topo.add_link("fusion", sid, 100.0, TICKS_PER_MS, loss)
        self.network = make_network(topo, cfg)
        if self.mode is Mode.DATA_CENTRIC:
            self.network.semantic_retransmit = False

        eta = cfg["duals.eta"]
        e_bits = cfg["sensing.event_bits"]
        self.intent = IntentDescriptor("event-budget", [("detection", 1.0)], [Constraint("uplink_util", 1.0, eta=eta)])
        U = [[1.0 - loss * t.loss_multiplier for t in TIERS]]
        G = [[[effective_size(e_bits, t) / self.budget for t in TIERS]]]
        idle = WorldModel.exact(np.ones((1, 1, 1)), [[0.0]])
        for sid in self.ids:
            self.agents[sid] = GenerativeAgent(
                sid,
                Level.EDGE,
                "fusion",
                KnowledgeGraph(sid),
                WorldModel.exact(np.ones((1, 3, 1)), U, G, ("uplink_util",)),
                [self.intent],
                quantizer=Quantizer((-2.0,), (2.0,), (cfg["sensing.quant_levels"],)),
            )
        self.agents["fusion"] = GenerativeAgent("fusion", Level.INFRASTRUCTURE, "domain", KnowledgeGraph("fusion"), idle)
        self.agents["domain"] = GenerativeAgent("domain", Level.DOMAIN, None, KnowledgeGraph("domain"), idle)

    def state_view(self):
        return {"events": sorted((k, v) for k, v in self.events.items())}

    def apply_action(self, kernel: Kernel, agent_id: str, action: Action) -> None:
        if action.kind is not ActionKind.SET_PROTECTION:
            raise ValueError(f"sensing world cannot apply {action.kind.value}")
        self.tier = TIERS[action.slot]

    def handle(self, kernel: Kernel, event) -> None:
        tag = event.payload[0]
        if tag == "start":
            self._train(kernel)
        else:
            self._batch(kernel, event.payload[1])

    def _train(self, kernel: Kernel) -> None:
        cfg = self.cfg
        for sid in self.ids:
            means, mu, sd = fit_phase_model(self.sensors[sid].samples, self.period, self.bins)
            self.models[sid] = means
            self.thresholds[sid] = abs(mu) + cfg["sensing.threshold_sigma"] * sd
            self.hits[sid] = detect(
                self.sensors[sid].samples, means, self.period, self.thresholds[sid], cfg["sensing.run_len"],
                cfg["sensing.refractory"],
            )
        # sensors stream or watch from the end of the training prefix
        first = TRAIN // self.batch
        kernel.schedule(first * self.batch * self.sample_ticks, self.name, EventKind.AGENT_TICK, ("batch", first))
        if self.mode is Mode.FULL:
            for sid in self.ids:
                self._share_model(kernel, sid)

    def _share_model(self, kernel: Kernel, sid: str) -> None:
        """Model summary to the fusion node: once, then only when it drifts."""
        means = self.models[sid]
        last = self.sent_summary.get(sid)
        limit = self.cfg["knowledge.divergence_model_summary"]
        if last is not None and payload_distance(tuple(last), tuple(means)) <= limit:
            return
        self.sent_summary[sid] = means.copy()
        bits = self.cfg["sync.header_bits"] + BIN_BITS * len(means)
        self.network.account(kernel.now, sid, "fusion", bits, "model-summary", BIN_BITS * len(means))
        self.recorder.sync_messages += 1
        self.agents[sid].replica.publish(
            Kind.MODEL_SUMMARY, sid, [round(float(m), 6) for m in means], kernel.now, 10**12
        )

    def _batch(self, kernel: Kernel, b: int) -> None:
        cfg = self.cfg
        lo, hi = b * self.batch, min((b + 1) * self.batch, cfg["sensing.samples"])
        for sid in self.ids:
            trace = self.sensors[sid]
            chunk = trace.samples[lo:hi]
            agent = self.agents[sid]
            _, dist = agent.perceive(float(chunk[-1]), kernel.now)
            self.recorder.distortions.append(dist)
            if self.mode is Mode.DATA_CENTRIC:
                fresh = sum(1 for s in trace.bursts if lo <= s < hi)
                size = cfg["sensing.sample_bits"] * len(chunk)
                packet = Packet(sid, size, contribution_score=0.5, protection=STANDARD,
                                relevant_bits=min(size, fresh * cfg["sensing.event_bits"]))
                if self.network.send(kernel, sid, "fusion", packet, "uplink", protection=STANDARD):
                    self.received[sid][lo:hi] = chunk
                continue
            # the detector is causal, so each run completes inside exactly one batch
            hits = self.hits[sid]
            for idx in hits[(hits >= lo) & (hits < hi)]:
                self._event(kernel, sid, int(idx))
        if hi < cfg["sensing.samples"]:
            kernel.after(self.batch * self.sample_ticks, self.name, EventKind.AGENT_TICK, ("batch", b + 1))

    def _event(self, kernel: Kernel, sid: str, idx: int) -> None:
        cfg = self.cfg
        size = cfg["sensing.event_bits"]
        agent = self.agents[sid]
        if self.mode is Mode.SEMANTIC:
            level = select_protection(Packet(sid, size, contribution_score=EVENT_SCORE), self.network.protection)
        else:
            cands = [Action.of(ActionKind.SET_PROTECTION, slot=i, tier=t.tier.value) for i, t in enumerate(TIERS)]
            choice, result = agent.plan(0, cands, H=1)
            act(kernel, self.name, sid, choice, result, cands)
            level = self.tier
        trace = self.sensors[sid]
        score = float(abs(trace.samples[idx] - self.models[sid][idx % self.period * self.bins // self.period]))
        agent.replica.publish(
            Kind.FACT, f"{sid}:event:{idx}", {"sample": idx, "score": round(score, 6)}, kernel.now, 10**12
        )
        packet = Packet(sid, size, contribution_score=EVENT_SCORE, protection=level, relevant_bits=size)
        if self.network.send(kernel, sid, "fusion", packet, "event", protection=level):
            self.events[sid].append(idx)
        measured = {"uplink_util": effective_size(size, level) / self.budget}
        self.recorder.alignment.append((kernel.now, measured))
        if self.mode is Mode.FULL and not cfg["duals.frozen"]:
            update_duals(self.intent, measured)

    def artifacts(self, kernel: Kernel) -> RunArtifacts:
        cfg = self.cfg
        burst, run_len = cfg["sensing.burst"], cfg["sensing.run_len"]
        if self.mode is Mode.DATA_CENTRIC:
            for sid in self.ids:
                data = self.received[sid]
                got = detect(data, self.models[sid], self.period, self.thresholds[sid], run_len, cfg["sensing.refractory"])
                self.events[sid] = [int(i) for i in got]
        tp = fp = fn = 0
        for sid in self.ids:
            bursts = self.sensors[sid].bursts
            matched = set()
            for idx in self.events[sid]:
                hit = next((s for s in bursts if s <= idx < s + burst + run_len + cfg["sensing.refractory"]), None)
                if hit is None:
                    fp += 1
                else:
                    matched.add(hit)
            tp += len(matched)
            fn += len(bursts) - len(matched)
        self.recorder.tasks.extend([True] * tp + [False] * (fn + fp))
        if not self.recorder.tasks:
            self.recorder.tasks.append(True)
        ex = self.recorder.extras
        ex.update(common_extras(cfg, "sensing"))
        n_events = sum(len(v) for v in self.events.values())
        ex.update(
            scenario="sensing",
            mode=self.mode.value,
            sensors=len(self.ids),
            event_objects=n_events if self.mode is not Mode.DATA_CENTRIC else 0,
            detections=n_events,
            precision=tp / (tp + fp) if tp + fp else 1.0,
            recall=tp / (tp + fn) if tp + fn else 1.0,
            false_positives=fp,
            uplink_bits=sum(r.bits for r in self.network.tx_log if r.dst == "fusion"),
            run_success=fn == 0 and fp == 0,
        )
        end = kernel.now
        report = build_report(self.network.tx_log, self.network.deliveries, self.recorder, [self.intent], end)
        replicas = {k: a.replica for k, a in self.agents.items()}
        reasoning = sorted(
            (ln for a in self.agents.values() for ln in a.reasoning_log), key=lambda ln: int(ln.split(",", 1)[0])
        )
        return RunArtifacts(
            config=cfg,
            report=report,
            trace=kernel.trace_text(),
            reasoning=reasoning,
            rejections=[ln for g in replicas.values() for ln in g.rejection_lines()],
            snapshots={k: g.snapshot() for k, g in sorted(replicas.items())},
            sidecar={
                "bursts": {sid: list(self.sensors[sid].bursts) for sid in self.ids},
                "events": {sid: list(v) for sid, v in self.events.items()},
                "thresholds": {sid: self.thresholds[sid] for sid in self.ids},
            },
        )
