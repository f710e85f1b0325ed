"""Acceptance gate: criteria 1-10, each at its stated tolerance and time budget.

Every criterion records one ``CRITERION n: PASS|FAIL ...`` line, printed in
the pytest terminal summary. Run directly for the lines alone:

    python3 tests/test_acceptance.py
"""

import itertools
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

import conftest  # noqa: E402
from oracles import best_assignment_value, best_path, expectimax, frame_value, random_mdp  # noqa: E402
from test_infra import nodes_of, pkt, random_connected  # noqa: E402
from test_knowledge import FIELDS, competitors, mutate, obj  # noqa: E402

from krakensim.agents import Action, ActionKind, VetoedByShadow, WorldModel, act, plan  # noqa: E402
from krakensim.cli import render_files  # noqa: E402
from krakensim.config import RunConfig  # noqa: E402
from krakensim.infra.mac import ResourceFrame, allocate_frame  # noqa: E402
from krakensim.infra.routing import RoutingMode, path_cost, route  # noqa: E402
from krakensim.infra.traffic import Flow  # noqa: E402
from krakensim.knowledge.graph import KnowledgeGraph  # noqa: E402
from krakensim.knowledge.objects import Kind, endorse, verify_provenance  # noqa: E402
from krakensim.metrics import scaling_report  # noqa: E402
from krakensim.negotiation import Outcome  # noqa: E402
from krakensim.scenarios import build, build_dual_toy, build_intersection, build_sync, centralized_optimum  # noqa: E402

pytestmark = pytest.mark.acceptance

SCENARIOS = ("intersection", "xr", "sensing", "dual-toy", "sync")


def record(n, ok, detail, t0, budget):
    elapsed = time.perf_counter() - t0
    ok = bool(ok) and elapsed < budget
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s / {budget:.0f}s]"
    conftest.ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def cfg_for(scenario, mode="full-kraken", seed=0, **over):
    return RunConfig().with_overrides({"run.scenario": scenario, "run.mode": mode, "run.seed": seed, **over})


def run_world(scenario):
    kernel, world = scenario.instantiate()
    kernel.run_until(kernel.horizon)
    return kernel, world


def intersection_n(seed):
    return 4 + seed % 5


# ---- 1. determinism


def test_criterion_1_determinism():
    t0 = time.perf_counter()
    mismatched = []
    seeds = (0, 17, 2**64 - 1)
    for name, seed in itertools.product(SCENARIOS, seeds):
        a = render_files(build(cfg_for(name, seed=seed)).run())
        b = render_files(build(cfg_for(name, seed=seed)).run())
        if a != b:
            mismatched.append(f"{name}@{seed}:" + ",".join(k for k in a if a[k] != b.get(k)))
    n = len(SCENARIOS) * len(seeds)
    record(1, not mismatched, f"{n - len(mismatched)}/{n} scenario-seed pairs byte-identical {mismatched or ''}", t0, 60)


# ---- 2. negotiation convergence


def test_criterion_2_negotiation_convergence():
    t0 = time.perf_counter()
    rounds, delays, outcomes = [], [], []
    for seed in range(100):
        k, w = run_world(build_intersection(intersection_n(seed), seed, "full-kraken"))
        s = w.session
        rounds.append(s.rounds)
        outcomes.append(s.outcome)
        if s.outcome is Outcome.CONVERGED:
            delays.append(w.artifacts(k).report.extras["negotiation_delay_ms"])
    rounds = np.array(rounds)
    converged = np.array([o is Outcome.CONVERGED for o in outcomes])
    within5 = float(np.mean(converged & (rounds <= 5)))
    within_max = float(np.mean(rounds <= 8))
    delays = np.array(delays)
    in_band = float(np.mean((delays >= 30) & (delays <= 60))) if len(delays) else 0.0
    ok = within5 >= 0.90 and within_max == 1.0 and in_band >= 0.90
    hist = dict(zip(*np.unique(rounds, return_counts=True)))
    detail = (
        f"converged<=5 rounds {within5:.2f} (>=0.90); <=R_max {within_max:.2f} (=1.00); "
        f"30-60 ms delay {in_band:.2f} of converged (>=0.90); rounds histogram {({int(a): int(b) for a, b in hist.items()})}"
    )
    record(2, ok, detail, t0, 120)


# ---- 3. bandwidth construction targets


def uplink(scenario, mode, seed):
    rep = build(cfg_for(scenario, mode, seed)).run().report
    block = rep.to_block()
    return rep.extras["uplink_bits"], "size." in block


def test_criterion_3_bandwidth_targets():
    t0 = time.perf_counter()
    worst = {"intersection": 0.0, "xr": float("inf"), "sensing": float("inf")}
    sizes_printed = True
    for seed in range(3):
        raw, p0 = uplink("intersection", "data-centric", seed)
        for mode in ("semantic", "full-kraken"):
            sem, p1 = uplink("intersection", mode, seed)
            worst["intersection"] = max(worst["intersection"], sem / raw)
            sizes_printed &= p0 and p1
        for name in ("xr", "sensing"):
            raw, p0 = uplink(name, "data-centric", seed)
            for mode in ("semantic", "full-kraken"):
                sem, p1 = uplink(name, mode, seed)
                worst[name] = min(worst[name], raw / sem)
                sizes_printed &= p0 and p1
    ok = worst["intersection"] <= 0.30 and worst["xr"] >= 10 and worst["sensing"] >= 50 and sizes_printed
    detail = (
        f"intersection semantic/raw {worst['intersection']:.4f} (<=0.30); xr raw/semantic {worst['xr']:.1f} (>=10); "
        f"sensing raw/semantic {worst['sensing']:.1f} (>=50); sizes in report {sizes_printed}"
    )
    record(3, ok, detail, t0, 120)


# ---- 4. sync scaling


def test_criterion_4_sync_scaling():
    t0 = time.perf_counter()
    ns = [8, 16, 32, 64]
    counts = {}
    for topo in ("flat", "hierarchical"):
        cfg = RunConfig().with_overrides({"sync.mode": topo, "sync.k": 4, "sync.dirty": 1.0})
        counts[topo] = [build_sync(n, 0, "full-kraken", cfg).run().report.sync_messages for n in ns]
    rep = scaling_report(ns, counts)
    flat, tree = rep.slopes["flat"], rep.slopes["hierarchical"]
    ok = 1.9 <= flat <= 2.1 and tree <= 1.3
    record(4, ok, f"flat slope {flat:.4f} (in [1.9, 2.1]); hierarchical slope {tree:.4f} (<=1.3); counts {counts}", t0, 120)


# ---- 5. dual ascent vs centralized optimum


def test_criterion_5_dual_ascent():
    t0 = time.perf_counter()
    _, w = run_world(build_dual_toy(0, "full-kraken"))
    _, opt = centralized_optimum(w.weights, w.R, w.capacity)
    gap = abs(w.steady_utility() - opt) / opt
    cfg = RunConfig().with_overrides({"dual_toy.steps": 10_000})
    _, long = run_world(build_dual_toy(0, "full-kraken", cfg))
    lams = np.array(long.lambdas)
    # a price at or above the largest weight silences both senders, so the load
    # falls below capacity and the price can only have overshot by one step
    bound = max(long.weights) + cfg["duals.eta"] * (2 * long.R - long.capacity)
    nonneg = bool(lams.min() >= 0 and min(w.lambdas) >= 0)
    ok = gap <= 0.05 and nonneg and lams.max() <= bound and len(lams) == 10_000
    detail = (
        f"steady utility {w.steady_utility():.4f} vs optimum {opt:.4f} (gap {gap:.2%} <= 5%); "
        f"lambda >= 0 {nonneg}; max lambda over 1e4 updates {lams.max():.4f} <= {bound:.4f}"
    )
    record(5, ok, detail, t0, 30)


# ---- 6. planner vs expectimax


def test_criterion_6_planner_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    argmax_ok, worst = 0, 0.0
    for _ in range(200):
        S, A, H = int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        P, R = random_mdp(rng, S, A)
        s = int(rng.integers(S))
        res = plan(WorldModel.exact(P, R), s, list(range(A)), H=H, gamma=0.9)
        ref = np.array([expectimax(P, R, s, a, H, 0.9) for a in range(A)])
        argmax_ok += res.index == int(np.argmax(ref))
        worst = max(worst, float(np.max(np.abs(np.asarray(res.scores) - ref))))
    ok = argmax_ok == 200 and worst <= 1e-9
    record(6, ok, f"argmax matches {argmax_ok}/200; worst value error {worst:.2e} (<=1e-9)", t0, 30)


# ---- 7. knowledge-plane properties


def test_criterion_7_knowledge_properties():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)

    confluent = 0
    for _ in range(50):
        objs = competitors(rng)
        winners = set()
        for perm in itertools.permutations(objs):
            g = KnowledgeGraph()
            for o in perm:
                g.upsert(o, 3)
            cur = g.current.get(("x", Kind.FACT))
            winners.add(cur.id if cur else None)
        confluent += len(winners) == 1

    g = KnowledgeGraph(epoch_window=100_000)
    now, versions, visible_expired = 0, {}, 0
    subjects = [f"s{i}" for i in range(8)]
    for _ in range(10_000):
        now += int(rng.integers(0, 3))
        subj = subjects[rng.integers(len(subjects))]
        if rng.random() < 0.7:
            versions[subj] = versions.get(subj, 0) + 1
            vf = now - int(rng.integers(0, 5))
            g.upsert(obj(float(rng.random()), vf, vf + int(rng.integers(1, 12)), "a", versions[subj], subject=subj), now)
        else:
            g.expire(now)
        for s in subjects:
            hit = g.query_fast(s, Kind.FACT, now)
            visible_expired += hit is not None and not hit.valid_from <= now < hit.valid_until

    mutations = detected = 0
    for _ in range(200):
        o = obj(float(rng.random()), payload=float(rng.normal()))
        for h in range(int(rng.integers(0, 4))):
            o = endorse(o, f"relay{h}")
        for what in FIELDS:
            mutations += 1
            detected += not verify_provenance(mutate(o, what, rng))

    equal = 0
    synced = (Kind.FACT, Kind.INTENTION)
    for _ in range(200):
        src, dst = KnowledgeGraph("src", epoch_window=10_000), KnowledgeGraph("dst")
        now = acked = 0
        for _ in range(int(rng.integers(1, 80))):
            now += int(rng.integers(0, 4))
            kind = (Kind.FACT, Kind.INTENTION, Kind.EXPERIENCE)[rng.integers(3)]
            src.publish(kind, f"s{rng.integers(5)}", float(rng.integers(10)), now, int(rng.integers(1, 40)))
            if rng.random() < 0.3:
                src.expire(now)
            if rng.random() < 0.4:
                d = src.compute_delta(acked, "dst", synced)
                src.mark_sent("dst", d)
                dst.apply_delta(d, now, "src")
                acked = src.epoch
        src.expire(now)
        dst.apply_delta(src.compute_delta(acked, "dst", synced), now, "src")
        dst.expire(now)
        equal += dst.current_map(synced, now) == src.current_map(synced, now)

    ok = confluent == 50 and visible_expired == 0 and detected == mutations and equal == 200
    detail = (
        f"confluence {confluent}/50 object sets x 24 orders; expired visible {visible_expired} in 1e4 ops; "
        f"tamper detected {detected}/{mutations}; delta round-trip equal {equal}/200"
    )
    record(7, ok, detail, t0, 60)


# ---- 8. scheduler and routing oracles


def test_criterion_8_scheduler_and_routing():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    mac_ok = 0
    for _ in range(500):
        flows = [
            Flow(i, "a", "b", float(rng.random()), deadline=int(rng.integers(0, 500)), remaining_bits=int(rng.integers(0, 200_000)))
            for i in range(int(rng.integers(1, 5)))
        ]
        frame = ResourceFrame(0, int(rng.integers(1, 5)), int(rng.choice([100, 400, 1000])))
        got = frame_value(allocate_frame(frame, flows), flows, frame.block_bits, 0, 100_000)
        mac_ok += abs(got - best_assignment_value(frame, flows)) <= 1e-9 * max(1.0, abs(got))
    route_ok = 0
    modes = list(RoutingMode)
    for i in range(500):
        t, names = random_connected(rng, int(rng.integers(2, 9)))
        p = pkt(float(rng.random()))
        mode = modes[i % len(modes)]
        cong = {k: float(rng.random()) for k in t.links if rng.random() < 0.3}
        cost, nodes = best_path(p, t, names[0], names[-1], mode, congestion=cong)
        got = route(p, t, names[0], names[-1], mode, congestion=cong)
        route_ok += abs(path_cost(got, p, t, mode, congestion=cong) - cost) <= 1e-9 and tuple(nodes_of(got)) == nodes
    ok = mac_ok == 500 and route_ok == 500
    record(8, ok, f"frame allocation optimal {mac_ok}/500; routes optimal {route_ok}/500", t0, 60)


# ---- 9. safety envelope


def colliding_delay(world, step_now):
    """A (vehicle, delay) that puts the vehicle in another's cell at a future step."""
    for y in world.ids:
        spec = world.specs[y]
        for x in world.ids:
            if x == y:
                continue
            occupied = {(world.cell_at(x, s), s) for s in range(step_now + 1, world.H)} - {(None, s) for s in range(world.H)}
            for d in range(spec.max_delay(world.H, world.margin) + 1):
                for k, cell in enumerate(spec.path):
                    if (cell, spec.arrival + d + k) in occupied:
                        return y, d
    return None


def test_criterion_9_safety_envelope():
    t0 = time.perf_counter()
    collisions = vetoed = unchanged = natural = 0
    for seed in range(100):
        n = intersection_n(seed)
        k, w = run_world(build_intersection(n, seed, "full-kraken"))
        collisions += w.collisions
        natural += w.vetoes

        k, w = build_intersection(n, seed, "full-kraken").instantiate()
        while len(w.delays) < n and k.now < k.horizon:
            k.run_until(k.now + 1_000)
        pick = colliding_delay(w, w.step_no)
        if pick is None:
            continue
        vid, d = pick
        before = (w.state_hash(), k.trace_hash(), k.pending, k.now)
        action = Action.of(ActionKind.DECLARE_INTENTION, issued_at=k.now, motion=True, delay=d)
        try:
            act(k, w.name, vid, action, shadow_ticks=w.shadow_ticks(k, [(vid, d)]))
        except VetoedByShadow:
            vetoed += 1
            unchanged += (w.state_hash(), k.trace_hash(), k.pending, k.now) == before
    ok = collisions == 0 and vetoed == 100 and unchanged == vetoed
    detail = (
        f"collisions {collisions} over 100 seeds (=0); injected colliding commits vetoed {vetoed}/100, "
        f"parent state unchanged {unchanged}/{vetoed}; in-run vetoes {natural}"
    )
    record(9, ok, detail, t0, 120)


# ---- 10. goal governance


def test_criterion_10_goal_governance():
    t0 = time.perf_counter()
    frozen = RunConfig().with_overrides({"duals.frozen": True})
    toy_on = build_dual_toy(0, "full-kraken").run().report.goal_alignment_error
    toy_off = build_dual_toy(0, "full-kraken", frozen).run().report.goal_alignment_error
    on, off = [], []
    for seed in range(30):
        n = intersection_n(seed)
        on.append(build_intersection(n, seed, "full-kraken").run().report.goal_alignment_error)
        off.append(build_intersection(n, seed, "full-kraken", frozen).run().report.goal_alignment_error)
    toy_ratio = toy_on / toy_off if toy_off else float("inf")
    ix_ratio = float(np.mean(on)) / float(np.mean(off)) if np.mean(off) else float("inf")
    ok = toy_ratio <= 0.10 and ix_ratio <= 0.10
    detail = (
        f"dual toy error {toy_on:.4g} vs frozen {toy_off:.4g} (ratio {toy_ratio:.4f} <= 0.10); "
        f"intersection mean error {np.mean(on):.4g} vs frozen {np.mean(off):.4g} over 30 seeds (ratio {ix_ratio:.4f} <= 0.10)"
    )
    record(10, ok, detail, t0, 60)


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(
        ((k, v) for k, v in globals().items() if k.startswith("test_criterion_")),
        key=lambda kv: int(kv[0].split("_")[2]),
    ):
        try:
            fn()
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
