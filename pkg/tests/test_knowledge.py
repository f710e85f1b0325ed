import itertools
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from krakensim.knowledge.graph import KnowledgeGraph, RejectReason, UnknownEpoch, UpsertStatus
from krakensim.knowledge.intents import Constraint, IntentDescriptor, MissingMetric, alignment_penalty, update_duals
from krakensim.knowledge.objects import Kind, endorse, make_object, payload_distance, verify_provenance
from krakensim.knowledge.prior import PriorModel
from krakensim.knowledge.sync import Hierarchy, OrphanAgent, SyncFabric, SyncMode


def obj(conf=0.5, vf=0, vu=100, origin="a", version=1, payload=1.0, subject="x", kind=Kind.FACT):
    return make_object(kind, subject, payload, conf, vf, vu, origin, version)


# ---- conflict resolution


def test_higher_confidence_wins_and_loser_goes_to_history():
    g = KnowledgeGraph()
    g.upsert(obj(0.4, origin="a"), 5)
    assert g.upsert(obj(0.9, origin="b"), 5).status is UpsertStatus.ACCEPTED
    assert g.query_fast("x", Kind.FACT, 5).confidence == 0.9
    assert g.history[("x", Kind.FACT)][-1].confidence == 0.4


def test_lower_confidence_superseded():
    g = KnowledgeGraph()
    g.upsert(obj(0.9, origin="a"), 5)
    assert g.upsert(obj(0.4, origin="b"), 5).status is UpsertStatus.SUPERSEDED
    assert g.query_fast("x", Kind.FACT, 5).confidence == 0.9


def test_valid_beats_expired_incumbent():
    g = KnowledgeGraph()
    g.upsert(obj(0.99, vf=0, vu=10, origin="a"), 0)
    assert g.upsert(obj(0.2, vf=5, vu=50, origin="b"), 20).accepted
    assert g.query_fast("x", Kind.FACT, 20).origin == "b"


def test_recency_then_origin_break_ties():
    g = KnowledgeGraph()
    g.upsert(obj(0.5, vf=0, origin="a"), 1)
    g.upsert(obj(0.5, vf=1, origin="a", version=2), 1)
    assert g.current[("x", Kind.FACT)].valid_from == 1
    g.upsert(obj(0.5, vf=1, origin="z"), 1)
    assert g.current[("x", Kind.FACT)].origin == "z"


def competitors(rng):
    out = []
    for i in range(4):
        out.append(
            obj(
                conf=float(rng.choice([0.3, 0.5, 0.5, 0.8])),
                vf=int(rng.choice([0, 2])),
                vu=int(rng.choice([5, 100])),
                origin=f"o{rng.integers(3)}",
                version=i + 1,
                payload=float(i),
            )
        )
    return out


@given(st.integers(0, 2**32 - 1))
def test_confluence_over_all_orders(seed):
    objs = competitors(np.random.default_rng(seed))
    now = 3
    winners = set()
    for perm in itertools.permutations(objs):
        g = KnowledgeGraph()
        for o in perm:
            g.upsert(o, now)
        cur = g.current.get(("x", Kind.FACT))
        winners.add(cur.id if cur else None)
    assert len(winners) == 1


# ---- validity and expiry


def test_half_open_validity():
    g = KnowledgeGraph()
    g.upsert(obj(vf=10, vu=20), 10)
    assert g.query_fast("x", Kind.FACT, 15) is not None
    assert g.query_fast("x", Kind.FACT, 20) is None


def test_expire_boundary_and_fresh_reupsert():
    g = KnowledgeGraph()
    g.upsert(obj(vf=0, vu=10), 0)
    assert g.expire(10) == 1
    assert g.query_fast("x", Kind.FACT, 10) is None
    assert g.upsert(obj(vf=10, vu=30, version=2), 10).accepted


def test_replay_of_expired_object_rejected():
    g = KnowledgeGraph()
    o = obj(vf=0, vu=10)
    g.upsert(o, 0)
    g.expire(10)
    r = g.upsert(o, 11)
    assert r.status is UpsertStatus.REJECTED and r.reason is RejectReason.REPLAY
    assert g.rejection_lines()[-1] == "11,x,fact,Replay"


def test_malformed_validity_rejected():
    g = KnowledgeGraph()
    assert g.upsert(obj(vf=10, vu=10), 0).reason is RejectReason.MALFORMED_VALIDITY


@given(st.integers(0, 2**32 - 1))
def test_expired_objects_never_visible(seed):
    rng = np.random.default_rng(seed)
    g = KnowledgeGraph(epoch_window=100_000)
    now = 0
    versions = {}
    for _ in range(400):
        now += int(rng.integers(0, 3))
        subj = f"s{rng.integers(4)}"
        op = rng.random()
        if op < 0.6:
            versions[subj] = versions.get(subj, 0) + 1
            vf = now - int(rng.integers(0, 5))
            g.upsert(obj(float(rng.random()), vf, vf + int(rng.integers(1, 10)), "a", versions[subj], subject=subj), now)
        elif op < 0.8:
            g.expire(now)
        for s in ("s0", "s1", "s2", "s3"):
            hit = g.query_fast(s, Kind.FACT, now)
            assert hit is None or hit.valid_from <= now < hit.valid_until
        for o in g.current_map(now=now).values():
            assert o.valid_until > now


# ---- provenance


def test_provenance_roundtrip_and_tamper():
    o = endorse(obj(), "relay")
    assert verify_provenance(o)
    assert not verify_provenance(replace(o, payload=2.0))
    assert not verify_provenance(replace(o, provenance=o.provenance[:-1]))
    g = KnowledgeGraph()
    assert g.upsert(replace(o, confidence=0.99), 0).reason is RejectReason.INVALID_PROVENANCE


FIELDS = ["payload", "confidence", "valid_from", "valid_until", "origin", "version", "subject", "drop", "swap", "digest", "author"]


def mutate(o, what, rng):
    if what == "payload":
        return replace(o, payload=o.payload + 1.0)
    if what == "confidence":
        return replace(o, confidence=(o.confidence + 0.25) % 1.0)
    if what == "valid_from":
        return replace(o, valid_from=o.valid_from - 1)
    if what == "valid_until":
        return replace(o, valid_until=o.valid_until + 1)
    if what == "origin":
        return replace(o, origin=o.origin + "'")
    if what == "version":
        return replace(o, version=o.version + 1)
    if what == "subject":
        return replace(o, subject=o.subject + "'")
    hops = list(o.provenance)
    i = int(rng.integers(len(hops)))
    if what == "drop":
        del hops[i]
    elif what == "swap":
        if len(hops) < 2:
            del hops[i]
        else:
            j = (i + 1) % len(hops)
            hops[i], hops[j] = hops[j], hops[i]
    elif what == "digest":
        a, d = hops[i]
        hops[i] = (a, d ^ (1 << int(rng.integers(64))))
    else:
        a, d = hops[i]
        hops[i] = (a + "'", d)
    return replace(o, provenance=tuple(hops))


@given(st.integers(0, 2**32 - 1), st.integers(0, 3), st.sampled_from(FIELDS))
def test_every_single_mutation_detected(seed, extra_hops, what):
    rng = np.random.default_rng(seed)
    o = obj(float(rng.random()), payload=float(rng.normal()))
    for h in range(extra_hops):
        o = endorse(o, f"relay{h}")
    assert verify_provenance(o)
    assert not verify_provenance(mutate(o, what, rng))


# ---- prior model and slow path


def test_prior_frequency_and_refresh():
    p = PriorModel(refresh_interval=100)
    assert p.predict("c") is None
    for _ in range(9):
        p.observe("c", "A")
    p.observe("c", "B")
    assert p.predict("c") is None  # nothing served before the first refresh
    assert p.refresh(0)
    assert p.predict("c") == ("A", pytest.approx(0.9))
    p.observe("c", "B")
    assert not p.refresh(50)
    assert p.refresh(100)


def test_slow_path_grounding():
    p = PriorModel()
    p.observe("ctx", 3.0)
    p.refresh(0)
    g = KnowledgeGraph()
    got = g.query_prior(p, "x", "ctx", 0)
    assert got[0].kind is Kind.MODEL_SUMMARY and got[0].provenance[0][0] == "prior-model"
    g.upsert(obj(payload=9.0, vf=0, vu=100), 0)
    assert g.query_prior(p, "x", "ctx", 1) == []
    assert g.rejection_lines()[-1] == "1,x,model-summary,Ungrounded"
    assert KnowledgeGraph().query_prior(PriorModel(), "x", "ctx", 0) == []


def test_two_tier_query_prefers_confident_fact():
    p = PriorModel()
    p.observe("ctx", 1.0)
    p.refresh(0)
    g = KnowledgeGraph()
    g.upsert(obj(conf=0.9, payload=1.0), 0)
    assert g.query("x", Kind.FACT, 1, p, "ctx")[0].kind is Kind.FACT
    g2 = KnowledgeGraph()
    g2.upsert(obj(conf=0.2, payload=1.0), 0)
    assert g2.query("x", Kind.FACT, 1, p, "ctx")[0].kind is Kind.MODEL_SUMMARY


# ---- deltas


def test_empty_delta_and_unknown_epoch():
    g = KnowledgeGraph(epoch_window=2)
    assert not g.compute_delta(0)
    for v in range(1, 5):
        g.publish(Kind.FACT, "x", v, 0, 100)
    with pytest.raises(UnknownEpoch):
        g.compute_delta(0)


def test_divergence_threshold():
    g = KnowledgeGraph("a")
    g.publish(Kind.MODEL_SUMMARY, "m", 1.0, 0, 100)
    d = g.compute_delta(0, "peer")
    g.mark_sent("peer", d)
    e = g.epoch
    g.publish(Kind.MODEL_SUMMARY, "m", 1.05, 1, 100)
    assert not g.compute_delta(e, "peer")
    g.publish(Kind.MODEL_SUMMARY, "m", 1.2, 2, 100)
    assert len(g.compute_delta(e, "peer")) == 1


def test_payload_distance():
    assert payload_distance((3.0, 4.0), (3.0, 4.0)) == 0.0
    assert payload_distance((0.0, 0.0), (3.0, 4.0)) == pytest.approx(1.0)
    assert payload_distance("a", "b") == float("inf")


@given(st.integers(0, 2**32 - 1))
def test_delta_roundtrip_replica_equality(seed):
    rng = np.random.default_rng(seed)
    src, dst = KnowledgeGraph("src", epoch_window=10_000), KnowledgeGraph("dst")
    synced = (Kind.FACT, Kind.INTENTION)
    now, acked = 0, 0
    for _ in range(int(rng.integers(1, 60))):
        now += int(rng.integers(0, 4))
        kind = [Kind.FACT, Kind.INTENTION, Kind.EXPERIENCE][rng.integers(3)]
        src.publish(kind, f"s{rng.integers(5)}", float(rng.integers(10)), now, int(rng.integers(1, 40)))
        if rng.random() < 0.3:
            src.expire(now)
        if rng.random() < 0.4:
            d = src.compute_delta(acked, "dst", synced)
            src.mark_sent("dst", d)
            dst.apply_delta(d, now, "src")
            acked = src.epoch
    src.expire(now)
    d = src.compute_delta(acked, "dst", synced)
    dst.apply_delta(d, now, "src")
    dst.expire(now)
    assert dst.current_map(synced, now) == src.current_map(synced, now)


def test_delta_composability():
    g = KnowledgeGraph("a")
    for v in range(3):
        g.publish(Kind.FACT, f"s{v}", v, 0, 100)
    mid = g.epoch
    g.publish(Kind.FACT, "s0", 10, 1, 100)
    g.publish(Kind.FACT, "s3", 3, 1, 100)
    one, two = KnowledgeGraph("b"), KnowledgeGraph("c")
    one.apply_delta(g.compute_delta(0), 2)
    one.apply_delta(g.compute_delta(mid), 2)
    two.apply_delta(g.compute_delta(0), 2)
    assert one.current == two.current


# ---- synchronisation


def fabric(n, k=None, dirty=None):
    ids = [f"n{i}" for i in range(n)]
    reps = {i: KnowledgeGraph(i) for i in ids}
    for i in dirty if dirty is not None else ids:
        reps[i].publish(Kind.FACT, i, 1.0, 0, 1000)
    h = Hierarchy.build(ids, k) if k else None
    return reps, SyncFabric(reps, h)


def test_flat_message_count():
    reps, f = fabric(4)
    assert f.sync_round("flat", 1) == 12


def test_hierarchical_single_cluster():
    reps, f = fabric(4, k=4)
    assert f.sync_round("hierarchical", 1) == 8


@pytest.mark.parametrize("mode,k", [("flat", None), ("hierarchical", 2), ("hierarchical", 3)])
def test_replicas_converge(mode, k):
    reps, f = fabric(9, k=k)
    f.sync_round(mode, 1)
    views = [g.current_map((Kind.FACT,)) for g in reps.values()]
    assert all(v == views[0] for v in views) and len(views[0]) == 9
    assert f.sync_round(mode, 2) == 0


def test_intention_visible_after_sync_but_not_before():
    reps, f = fabric(3, dirty=[])
    reps["n0"].publish(Kind.INTENTION, "n0", {"go": 1}, 0, 100)
    assert reps["n2"].query_fast("n0", Kind.INTENTION, 1) is None
    f.sync_round("flat", 1)
    assert reps["n2"].query_fast("n0", Kind.INTENTION, 1) is not None


def test_orphan_agent():
    reps = {i: KnowledgeGraph(i) for i in ("a", "b", "c")}
    with pytest.raises(OrphanAgent):
        SyncFabric(reps, Hierarchy((("a", "b"),), 2))
    with pytest.raises(OrphanAgent):
        SyncFabric(reps).sync_round(SyncMode.HIERARCHICAL, 0)


# ---- intents and duals


def test_dual_update_arithmetic():
    c = Constraint("m", 1.0, lam=0.5, eta=0.1)
    it = IntentDescriptor("i", [("u", 1.0)], [c])
    assert update_duals(it, {"m": 3.0}) == {"m": pytest.approx(0.7)}
    c.lam = 0.1
    assert update_duals(it, {"m": -4.0}) == {"m": 0.0}
    with pytest.raises(MissingMetric):
        update_duals(it, {})


def test_intent_validation():
    with pytest.raises(ValueError):
        IntentDescriptor("i", [])
    with pytest.raises(ValueError):
        Constraint("m", 0.0, eta=0.0)
    it = IntentDescriptor("i", [("u", 1.0)], [Constraint("m", 1.0, weight=2.0)])
    assert alignment_penalty(it, {"m": 1.5}) == pytest.approx(1.0)


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=200), st.floats(0.001, 1))
def test_duals_never_negative(measurements, eta):
    it = IntentDescriptor("i", [("u", 1.0)], [Constraint("m", 0.0, eta=eta)])
    for m in measurements:
        assert update_duals(it, {"m": m})["m"] >= 0.0
