"""Replica of the knowledge graph held by one agent (or aggregator)."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from krakensim.knowledge.objects import (
    Kind,
    KnowledgeObject,
    make_object,
    payload_distance,
    verify_provenance,
)
from krakensim.knowledge.prior import PriorModel

Key = tuple[str, Kind]

DEFAULT_DIVERGENCE = {
    Kind.FACT: 0.0,
    Kind.EXPERIENCE: 0.0,
    Kind.MODEL_SUMMARY: 0.1,
    Kind.INTENTION: 0.0,
    Kind.REASONING_TRACE: 0.0,
}


class UnknownEpoch(LookupError):
    pass


class UpsertStatus(str, enum.Enum):
    ACCEPTED = "accepted"
    SUPERSEDED = "superseded"
    REJECTED = "rejected"


class RejectReason(str, enum.Enum):
    INVALID_PROVENANCE = "InvalidProvenance"
    MALFORMED_VALIDITY = "MalformedValidity"
    REPLAY = "Replay"
    EXPIRED = "Expired"
    UNGROUNDED = "Ungrounded"


@dataclass(frozen=True)
class UpsertResult:
    status: UpsertStatus
    reason: RejectReason | None = None

    @property
    def accepted(self) -> bool:
        return self.status is UpsertStatus.ACCEPTED


@dataclass(frozen=True)
class Rejection:
    tick: int
    subject: str
    kind: Kind
    reason: str

    def line(self) -> str:
        return f"{self.tick},{self.subject},{self.kind.value},{self.reason}"


@dataclass(frozen=True)
class Relation:
    subject: str
    label: str
    target: str
    valid_from: int
    valid_until: int


@dataclass(frozen=True)
class Delta:
    from_epoch: int
    to_epoch: int
    upserts: tuple[KnowledgeObject, ...] = ()
    # (key, id, origin, version) of each retired object
    expirations: tuple[tuple[Key, str, str, int], ...] = ()

    def __bool__(self) -> bool:
        return bool(self.upserts or self.expirations)

    def __len__(self) -> int:
        return len(self.upserts) + len(self.expirations)


def precedence(obj: KnowledgeObject, now: int) -> tuple:
    """Strict total order used for conflict resolution (larger wins).

    Unexpired beats expired, then confidence, then later ``valid_from``,
    then higher origin id; version and id only break exact-copy ties.
    """
    return (not obj.expired_at(now), obj.confidence, obj.valid_from, obj.origin, obj.version, obj.id)


class KnowledgeGraph:
    def __init__(self, owner: str = "", history_len: int = 16, epoch_window: int = 4096):
        self.owner = owner
        self.history_len = history_len
        self.epoch_window = epoch_window
        self.entities: set[str] = set()
        self.current: dict[Key, KnowledgeObject] = {}
        self.history: dict[Key, deque[KnowledgeObject]] = {}
        self.relations: list[Relation] = []
        self.rejections: list[Rejection] = []
        self.epoch = 0
        # (epoch, key) per change; bounded so old epochs become unknown
        self._changelog: deque[tuple[int, Key]] = deque()
        self._base_epoch = 0
        self._versions: dict[tuple[str, Kind, str], int] = {}
        # per peer: last object known to be held by that peer, per key
        self.acked: dict[str, dict[Key, KnowledgeObject]] = {}

    # -- bookkeeping -----------------------------------------------------

    def _log_change(self, key: Key) -> None:
        self.epoch += 1
        self._changelog.append((self.epoch, key))
        while len(self._changelog) > self.epoch_window:
            old_epoch, _ = self._changelog.popleft()
            self._base_epoch = old_epoch

    def _to_history(self, obj: KnowledgeObject) -> None:
        h = self.history.setdefault(obj.key, deque(maxlen=self.history_len))
        h.append(obj)

    def _reject(self, obj: KnowledgeObject, now: int, reason: RejectReason) -> UpsertResult:
        self.rejections.append(Rejection(now, obj.subject, obj.kind, reason.value))
        return UpsertResult(UpsertStatus.REJECTED, reason)

    # -- writes ------------------------------------------------------------

    def upsert(self, obj: KnowledgeObject, now: int) -> UpsertResult:
        if obj.valid_from >= obj.valid_until:
            return self._reject(obj, now, RejectReason.MALFORMED_VALIDITY)
        if not verify_provenance(obj):
            return self._reject(obj, now, RejectReason.INVALID_PROVENANCE)
        vkey = (obj.subject, obj.kind, obj.origin)
        seen = self._versions.get(vkey)
        if obj.expired_at(now):
            stale = seen is not None and obj.version <= seen
            return self._reject(obj, now, RejectReason.REPLAY if stale else RejectReason.EXPIRED)
        if seen is None or obj.version > seen:
            self._versions[vkey] = obj.version
        self.entities.add(obj.subject)
        cur = self.current.get(obj.key)
        if cur is not None and cur == obj:
            return UpsertResult(UpsertStatus.ACCEPTED)
        if cur is None or precedence(obj, now) > precedence(cur, now):
            if cur is not None:
                self._to_history(cur)
            self.current[obj.key] = obj
            self._log_change(obj.key)
            return UpsertResult(UpsertStatus.ACCEPTED)
        self._to_history(obj)
        return UpsertResult(UpsertStatus.SUPERSEDED)

    def publish(
        self,
        kind: Kind | str,
        subject: str,
        payload: Any,
        now: int,
        validity: int,
        confidence: float = 1.0,
    ) -> KnowledgeObject:
        """Author a new object as :attr:`owner` with the next version number."""
        kind = Kind(kind)
        version = self._versions.get((subject, kind, self.owner), 0) + 1
        obj = make_object(kind, subject, payload, confidence, now, now + validity, self.owner, version)
        self.upsert(obj, now)
        return obj

    def relate(self, subject: str, label: str, target: str, valid_from: int, valid_until: int) -> None:
        self.entities.update((subject, target))
        self.relations.append(Relation(subject, label, target, valid_from, valid_until))

    def expire(self, now: int) -> int:
        gone = [k for k, o in self.current.items() if o.expired_at(now)]
        for k in sorted(gone, key=lambda k: (k[0], k[1].value)):
            self._to_history(self.current.pop(k))
            self._log_change(k)
        return len(gone)

    # -- reads -------------------------------------------------------------

    def query_fast(self, subject: str, kind: Kind | str, now: int) -> KnowledgeObject | None:
        obj = self.current.get((subject, Kind(kind)))
        if obj is None or not obj.valid_at(now):
            return None
        return obj

    def query_prior(
        self,
        prior: PriorModel,
        subject: str,
        context: Any,
        now: int,
        ground_tolerance: float = 0.0,
        validity: int = 100_000,
        author: str = "prior-model",
    ) -> list[KnowledgeObject]:
        """Slow path: wrap the prior's prediction, keep it only if grounded.

        A prediction whose payload is further than ``ground_tolerance`` from
        a current fact on the same subject is dropped and logged.
        """
        pred = prior.predict(context)
        if pred is None:
            return []
        outcome, conf = pred
        obj = make_object(
            Kind.MODEL_SUMMARY,
            subject,
            outcome,
            conf,
            now,
            now + validity,
            origin=author,
            version=now,
            id=f"{author}/{subject}/{now}",
        )
        fact = self.query_fast(subject, Kind.FACT, now)
        if fact is not None and payload_distance(obj.payload, fact.payload) > ground_tolerance:
            self.rejections.append(Rejection(now, subject, Kind.MODEL_SUMMARY, RejectReason.UNGROUNDED.value))
            return []
        return [obj]

    def query(
        self,
        subject: str,
        kind: Kind | str,
        now: int,
        prior: PriorModel | None = None,
        context: Any = None,
        tau_slow: float = 0.5,
        ground_tolerance: float = 0.0,
    ) -> list[KnowledgeObject]:
        """Two-tier lookup: the graph first, the prior only if that is not enough."""
        obj = self.query_fast(subject, kind, now)
        if obj is not None and obj.confidence >= tau_slow:
            return [obj]
        if prior is None:
            return [obj] if obj is not None else []
        slow = self.query_prior(prior, subject, context, now, ground_tolerance)
        return slow or ([obj] if obj is not None else [])

    def current_map(self, kinds: Iterable[Kind] | None = None, now: int | None = None) -> dict[Key, KnowledgeObject]:
        ks = None if kinds is None else {Kind(k) for k in kinds}
        return {
            k: o
            for k, o in self.current.items()
            if (ks is None or k[1] in ks) and (now is None or not o.expired_at(now))
        }

    # -- deltas ------------------------------------------------------------

    def changed_since(self, epoch: int) -> list[Key]:
        if epoch > self.epoch or epoch < self._base_epoch:
            raise UnknownEpoch(f"epoch {epoch} outside retained window [{self._base_epoch}, {self.epoch}]")
        seen: dict[Key, None] = {}
        for e, k in self._changelog:
            if e > epoch:
                seen[k] = None
        return list(seen)

    def compute_delta(
        self,
        peer_epoch: int,
        peer: str | None = None,
        kinds: Iterable[Kind] | None = None,
        thresholds: Mapping[Kind, float] | None = None,
        origin: str | None = None,
    ) -> Delta:
        """Changes since ``peer_epoch`` that the peer still needs.

        An upsert is included unless the peer already acknowledged the same
        object, or its payload diverges from the acknowledged one by less
        than the per-kind threshold. Expirations are always included.
        ``origin`` restricts upserts to objects authored by that agent.
        """
        ks = None if kinds is None else {Kind(k) for k in kinds}
        th = {**DEFAULT_DIVERGENCE, **(thresholds or {})}
        acked = self.acked.get(peer, {}) if peer is not None else {}
        ups: list[KnowledgeObject] = []
        exps: list[tuple[Key, str, str, int]] = []
        for key in self.changed_since(peer_epoch):
            if ks is not None and key[1] not in ks:
                continue
            obj = self.current.get(key)
            if obj is None:
                last = self.history.get(key)
                gone = last[-1] if last else None
                exps.append((key, gone.id, gone.origin, gone.version) if gone else (key, "", "", 0))
                continue
            if origin is not None and obj.origin != origin:
                continue
            prev = acked.get(key)
            if prev is not None:
                if prev.id == obj.id and prev.seal == obj.seal:
                    continue
                if payload_distance(obj.payload, prev.payload) < th[key[1]]:
                    continue
            ups.append(obj)
        return Delta(peer_epoch, self.epoch, tuple(ups), tuple(exps))

    def mark_sent(self, peer: str, delta: Delta) -> None:
        acked = self.acked.setdefault(peer, {})
        for obj in delta.upserts:
            acked[obj.key] = obj

    def apply_delta(self, delta: Delta, now: int, sender: str | None = None) -> int:
        """Merge a peer's delta; returns how many entries changed local state."""
        changed = 0
        acked = self.acked.setdefault(sender, {}) if sender is not None else None
        for obj in delta.upserts:
            before = self.epoch
            res = self.upsert(obj, now)
            if res.reason is RejectReason.EXPIRED:
                # the sender moved past our copy, and its newer version lapsed in flight
                cur = self.current.get(obj.key)
                if cur is not None and cur.origin == obj.origin and cur.version < obj.version:
                    self._to_history(self.current.pop(obj.key))
                    self._log_change(obj.key)
            changed += self.epoch != before
            if acked is not None:
                acked[obj.key] = obj
        for key, obj_id, origin, version in delta.expirations:
            cur = self.current.get(key)
            superseded = cur is not None and cur.origin == origin and cur.version <= version
            if cur is not None and (cur.id == obj_id or superseded or cur.expired_at(now)):
                self._to_history(self.current.pop(key))
                self._log_change(key)
                changed += 1
        return changed

    # -- export ------------------------------------------------------------

    def snapshot(self) -> dict:
        """Structured tree of entities and current objects (all fields)."""
        objs = []
        for (subject, kind), o in sorted(self.current.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
            objs.append(
                {
                    "id": o.id,
                    "kind": kind.value,
                    "subject": subject,
                    "payload": o.payload,
                    "confidence": o.confidence,
                    "valid_from": o.valid_from,
                    "valid_until": o.valid_until,
                    "origin": o.origin,
                    "version": o.version,
                    "provenance": [[a, f"{d:016x}"] for a, d in o.provenance],
                }
            )
        return {"owner": self.owner, "epoch": self.epoch, "entities": sorted(self.entities), "objects": objs}

    def rejection_lines(self) -> list[str]:
        return [r.line() for r in self.rejections]
