from krakensim.knowledge.graph import (
    DEFAULT_DIVERGENCE,
    Delta,
    KnowledgeGraph,
    Rejection,
    RejectReason,
    Relation,
    UnknownEpoch,
    UpsertResult,
    UpsertStatus,
    precedence,
)
from krakensim.knowledge.intents import Constraint, IntentDescriptor, MissingMetric, alignment_penalty, update_duals
from krakensim.knowledge.objects import (
    Kind,
    KnowledgeObject,
    canonical,
    endorse,
    make_object,
    payload_distance,
    verify_provenance,
)
from krakensim.knowledge.prior import PriorModel
from krakensim.knowledge.sync import DEFAULT_SYNC_KINDS, Hierarchy, OrphanAgent, SyncFabric, SyncMode

__all__ = [
    "Constraint",
    "DEFAULT_DIVERGENCE",
    "DEFAULT_SYNC_KINDS",
    "Delta",
    "Hierarchy",
    "IntentDescriptor",
    "Kind",
    "KnowledgeGraph",
    "KnowledgeObject",
    "MissingMetric",
    "OrphanAgent",
    "PriorModel",
    "RejectReason",
    "Rejection",
    "Relation",
    "SyncFabric",
    "SyncMode",
    "UnknownEpoch",
    "UpsertResult",
    "UpsertStatus",
    "alignment_penalty",
    "canonical",
    "endorse",
    "make_object",
    "payload_distance",
    "precedence",
    "update_duals",
    "verify_provenance",
]
