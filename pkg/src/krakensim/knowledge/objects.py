"""Knowledge objects and their provenance chain.

Each provenance hop stores ``(author, digest)`` where the digest is a 64-bit
BLAKE2b over ``author | canonical content | previous digest``. ``seal`` pins
the head of the chain so that dropping the final hop is detectable. This is
tamper evidence against accidental or naive mutation, not a signature scheme.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, replace
from typing import Any

import numpy as np


class Kind(str, enum.Enum):
    FACT = "fact"
    EXPERIENCE = "experience"
    MODEL_SUMMARY = "model-summary"
    INTENTION = "intention"
    REASONING_TRACE = "reasoning-trace"


def freeze(value: Any) -> Any:
    """Convert a payload into an immutable, canonically comparable form."""
    if value is None or isinstance(value, (str, int, float)):
        return value
    if isinstance(value, np.ndarray):
        return tuple(freeze(v) for v in value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (list, tuple)):
        return tuple(freeze(v) for v in value)
    if isinstance(value, dict):
        return tuple(sorted((str(k), freeze(v)) for k, v in value.items()))
    return value


def canonical(value: Any) -> str:
    return json.dumps(freeze(value), sort_keys=True, separators=(",", ":"), default=repr)


def _numeric_vector(value: Any) -> np.ndarray | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return np.array([float(value)])
    if isinstance(value, tuple) and value and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return np.array(value, dtype=float)
    return None


def payload_distance(a: Any, b: Any) -> float:
    """Normalised divergence between two payloads.

    Numeric scalars and equal-length numeric vectors use
    ``||a - b|| / max(1, ||a||, ||b||)``; anything else is 0 when equal and
    infinite otherwise.
    """
    a, b = freeze(a), freeze(b)
    if a == b:
        return 0.0
    va, vb = _numeric_vector(a), _numeric_vector(b)
    if va is None or vb is None or va.shape != vb.shape:
        return math.inf
    scale = max(1.0, float(np.linalg.norm(va)), float(np.linalg.norm(vb)))
    return float(np.linalg.norm(va - vb)) / scale


def _hop_digest(author: str, content: str, prior: int) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(author.encode())
    h.update(b"|")
    h.update(content.encode())
    h.update(b"|")
    h.update(prior.to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class KnowledgeObject:
    id: str
    kind: Kind
    subject: str
    payload: Any
    confidence: float
    valid_from: int
    valid_until: int
    origin: str
    version: int
    provenance: tuple[tuple[str, int], ...] = ()
    seal: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "payload", freeze(self.payload))
        object.__setattr__(self, "provenance", tuple(tuple(h) for h in self.provenance))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    @property
    def key(self) -> tuple[str, Kind]:
        return (self.subject, self.kind)

    def content(self) -> str:
        return canonical(
            [
                self.kind.value,
                self.subject,
                self.payload,
                self.confidence,
                self.valid_from,
                self.valid_until,
                self.origin,
                self.version,
            ]
        )

    def valid_at(self, now: int) -> bool:
        return self.valid_from <= now < self.valid_until

    def expired_at(self, now: int) -> bool:
        return self.valid_until <= now


def make_object(
    kind: Kind | str,
    subject: str,
    payload: Any,
    confidence: float,
    valid_from: int,
    valid_until: int,
    origin: str,
    version: int,
    id: str | None = None,
) -> KnowledgeObject:
    """Build an object whose provenance starts with a hop signed by ``origin``."""
    kind = Kind(kind)
    obj = KnowledgeObject(
        id=id or f"{origin}/{subject}/{kind.value}/{version}",
        kind=kind,
        subject=subject,
        payload=payload,
        confidence=confidence,
        valid_from=valid_from,
        valid_until=valid_until,
        origin=origin,
        version=version,
    )
    return endorse(obj, origin)


def endorse(obj: KnowledgeObject, author: str) -> KnowledgeObject:
    prior = obj.provenance[-1][1] if obj.provenance else 0
    d = _hop_digest(author, obj.content(), prior)
    return replace(obj, provenance=obj.provenance + ((author, d),), seal=d)


def verify_provenance(obj: KnowledgeObject) -> bool:
    """Recompute the digest chain; true iff every hop and the seal match."""
    if not obj.provenance or obj.provenance[0][0] != obj.origin:
        return False
    content = obj.content()
    prior = 0
    for author, digest in obj.provenance:
        expect = _hop_digest(str(author), content, prior)
        if digest != expect:
            return False
        prior = expect
    return prior == obj.seal
