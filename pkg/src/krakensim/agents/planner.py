"""Constrained look-ahead planning over a tabular world model.

Each candidate's score is the expected discounted Lagrangian return

    sum_t gamma^t [ U(s_t, a_t) - sum_j lam_j * max(0, G_j(s_t, a_t) - c_j) ]

where the first action is the candidate and later actions follow the
model-greedy policy. ``exact`` mode computes the expectation by dynamic
programming; ``sampled`` mode averages K rollouts driven by a caller-supplied
generator, which gives an unbiased estimate of the same quantity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from krakensim import kernels
from krakensim.agents.world_model import WorldModel
from krakensim.knowledge.intents import Constraint, IntentDescriptor

DEFAULT_GAMMA = 0.95
TIE_TOL = 1e-12


class EmptyCandidates(ValueError):
    pass


class PlanMode(str, enum.Enum):
    EXACT = "exact"
    SAMPLED = "sampled"


@dataclass(frozen=True)
class PlanResult:
    index: int
    score: float
    scores: tuple[float, ...]

    def top(self, n: int = 3) -> list[tuple[int, float]]:
        order = sorted(range(len(self.scores)), key=lambda i: (-self.scores[i], i))
        return [(i, self.scores[i]) for i in order[:n]]


def _constraints(intents: Iterable[IntentDescriptor | Constraint]) -> list[Constraint]:
    out = []
    for it in intents:
        out.extend(it.constraints if isinstance(it, IntentDescriptor) else [it])
    return out


def lagrangian_reward(model: WorldModel, intents: Iterable[IntentDescriptor | Constraint] = ()) -> np.ndarray:
    """Per-step penalised reward table ``R[S, A]``."""
    _, U, G = model.tables()
    R = U.copy()
    for c in _constraints(intents):
        if c.lam == 0.0:
            continue
        try:
            j = model.metrics.index(c.metric)
        except ValueError:
            raise KeyError(f"world model has no cost metric {c.metric!r}") from None
        R -= c.lam * np.maximum(0.0, G[j] - c.bound)
    return R


def argmax_first(scores: Sequence[float], tol: float = TIE_TOL) -> int:
    """Index of the maximum; near-ties go to the earliest entry."""
    best = max(scores)
    for i, v in enumerate(scores):
        if v >= best - tol:
            return i
    return 0  # pragma: no cover


def plan(
    model: WorldModel,
    state: int,
    candidates: Sequence[int],
    intents: Iterable[IntentDescriptor | Constraint] = (),
    K: int = 32,
    H: int = 3,
    gamma: float = DEFAULT_GAMMA,
    mode: PlanMode | str = PlanMode.EXACT,
    rng: np.random.Generator | None = None,
) -> PlanResult:
    """Score ``candidates`` (model action indices) from ``state`` and pick the best."""
    if not candidates:
        raise EmptyCandidates("no candidate actions to plan over")
    if K < 1 or H < 1:
        raise ValueError("need K >= 1 and H >= 1")
    mode = PlanMode(mode)
    P, _, _ = model.tables()
    R = lagrangian_reward(model, intents)
    Q = kernels.backup(P, R, gamma, H)
    if mode is PlanMode.EXACT:
        scores = [float(Q[H - 1, state, a]) for a in candidates]
    else:
        if rng is None:
            raise ValueError("sampled planning needs a dedicated generator")
        policy = np.argmax(Q[: max(H - 1, 1)], axis=2).astype(np.int64)
        cumP = np.cumsum(P, axis=2)
        cumP[..., -1] = 1.0
        u = rng.random((K, H))
        # common random numbers across candidates keep comparisons low-variance
        scores = [float(kernels.rollouts(cumP, R, policy, state, a, u, gamma).mean()) for a in candidates]
    i = argmax_first(scores)
    return PlanResult(i, scores[i], tuple(scores))
