from __future__ import annotations

from collections import deque
from typing import NamedTuple, Sequence

import numpy as np


class Transition(NamedTuple):
    state: int
    action: int
    next_state: int
    reward: float
    costs: tuple[float, ...]


class WorldModel:
    """Tabular transition/reward/cost statistics with Laplace smoothing.

    ``P(s'|s,a) = (n + smoothing) / (sum n + |S| * smoothing)`` for visited
    pairs; unvisited pairs fall back to uniform. Costs are tracked per named
    constraint metric so the planner can price them.
    """

    def __init__(
        self,
        n_states: int,
        n_actions: int,
        metrics: Sequence[str] = (),
        smoothing: float = 0.1,
        memory: int = 1024,
    ):
        if n_states < 1 or n_actions < 1:
            raise ValueError("need at least one state and one action")
        if smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        self.n_states = n_states
        self.n_actions = n_actions
        self.metrics = tuple(metrics)
        self.smoothing = smoothing
        self.counts = np.zeros((n_states, n_actions, n_states), dtype=np.int64)
        self.visits = np.zeros((n_states, n_actions), dtype=np.int64)
        self.reward_mean = np.zeros((n_states, n_actions))
        self._reward_m2 = np.zeros((n_states, n_actions))
        self.cost_mean = np.zeros((len(self.metrics), n_states, n_actions))
        self.memory: deque[Transition] = deque(maxlen=memory)
        self._exact: np.ndarray | None = None

    @classmethod
    def exact(cls, P, U, G=None, metrics: Sequence[str] = ()) -> "WorldModel":
        """A model that serves the given tables verbatim (for oracle tests and scripted scenarios)."""
        P = np.asarray(P, dtype=float)
        S, A, _ = P.shape
        m = cls(S, A, metrics, smoothing=0.0)
        m._exact = P.copy()
        m.reward_mean = np.asarray(U, dtype=float).copy()
        if G is not None:
            m.cost_mean = np.asarray(G, dtype=float).reshape(len(metrics), S, A).copy()
        m.visits[:] = 1
        return m

    def _check(self, s: int, a: int) -> None:
        if not (0 <= s < self.n_states and 0 <= a < self.n_actions):
            raise ValueError(f"state/action out of alphabet: ({s}, {a})")

    def learn(self, s: int, a: int, s_next: int, reward: float, costs: Sequence[float] = ()) -> None:
        self._check(s, a)
        if not 0 <= s_next < self.n_states:
            raise ValueError(f"next state out of alphabet: {s_next}")
        if len(costs) != len(self.metrics):
            raise ValueError(f"expected {len(self.metrics)} cost values, got {len(costs)}")
        self.counts[s, a, s_next] += 1
        self.visits[s, a] += 1
        n = self.visits[s, a]
        d = reward - self.reward_mean[s, a]
        self.reward_mean[s, a] += d / n
        self._reward_m2[s, a] += d * (reward - self.reward_mean[s, a])
        for j, c in enumerate(costs):
            self.cost_mean[j, s, a] += (c - self.cost_mean[j, s, a]) / n
        self.memory.append(Transition(s, a, s_next, float(reward), tuple(float(c) for c in costs)))

    def reward_var(self, s: int, a: int) -> float:
        n = self.visits[s, a]
        return float(self._reward_m2[s, a] / (n - 1)) if n > 1 else 0.0

    def transition(self, s: int, a: int) -> np.ndarray:
        self._check(s, a)
        if self._exact is not None:
            return self._exact[s, a].copy()
        n = self.counts[s, a]
        total = n.sum()
        if total == 0:
            return np.full(self.n_states, 1.0 / self.n_states)
        lam = self.smoothing
        return (n + lam) / (total + self.n_states * lam)

    def tables(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``P[S, A, S]``, mean utility ``U[S, A]``, mean costs ``G[J, S, A]``."""
        if self._exact is not None:
            P = self._exact.copy()
        else:
            n = self.counts.astype(float)
            total = n.sum(axis=2, keepdims=True)
            lam = self.smoothing
            with np.errstate(invalid="ignore", divide="ignore"):
                P = (n + lam) / (total + self.n_states * lam)
            P[np.broadcast_to(total == 0, P.shape)] = 1.0 / self.n_states
        return P, self.reward_mean.copy(), self.cost_mean.copy()
