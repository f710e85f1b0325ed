from __future__ import annotations

from collections import Counter
from typing import Any, Hashable

from krakensim.knowledge.objects import canonical


class PriorModel:
    """Frequency tables over discretised ``context -> outcome`` history.

    Observations accumulate in a pending buffer and only reach the served
    tables on :meth:`refresh`, which honours the offline retraining interval.
    """

    def __init__(self, refresh_interval: int = 1_000_000):
        if refresh_interval < 1:
            raise ValueError("refresh_interval must be >= 1")
        self.refresh_interval = refresh_interval
        self.last_refresh: int | None = None
        self._tables: dict[Hashable, Counter] = {}
        self._pending: dict[Hashable, Counter] = {}

    def observe(self, context: Hashable, outcome: Any) -> None:
        self._pending.setdefault(context, Counter())[outcome] += 1

    def refresh(self, now: int, force: bool = False) -> bool:
        due = self.last_refresh is None or now - self.last_refresh >= self.refresh_interval
        if not (force or due):
            return False
        for ctx, counts in self._pending.items():
            self._tables.setdefault(ctx, Counter()).update(counts)
        self._pending = {}
        self.last_refresh = now
        return True

    def predict(self, context: Hashable) -> tuple[Any, float] | None:
        counts = self._tables.get(context)
        if not counts:
            return None
        total = sum(counts.values())
        outcome, n = min(counts.items(), key=lambda kv: (-kv[1], canonical(kv[0])))
        return outcome, n / total

    def __len__(self) -> int:
        return sum(sum(c.values()) for c in self._tables.values())
