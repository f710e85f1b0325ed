"""Goal-oriented metrics computed after the fact from run records."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from krakensim.infra.network import Delivery, TxRecord
from krakensim.knowledge.intents import IntentDescriptor

NO_TRAFFIC = "no-traffic"


class InsufficientPoints(ValueError):
    pass


def total_bits(tx_log: Iterable[TxRecord]) -> int:
    return sum(r.bits for r in tx_log)


def relevant_bits_delivered(deliveries: Iterable[Delivery]) -> int:
    return sum(d.relevant_bits for d in deliveries if d.delivered)


def semantic_efficiency(tx_log: Sequence[TxRecord], deliveries: Sequence[Delivery]) -> float | str:
    """Relevant payload bits delivered over every bit put on a link."""
    total = total_bits(tx_log)
    if total == 0:
        return NO_TRAFFIC
    return relevant_bits_delivered(deliveries) / total


def goal_alignment_error(
    samples: Sequence[tuple[int, Mapping[str, float]]],
    intents: Sequence[IntentDescriptor],
    end: int | None = None,
) -> float:
    """Time-averaged weighted constraint violation.

    Each sample holds from its tick until the next one; the last holds until
    ``end``. Without ``end`` every sample gets equal weight.
    """
    if not samples:
        return 0.0
    cons = [c for it in intents for c in it.constraints]

    def penalty(measured):
        return sum(c.weight * c.violation(measured[c.metric]) for c in cons if c.metric in measured)

    if end is None:
        return float(sum(penalty(m) for _, m in samples) / len(samples))
    ticks = [t for t, _ in samples] + [end]
    span = ticks[-1] - ticks[0]
    if span <= 0:
        return float(penalty(samples[-1][1]))
    acc = sum(penalty(m) * (ticks[i + 1] - ticks[i]) for i, (_, m) in enumerate(samples))
    return float(acc / span)


def fit_slope(ns: Sequence[float], counts: Sequence[float]) -> float:
    if len(ns) < 4:
        raise InsufficientPoints(f"need at least 4 sizes for a slope fit, got {len(ns)}")
    if any(n <= 0 for n in ns) or any(c <= 0 for c in counts):
        raise ValueError("sizes and counts must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(counts, float)), 1)
    return float(slope)


@dataclass(frozen=True)
class ScalingReport:
    ns: tuple[int, ...]
    counts: dict[str, tuple[int, ...]]
    slopes: dict[str, float]

    def rows(self) -> list[dict[str, Any]]:
        return [{"n": n, **{m: c[i] for m, c in self.counts.items()}} for i, n in enumerate(self.ns)]

    def to_csv(self) -> str:
        return table_csv(self.rows()) + "".join(f"# slope {m} = {s:.6f}\n" for m, s in sorted(self.slopes.items()))


def scaling_report(ns: Sequence[int], counts: Mapping[str, Sequence[int]]) -> ScalingReport:
    slopes = {mode: fit_slope(ns, c) for mode, c in counts.items()}
    return ScalingReport(tuple(ns), {m: tuple(c) for m, c in counts.items()}, slopes)


@dataclass
class Recorder:
    """Per-run observations that are not visible in the link log."""

    distortions: list[float] = field(default_factory=list)
    alignment: list[tuple[int, dict[str, float]]] = field(default_factory=list)
    tasks: list[bool] = field(default_factory=list)
    rounds: list[int] = field(default_factory=list)
    escalations: int = 0
    sync_messages: int = 0
    extras: dict[str, Any] = field(default_factory=dict)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.9g}"
    if isinstance(v, dict):
        return ";".join(f"{k}:{_fmt(x)}" for k, x in sorted(v.items()))
    return str(v)


@dataclass
class MetricsReport:
    semantic_efficiency: float | str
    mean_semantic_distortion: float
    goal_alignment_error: float
    task_success_rate: float
    negotiation_rounds: dict[int, int]
    sync_messages: int
    total_bits: int
    relevant_bits_delivered: int
    extras: dict[str, Any] = field(default_factory=dict)
    wall_to_sim: float | None = None

    def fields(self) -> dict[str, Any]:
        out = {
            "semantic_efficiency": self.semantic_efficiency,
            "mean_semantic_distortion": self.mean_semantic_distortion,
            "goal_alignment_error": self.goal_alignment_error,
            "task_success_rate": self.task_success_rate,
            "negotiation_rounds": dict(self.negotiation_rounds),
            "sync_messages": self.sync_messages,
            "total_bits": self.total_bits,
            "relevant_bits_delivered": self.relevant_bits_delivered,
        }
        out.update(sorted(self.extras.items()))
        return out

    def to_block(self) -> str:
        # wall-clock ratio stays out so report files are bit-identical across runs
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.fields().items())


def build_report(
    tx_log: Sequence[TxRecord],
    deliveries: Sequence[Delivery],
    recorder: Recorder,
    intents: Sequence[IntentDescriptor] = (),
    end: int | None = None,
    warmup: int = 0,
) -> MetricsReport:
    samples = [s for s in recorder.alignment if s[0] >= warmup]
    dist = recorder.distortions
    return MetricsReport(
        semantic_efficiency=semantic_efficiency(tx_log, deliveries),
        mean_semantic_distortion=float(sum(dist) / len(dist)) if dist else 0.0,
        goal_alignment_error=goal_alignment_error(samples, intents, end),
        task_success_rate=float(sum(recorder.tasks) / len(recorder.tasks)) if recorder.tasks else 0.0,
        negotiation_rounds=dict(sorted(Counter(recorder.rounds).items())),
        sync_messages=recorder.sync_messages,
        total_bits=total_bits(tx_log),
        relevant_bits_delivered=relevant_bits_delivered(deliveries),
        extras=dict(recorder.extras),
    )


def table_csv(rows: Sequence[Mapping[str, Any]]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    for r in rows[1:]:
        cols.extend(k for k in r if k not in cols)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in cols])
    return buf.getvalue()
