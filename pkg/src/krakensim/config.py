"""Line-oriented ``key = value`` run configuration with dotted sections.

Every tunable default lives in :data:`SCHEMA` under exactly one key. Blank
lines and ``#`` comments are ignored; unknown keys and out-of-range values
are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

MODES = ("data-centric", "semantic", "full-kraken")
SCENARIOS = ("intersection", "xr", "sensing", "dual-toy", "sync")
U64_MAX = 2**64 - 1


class ConfigError(ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class UnknownKey(ConfigError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class InvalidValue(ConfigError):
    pass


@dataclass(frozen=True)
class Key:
    kind: type
    default: Any
    doc: str
    check: Callable[[Any], bool] | None = None
    rule: str = ""
    choices: tuple[str, ...] = ()


def _ge(lo):
    return (lambda v: v >= lo), f">= {lo}"


def _gt(lo):
    return (lambda v: v > lo), f"> {lo}"


def _unit():
    return (lambda v: 0.0 <= v <= 1.0), "in [0, 1]"


def _k(kind, default, doc, rule=None, choices=()):
    check, text = rule if rule else (None, "")
    return Key(kind, default, doc, check, text, tuple(choices))


SCHEMA: dict[str, Key] = {
    # run
    "run.scenario": _k(str, "intersection", "scenario to build", choices=SCENARIOS),
    "run.mode": _k(str, "full-kraken", "architecture mode", choices=MODES),
    "run.seed": _k(int, 0, "root seed for every RNG stream", ((lambda v: 0 <= v <= U64_MAX), "in [0, 2^64)")),
    "run.horizon": _k(int, 0, "simulated ticks; 0 = scenario default", _ge(0)),
    # planner / world model
    "planner.gamma": _k(float, 0.95, "discount factor", ((lambda v: 0.0 < v <= 1.0), "in (0, 1]")),
    "planner.horizon": _k(int, 3, "look-ahead steps H", _ge(1)),
    "planner.rollouts": _k(int, 32, "rollouts K in sampled mode", _ge(1)),
    "planner.mode": _k(str, "exact", "exact DP or sampled rollouts", choices=("exact", "sampled")),
    "world_model.smoothing": _k(float, 0.1, "Laplace smoothing of transition counts", _ge(0.0)),
    "world_model.memory": _k(int, 1024, "transition memory capacity", _ge(1)),
    "duals.eta": _k(float, 0.05, "dual step size", _gt(0.0)),
    "duals.frozen": _k(bool, False, "keep every dual at zero (baseline)"),
    "metrics.warmup_steps": _k(int, 5, "control steps excluded from alignment error", _ge(0)),
    # infrastructure
    "phy.theta_lo": _k(float, 0.3, "contribution score below which light protection is used", _unit()),
    "phy.theta_hi": _k(float, 0.7, "contribution score above which strong protection is used", _unit()),
    "mac.max_attempts": _k(int, 4, "retransmission attempt cap", _ge(1)),
    # negotiation
    "negotiation.r_max": _k(int, 8, "round bound before escalation", _ge(1)),
    "negotiation.round_latency_ms": _k(int, 10, "simulated cost of one round", _ge(0)),
    "negotiation.hold": _k(bool, True, "allow one-step hold when replanning fails"),
    # knowledge plane
    "sync.mode": _k(str, "hierarchical", "replica synchronisation topology", choices=("flat", "hierarchical")),
    "sync.k": _k(int, 4, "cluster size", _ge(2)),
    "sync.n": _k(int, 16, "replicas in the sync scenario", _ge(2)),
    "sync.object_bits": _k(int, 256, "bits per synchronised object", _ge(1)),
    "sync.header_bits": _k(int, 64, "bits per sync message header", _ge(0)),
    "sync.rounds": _k(int, 4, "synchronisation rounds in the sync scenario", _ge(1)),
    "sync.dirty": _k(float, 1.0, "per-round probability a replica changes after the first round", _unit()),
    "knowledge.divergence_fact": _k(float, 0.0, "delta threshold for facts", _ge(0.0)),
    "knowledge.divergence_model_summary": _k(float, 0.1, "delta threshold for model summaries", _ge(0.0)),
    # intersection
    "intersection.n": _k(int, 4, "vehicles (2..8)", ((lambda v: 2 <= v <= 8), "in [2, 8]")),
    "intersection.frame_bits": _k(int, 1_000_000, "raw sensor frame per step", _ge(1)),
    "intersection.intent_bits": _k(int, 1_000, "trajectory intention / proposal", _ge(1)),
    "intersection.descriptor_bits": _k(int, 150_000, "semantic occupancy descriptor per step", _ge(1)),
    "intersection.uplink_budget_bits": _k(int, 188_000, "per-vehicle uplink budget per step", _ge(1)),
    "intersection.lanes": _k(int, 2, "lanes per approach direction", _ge(1)),
    "intersection.margin_steps": _k(int, 1, "confidence margin claimed either side of each path step", _ge(0)),
    "intersection.platoon": _k(int, 4, "vehicles arriving in the same step", _ge(1)),
    "intersection.horizon_steps": _k(int, 64, "planning horizon in motion steps", _ge(8)),
    "intersection.deadline_slack": _k(int, 12, "steps allowed beyond the free-flow crossing time", _ge(0)),
    "intersection.link_loss": _k(float, 0.02, "vehicle-roadside link loss probability", ((lambda v: 0 <= v < 1), "in [0, 1)")),
    "intersection.step_ms": _k(int, 100, "motion step length", _ge(1)),
    # xr
    "xr.ticks": _k(int, 600, "rendered frames", _ge(1)),
    "xr.frame_bits": _k(int, 400_000, "raw frame", _ge(1)),
    "xr.descriptor_bits": _k(int, 20_000, "scene descriptor", _ge(1)),
    "xr.delta_bits": _k(int, 2_000, "pose/gaze delta", _ge(1)),
    "xr.gaze_keys": _k(int, 8, "gaze key alphabet", _ge(2)),
    "xr.gaze_period": _k(int, 4, "frames per gaze-key change", _ge(1)),
    "xr.prior": _k(bool, True, "shared prior predicts the next gaze key"),
    "xr.frame_ms": _k(int, 11, "frame interval", _ge(1)),
    "xr.poses": _k(int, 4, "head-pose key alphabet", _ge(1)),
    "xr.pose_change_prob": _k(float, 0.005, "per-frame probability the head pose changes", _unit()),
    "xr.saccade_prob": _k(float, 0.05, "probability a gaze change jumps off the cycle", _unit()),
    "xr.render_offset_ms": _k(int, 8, "render time after frame start", _ge(0)),
    "xr.link_loss": _k(float, 0.001, "headset-server link loss probability", ((lambda v: 0 <= v < 1), "in [0, 1)")),
    "xr.uplink_budget_bits": _k(int, 2_500, "per-delta uplink budget", _ge(1)),
    "xr.prior_refresh_frames": _k(int, 50, "frames between shared-prior refreshes", _ge(1)),
    "xr.warmup_frames": _k(int, 100, "frames before prior hit-rate and alignment are scored", _ge(0)),
    # sensing
    "sensing.n": _k(int, 4, "sensors (2..16)", ((lambda v: 2 <= v <= 16), "in [2, 16]")),
    "sensing.samples": _k(int, 8192, "samples per sensor", _ge(64)),
    "sensing.sample_bits": _k(int, 16, "bits per raw sample", _ge(1)),
    "sensing.event_bits": _k(int, 256, "bits per event object", _ge(1)),
    "sensing.batch": _k(int, 64, "samples per raw packet", _ge(1)),
    "sensing.anomalies": _k(int, 4, "injected anomaly bursts per sensor", _ge(0)),
    "sensing.burst": _k(int, 8, "samples per anomaly burst", _ge(1)),
    "sensing.magnitude_sigma": _k(float, 5.0, "anomaly offset in noise sigmas", _ge(0.0)),
    "sensing.threshold_sigma": _k(float, 4.0, "detector threshold in residual sigmas", _gt(0.0)),
    "sensing.run_len": _k(int, 2, "consecutive exceedances that raise an event", _ge(1)),
    "sensing.refractory": _k(int, 16, "samples after an event during which further runs merge into it", _ge(0)),
    "sensing.phase_bins": _k(int, 64, "world-model phase bins per period", _ge(1)),
    "sensing.period": _k(int, 64, "waveform period in samples", _ge(2)),
    "sensing.sample_us": _k(int, 1_000, "sampling interval in ticks", _ge(1)),
    "sensing.link_loss": _k(float, 0.01, "sensor-fusion link loss probability", ((lambda v: 0 <= v < 1), "in [0, 1)")),
    "sensing.uplink_budget_bits": _k(int, 320, "per-event uplink budget", _ge(1)),
    "sensing.quant_levels": _k(int, 64, "amplitude quantisation levels", _ge(2)),
    # dual toy
    "dual_toy.capacity": _k(float, 8.0, "shared link capacity", _ge(0.0)),
    "dual_toy.max_rate": _k(int, 10, "largest discrete rate", _ge(1)),
    "dual_toy.w1": _k(float, 1.0, "utility weight of agent 1", _gt(0.0)),
    "dual_toy.w2": _k(float, 2.0, "utility weight of agent 2", _gt(0.0)),
    "dual_toy.steps": _k(int, 2000, "dual updates", _ge(1)),
    # cli
    "sweep.workers": _k(int, 1, "parallel runs in a sweep", _ge(1)),
}

ALIASES = {"scenario": "run.scenario", "mode": "run.mode", "seed": "run.seed", "horizon": "run.horizon"}


def _coerce(key: str, raw: Any) -> Any:
    spec = SCHEMA[key]
    try:
        if spec.kind is bool:
            if isinstance(raw, bool):
                val = raw
            else:
                text = str(raw).strip().lower()
                if text not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(text)
                val = text in ("true", "1", "yes")
        elif spec.kind is int:
            if isinstance(raw, bool):
                raise ValueError(raw)
            val = int(str(raw).strip().replace("_", ""), 10)
        elif spec.kind is float:
            val = float(raw)
            if val != val or val in (float("inf"), float("-inf")):
                raise ValueError(raw)
        else:
            val = str(raw).strip()
    except (TypeError, ValueError):
        raise InvalidValue(f"{key}: expected {spec.kind.__name__}, got {raw!r}") from None
    if spec.choices and val not in spec.choices:
        raise InvalidValue(f"{key}: must be one of {', '.join(spec.choices)}, got {val!r}")
    if spec.check is not None and not spec.check(val):
        raise InvalidValue(f"{key}: must be {spec.rule}, got {val!r}")
    return val


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: {k: s.default for k, s in SCHEMA.items()})
    explicit: set[str] = field(default_factory=set)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str) -> Any:
        if key not in SCHEMA:
            raise UnknownKey(f"unknown config key: {key}")
        return self.values[key]

    def set(self, key: str, raw: Any) -> None:
        key = ALIASES.get(key, key)
        if key not in SCHEMA:
            raise UnknownKey(f"unknown config key: {key}")
        self.values[key] = _coerce(key, raw)
        self.explicit.add(key)

    def validate(self) -> "RunConfig":
        lo, hi = self.values["phy.theta_lo"], self.values["phy.theta_hi"]
        if lo > hi:
            raise InvalidValue(f"phy.theta_lo ({lo}) must not exceed phy.theta_hi ({hi})")
        return self

    def with_overrides(self, pairs: Mapping[str, Any]) -> "RunConfig":
        out = RunConfig(dict(self.values), set(self.explicit))
        for k, v in pairs.items():
            out.set(k, v)
        return out.validate()

    @property
    def scenario(self) -> str:
        return self.values["run.scenario"]

    @property
    def mode(self) -> str:
        return self.values["run.mode"]

    @property
    def seed(self) -> int:
        return self.values["run.seed"]

    def section(self, prefix: str) -> dict[str, Any]:
        p = prefix + "."
        return {k[len(p) :]: v for k, v in self.values.items() if k.startswith(p)}

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.values == other.values


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    seen: dict[str, int] = {}
    for no, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(no, f"expected 'key = value', got {body!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        if not key or any(c.isspace() for c in key):
            raise ParseError(no, f"malformed key {key!r}")
        key = ALIASES.get(key, key)
        if key in seen:
            raise ParseError(no, f"duplicate key {key} (first set on line {seen[key]})")
        seen[key] = no
        cfg.set(key, value)
    return cfg.validate()


def _emit_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_config(cfg: RunConfig) -> str:
    """Effective configuration, every key, in schema order."""
    return "".join(f"{k} = {_emit_value(cfg.values[k])}\n" for k in SCHEMA)


def describe_keys() -> str:
    lines = []
    for k, s in SCHEMA.items():
        extra = f" ({s.rule})" if s.rule else (f" ({'|'.join(s.choices)})" if s.choices else "")
        lines.append(f"{k} = {_emit_value(s.default)}  # {s.doc}{extra}")
    return "\n".join(lines) + "\n"
