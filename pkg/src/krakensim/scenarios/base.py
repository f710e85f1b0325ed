from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any

from krakensim.config import RunConfig
from krakensim.infra.mac import RetransmitPolicy
from krakensim.infra.network import Network
from krakensim.infra.phy import ProtectionPolicy
from krakensim.infra.topology import Topology
from krakensim.metrics import MetricsReport, Recorder
from krakensim.sim import Kernel


class Mode(str, enum.Enum):
    DATA_CENTRIC = "data-centric"
    SEMANTIC = "semantic"
    FULL = "full-kraken"


class InvalidCount(ValueError):
    pass


@dataclass
class RunArtifacts:
    config: RunConfig
    report: MetricsReport
    trace: str
    negotiation: list[str] = field(default_factory=list)
    reasoning: list[str] = field(default_factory=list)
    rejections: list[str] = field(default_factory=list)
    snapshots: dict[str, dict] = field(default_factory=dict)
    sidecar: dict[str, Any] = field(default_factory=dict)


def stable_hash(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def make_network(topology: Topology, cfg: RunConfig) -> Network:
    return Network(
        topology,
        protection=ProtectionPolicy(theta_lo=cfg["phy.theta_lo"], theta_hi=cfg["phy.theta_hi"]),
        retransmit=RetransmitPolicy(max_attempts=cfg["mac.max_attempts"]),
    )


class ScenarioWorld:
    """Kernel entity holding one scenario's mutable state."""

    name = "scenario"

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.mode = Mode(cfg.mode)
        self.recorder = Recorder()
        self.agents: dict = {}
        self.in_shadow = False
        self.violations: list[str] = []

    def envelope_violations(self) -> list[str]:
        return list(self.violations)

    def state_hash(self) -> str:
        return stable_hash(self.state_view())

    def state_view(self) -> Any:  # pragma: no cover - overridden
        return {}


def common_extras(cfg: RunConfig, prefix: str) -> dict[str, Any]:
    """Message-size settings echoed into every report."""
    return {f"size.{k}": v for k, v in cfg.section(prefix).items() if k.endswith("_bits")}


def new_kernel(cfg: RunConfig, horizon: int) -> Kernel:
    return Kernel(seed=cfg.seed, horizon=horizon)
