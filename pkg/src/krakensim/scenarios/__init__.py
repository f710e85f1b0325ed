"""Scenario builders and a single entry point that runs any configured scenario."""

from krakensim.config import RunConfig
from krakensim.scenarios.base import InvalidCount, Mode, RunArtifacts
from krakensim.scenarios.dual_toy import DualToyScenario, build_dual_toy, centralized_optimum
from krakensim.scenarios.intersection import Geometry, IntersectionScenario, build_intersection
from krakensim.scenarios.sensing import SensingScenario, build_sensing
from krakensim.scenarios.sync_scaling import SyncScenario, build_sync
from krakensim.scenarios.xr import XRScenario, build_xr


def build(cfg: RunConfig):
    """Scenario object for a validated config."""
    name, mode, seed = cfg.scenario, cfg.mode, cfg.seed
    if name == "intersection":
        return build_intersection(cfg["intersection.n"], seed, mode, cfg)
    if name == "xr":
        return build_xr(seed, mode, cfg)
    if name == "sensing":
        return build_sensing(cfg["sensing.n"], seed, mode, cfg)
    if name == "dual-toy":
        return build_dual_toy(seed, mode, cfg)
    if name == "sync":
        return build_sync(cfg["sync.n"], seed, mode, cfg)
    raise ValueError(f"unknown scenario {name!r}")


def run_config(cfg: RunConfig) -> RunArtifacts:
    return build(cfg).run()


__all__ = [
    "DualToyScenario",
    "Geometry",
    "IntersectionScenario",
    "InvalidCount",
    "Mode",
    "RunArtifacts",
    "SensingScenario",
    "SyncScenario",
    "XRScenario",
    "build",
    "build_dual_toy",
    "build_intersection",
    "build_sensing",
    "build_sync",
    "build_xr",
    "centralized_optimum",
    "run_config",
]
