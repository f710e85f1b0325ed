"""Discrete-event simulator for knowledge-centric multi-agent network management."""

from krakensim.config import RunConfig, emit_config, parse_config
from krakensim.scenarios import Mode, build, run_config
from krakensim.sim import Kernel

__version__ = "0.1.0"

__all__ = ["Kernel", "Mode", "RunConfig", "build", "emit_config", "parse_config", "run_config"]
