from krakensim.agents.agent import (
    Action,
    ActionKind,
    Escalation,
    GenerativeAgent,
    Level,
    NoParent,
    PermissionDenied,
    Scope,
    Verdict,
    VetoedByShadow,
    act,
    check_permission,
    escalate,
    is_safety_critical,
    shadow_validate,
)
from krakensim.agents.perception import Quantizer, SemanticState, UnknownObservationSchema, perceive
from krakensim.agents.planner import (
    DEFAULT_GAMMA,
    EmptyCandidates,
    PlanMode,
    PlanResult,
    argmax_first,
    lagrangian_reward,
    plan,
)
from krakensim.agents.world_model import Transition, WorldModel

__all__ = [
    "Action",
    "ActionKind",
    "DEFAULT_GAMMA",
    "EmptyCandidates",
    "Escalation",
    "GenerativeAgent",
    "Level",
    "NoParent",
    "PermissionDenied",
    "PlanMode",
    "PlanResult",
    "Quantizer",
    "Scope",
    "SemanticState",
    "Transition",
    "UnknownObservationSchema",
    "Verdict",
    "VetoedByShadow",
    "WorldModel",
    "act",
    "argmax_first",
    "check_permission",
    "escalate",
    "is_safety_critical",
    "lagrangian_reward",
    "perceive",
    "plan",
    "shadow_validate",
]
