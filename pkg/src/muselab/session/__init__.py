"""Timed collection sessions: planning, the phase state machine, device
simulation, persistence, and dataset export.
"""

from .machine import Phase, SessionConfig, SessionMachine, TrialRecord
from .plan import PlanBlock, SessionPlan, build_plan
from .simulate import SimulationProfile, simulate_device, simulate_study, synthetic_library
from .store import SessionEngine, export_session_bundle, load_bundle

__all__ = [
    "Phase",
    "PlanBlock",
    "SessionConfig",
    "SessionEngine",
    "SessionMachine",
    "SessionPlan",
    "SimulationProfile",
    "TrialRecord",
    "build_plan",
    "export_session_bundle",
    "load_bundle",
    "simulate_device",
    "simulate_study",
    "synthetic_library",
]
