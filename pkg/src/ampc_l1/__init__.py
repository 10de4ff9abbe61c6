"""Algebraic MPC with L1 adaptive augmentation for an LTV booster re-entry model."""

from .ampc import AmpcConfig, AmpcState, ampc_control, ampc_update
from .l1 import L1Config, L1State
from .refmpc import RefMpcConfig
from .simkit import RunLog, Scenario, case_scenario, run, run_batch
from .vehicle import LtvPlant, ReferenceProfile, load_plant, plant_at

__version__ = "0.1.0"

__all__ = [
    "AmpcConfig",
    "AmpcState",
    "L1Config",
    "L1State",
    "LtvPlant",
    "RefMpcConfig",
    "ReferenceProfile",
    "RunLog",
    "Scenario",
    "ampc_control",
    "ampc_update",
    "case_scenario",
    "load_plant",
    "plant_at",
    "run",
    "run_batch",
]
