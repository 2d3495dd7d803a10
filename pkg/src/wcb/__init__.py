"""Volunteer crowdsourcing simulator: skill-cover task assignment with
potential-aware retention, participation dividends and baseline pay schemes."""

from .model import (
    AllocationMap,
    ContingencyLedger,
    SkillCatalog,
    Task,
    Volunteer,
    VolunteerLedger,
    validate_world,
)
from .sim import SimulationConfig, run_experiment, run_round

__version__ = "0.1.0"

__all__ = [
    "AllocationMap",
    "ContingencyLedger",
    "SkillCatalog",
    "SimulationConfig",
    "Task",
    "Volunteer",
    "VolunteerLedger",
    "run_experiment",
    "run_round",
    "validate_world",
]
