from ppcc.protocols.parties import KeyMaterial, ProtocolAbort, ProtocolConfig, StalledRound
from ppcc.protocols.runner import run, run_facility, run_service
from ppcc.protocols.schedules import (
    DemandSchedule,
    EstimationFunction,
    KnownCount,
    Masked,
    ServiceActionSchedule,
    UsageSchedule,
)

__all__ = [
    "DemandSchedule",
    "EstimationFunction",
    "KeyMaterial",
    "KnownCount",
    "Masked",
    "ProtocolAbort",
    "ProtocolConfig",
    "ServiceActionSchedule",
    "StalledRound",
    "UsageSchedule",
    "run",
    "run_facility",
    "run_service",
]
