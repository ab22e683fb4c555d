"""Energy-aware workload placement for solar-powered edge nodes."""

from .core import (
    ContractError,
    EnergyState,
    Horizon,
    LoadState,
    NodeRef,
    WorkloadSpec,
    activity_indicator,
    operative_time,
    slot_consumption,
    step_battery,
)

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "EnergyState",
    "Horizon",
    "LoadState",
    "NodeRef",
    "WorkloadSpec",
    "activity_indicator",
    "operative_time",
    "slot_consumption",
    "step_battery",
]
