"""Domain types and the per-timeslot energy model.

Energy is expressed in abstract units per timeslot. A node is *active* in a
slot when the solar input plus the residual charge strictly exceeds what its
hosted microservices would draw; an inactive node runs nothing and keeps
charging.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Tuple


class ContractError(ValueError):
    """Raised when a caller violates a documented precondition."""


@dataclass(frozen=True)
class NodeRef:
    node_id: str
    controller_address: str  # host:port
    service_address: str  # host:port

    def __post_init__(self):
        if self.controller_address == self.service_address:
            raise ContractError(
                f"node {self.node_id}: controller and service addresses must differ"
            )

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "controller_address": self.controller_address,
            "service_address": self.service_address,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NodeRef":
        return cls(
            node_id=str(data["node_id"]),
            controller_address=str(data["controller_address"]),
            service_address=str(data["service_address"]),
        )


@dataclass(frozen=True)
class EnergyState:
    """Battery of one node plus its per-microservice energy costs.

    ``compute_cost_per_ms`` is drawn by every hosted microservice each slot;
    ``network_cost_per_ms`` is the extra drawn by microservices hosted on
    behalf of another node.
    """

    battery_charge: float
    capacity: float
    solar_input: float = 0.0
    compute_cost_per_ms: float = 0.0
    network_cost_per_ms: float = 0.0

    def __post_init__(self):
        if not self.capacity > 0:
            raise ContractError("capacity must be positive")
        if self.compute_cost_per_ms < 0 or self.network_cost_per_ms < 0:
            raise ContractError("energy costs must be nonnegative")
        if not 0 <= self.battery_charge <= self.capacity:
            raise ContractError(
                f"battery_charge {self.battery_charge} outside [0, {self.capacity}]"
            )

    @property
    def percent(self) -> float:
        return 100.0 * self.battery_charge / self.capacity


@dataclass(frozen=True)
class LoadState:
    hosted_count: int = 0
    locally_initiated_count: int = 0

    def __post_init__(self):
        if self.hosted_count < 0 or self.locally_initiated_count < 0:
            raise ContractError("load counts must be nonnegative")
        if self.locally_initiated_count > self.hosted_count:
            raise ContractError("locally initiated count exceeds hosted count")


@dataclass(frozen=True)
class Horizon:
    num_slots: int
    slot_duration: float = 60.0  # seconds of scenario time per slot

    def __post_init__(self):
        if self.num_slots < 1:
            raise ContractError("horizon needs at least one slot")
        if not self.slot_duration > 0:
            raise ContractError("slot_duration must be positive")

    @property
    def slot_ms(self) -> int:
        return int(round(self.slot_duration * 1000))


@dataclass(frozen=True)
class WorkloadSpec:
    image_ref: str = "edgemesh/deterrent:latest"
    service_time_ms: float = 400.0
    input_period_ms: float = 1000.0
    count: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ContractError("workload count must be at least 1")
        if not self.service_time_ms > 0:
            raise ContractError("service_time_ms must be positive")
        if not self.input_period_ms > 0:
            raise ContractError("input_period_ms must be positive")


def activity_indicator(solar_input: float, prev_charge: float, consumption: float) -> int:
    """Return 1 when the node can run this slot, else 0.

    The comparison is inclusive on the inactive side: a node whose supply
    exactly equals its demand is switched off.
    """
    return 0 if solar_input + prev_charge - consumption <= 0 else 1


def slot_consumption(compute_cost: float, network_cost: float, hosted: int, local: int) -> float:
    """Energy drawn in one slot by ``hosted`` microservices, ``local`` of
    which were initiated on this node."""
    if local > hosted:
        raise ContractError(f"local ({local}) exceeds hosted ({hosted})")
    if local < 0 or hosted < 0:
        raise ContractError("counts must be nonnegative")
    return compute_cost * local + (compute_cost + network_cost) * (hosted - local)


def operative_time(indicators: Iterable[int]) -> int:
    return sum(int(x) for x in indicators)


def step_battery(
    state: EnergyState, solar_input: float, consumption: float
) -> Tuple[EnergyState, int]:
    """Advance one slot: charge, clamp at capacity, decide activity, consume.

    Returns the new state (with ``solar_input`` recorded) and the activity
    indicator for the slot.
    """
    charged = min(state.capacity, state.battery_charge + solar_input)
    active = activity_indicator(solar_input, state.battery_charge, consumption)
    final = charged - consumption if active else charged
    # charged - consumption can dip below 0 only when the clamp discarded
    # solar input the activity check counted
    final = min(state.capacity, max(0.0, final))
    return replace(state, battery_charge=final, solar_input=solar_input), active
