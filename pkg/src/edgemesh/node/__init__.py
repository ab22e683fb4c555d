"""Per-node daemon: Controller, Service, adapters and wire protocol."""

from .adapters import (
    EngineRuntime,
    InProcessRuntime,
    ProbeEnergy,
    SimulatedHost,
    SubprocessRuntime,
    VirtualBattery,
    WorkloadArgs,
)
from .controller import Controller, WorkloadDefaults, WorkloadHandle
from .errors import (
    NodeError,
    NoSampleYet,
    NotFound,
    Refused,
    RuntimeFailure,
    UnknownActuator,
    UnknownSensor,
    UnknownSubscription,
    Unreachable,
)
from .node import Node
from .service import NodeState, Sample, SensorSpec, Service, Subscription
from .transport import LocalNetwork, LocalTransport

__all__ = [
    "Controller",
    "EngineRuntime",
    "InProcessRuntime",
    "LocalNetwork",
    "LocalTransport",
    "Node",
    "NodeError",
    "NodeState",
    "NoSampleYet",
    "NotFound",
    "ProbeEnergy",
    "Refused",
    "RuntimeFailure",
    "Sample",
    "SensorSpec",
    "Service",
    "SimulatedHost",
    "SubprocessRuntime",
    "Subscription",
    "UnknownActuator",
    "UnknownSensor",
    "UnknownSubscription",
    "Unreachable",
    "VirtualBattery",
    "WorkloadArgs",
    "WorkloadDefaults",
    "WorkloadHandle",
]
