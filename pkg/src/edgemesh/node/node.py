"""A node: Service, Controller, registry and the resource-management loop.

:class:`Node` is transport-agnostic. The simulator builds nodes on a
:class:`~edgemesh.node.transport.LocalNetwork`; the live daemon builds one
on :class:`~edgemesh.node.http.HttpTransport` and serves it over HTTP.
"""

from __future__ import annotations

import logging
from typing import Callable, List, Optional

from ..core import NodeRef
from ..discovery import AddressSpace, Registry, discover_rpis
from ..policy import (
    EnergyAwarePolicy,
    ExecutionFlags,
    PeerUnreachable,
    PolicyParams,
    RemoteExecStatus,
    StartFailed,
    check_remote_execution,
)
from .adapters import EnergyAdapter, HostAdapter, InProcessRuntime, RuntimeAdapter
from .controller import MAX_WORKLOADS, Controller, WorkloadDefaults
from .errors import NodeError, Refused, RuntimeFailure
from .service import SensorSpec, Service

log = logging.getLogger(__name__)

CandidateFilter = Callable[[NodeRef, List[NodeRef]], List[NodeRef]]


class PeerQueries:
    """Discovery scan plus battery queries, as the policy sees them."""

    def __init__(self, node: "Node"):
        self.node = node
        self.queried: List[str] = []

    def discover(self) -> List[NodeRef]:
        node = self.node
        if not node.may_discover:
            return []
        found = discover_rpis(node.ref, node.space, node.transport.presence, workers=node.probe_workers)
        if node.candidate_filter is not None:
            found = node.candidate_filter(node.ref, found)
        return found

    def battery(self, peer: NodeRef) -> float:
        self.queried.append(peer.node_id)
        try:
            return float(self.node.transport.state(peer.service_address)["battery_pct"])
        except NodeError as exc:
            raise PeerUnreachable(str(exc)) from exc


class WorkloadControl:
    """Starts and stops this node's workload on any controller."""

    def __init__(self, node: "Node"):
        self.node = node
        self.self_ref = node.ref

    def start(self, target: NodeRef) -> None:
        node = self.node
        try:
            node.transport.start_workload(
                target.controller_address,
                node.workload.image_ref,
                node.ref.service_address,
                sensor_id=node.workload.sensor_id,
                actuator_id=node.workload.actuator_id,
                service_time_ms=node.workload.service_time_ms,
            )
        except (Refused, RuntimeFailure) as exc:
            raise StartFailed(str(exc)) from exc
        except NodeError as exc:
            raise PeerUnreachable(str(exc)) from exc
        if target.node_id != node.ref.node_id:
            # the start acknowledgement is the first contact with the remote side
            node.service.touch_contact()

    def stop(self, target: NodeRef) -> None:
        node = self.node
        node.transport.stop_workload(
            target.controller_address, node.workload.image_ref, node.ref.service_address
        )

    def remote_healthy(self) -> bool:
        node = self.node
        last = node.service.last_contact
        if last is None:
            return False
        status = RemoteExecStatus(healthy=True, last_contact=last)
        return check_remote_execution(status, node.params.remote_timeout * 1000.0, node.clock())


class Node:
    def __init__(
        self,
        ref: NodeRef,
        transport,
        scheduler,
        energy: EnergyAdapter,
        host: HostAdapter,
        params: PolicyParams = PolicyParams(),
        sensors: List[SensorSpec] = (),
        actuators: List[str] = (),
        workload: WorkloadDefaults = WorkloadDefaults(),
        image_ref: str = "edgemesh/deterrent:latest",
        space: Optional[AddressSpace] = None,
        runtime: Optional[RuntimeAdapter] = None,
        heartbeat_ms: int = 2000,
        max_workloads: int = MAX_WORKLOADS,
        candidate_filter: Optional[CandidateFilter] = None,
        may_discover: bool = True,
        probe_workers: int = 8,
    ):
        self.ref = ref
        self.transport = transport
        self.scheduler = scheduler
        self.clock = scheduler.now
        self.params = params
        self.workload = _Workload(image_ref, workload)
        self.space = space or AddressSpace(ref.service_address, "", [])
        self.candidate_filter = candidate_filter
        self.may_discover = may_discover
        self.probe_workers = probe_workers
        self.heartbeat_ms = heartbeat_ms

        self.service = Service(
            ref.node_id,
            ref.controller_address,
            ref.service_address,
            self.clock,
            energy,
            host,
            sensors=list(sensors),
            actuators=list(actuators),
            deliver=transport.push,
        )
        self.registry = Registry(self.clock, heartbeat_interval_ms=heartbeat_ms)
        self.runtime = runtime or InProcessRuntime(transport, scheduler)
        self.controller = Controller(
            ref.node_id,
            self.service,
            self.runtime,
            self.registry,
            self.clock,
            gamma=params.gamma,
            max_workloads=max_workloads,
            defaults=workload,
        )
        self.policy = EnergyAwarePolicy(params)
        self.peers = PeerQueries(self)
        self.control = WorkloadControl(self)

    @property
    def node_id(self) -> str:
        return self.ref.node_id

    @property
    def flags(self) -> ExecutionFlags:
        return self.policy.flags

    def policy_step(self, on_event=None) -> ExecutionFlags:
        battery = self.service.energy.percent()
        kwargs = {"on_event": on_event} if on_event is not None else {}
        return self.policy.step(battery, self.peers, self.control, **kwargs)

    def heartbeat_report(self) -> dict:
        return self.service.presence()

    def emit_heartbeat(self, targets: Optional[List[NodeRef]] = None) -> int:
        """Send a presence report to every peer controller; returns deliveries."""
        report = self.heartbeat_report()
        sent = 0
        for peer in targets if targets is not None else self.space.enumerated:
            if peer.node_id == self.node_id:
                continue
            try:
                self.transport.heartbeat(peer.controller_address, report)
                sent += 1
            except NodeError:
                pass
        return sent

    def sample(self, sensor_id: str):
        return self.service.publish(sensor_id)

    def power_off(self) -> None:
        """Lose all run-time state, as when the battery cuts out."""
        self.controller.halt_all()
        self.service.reset()
        self.policy.reset()


class _Workload:
    def __init__(self, image_ref: str, defaults: WorkloadDefaults):
        self.image_ref = image_ref
        self.sensor_id = defaults.sensor_id
        self.actuator_id = defaults.actuator_id
        self.service_time_ms = defaults.service_time_ms

