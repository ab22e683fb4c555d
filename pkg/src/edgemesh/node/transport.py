"""In-process transport used by the simulator.

Nodes register their Controller and Service under their addresses. Control
calls (start, stop, state, presence, subscribe) are synchronous. Data-plane
messages (sensor pushes and actuation commands) are delivered through the
scheduler after a per-hop delay: a fixed latency plus the payload's transfer
time at the link bandwidth. Messages between a node and itself are
immediate.
"""

from __future__ import annotations

import itertools
from typing import Callable, Dict, Optional, Set

from .errors import NodeError, Unreachable

DEFAULT_LATENCY_MS = 5.0
DEFAULT_BANDWIDTH_BPS = 2_000_000  # 2 Mbps uplink/downlink


class LocalNetwork:
    def __init__(
        self,
        scheduler,
        latency_ms: float = DEFAULT_LATENCY_MS,
        bandwidth_bps: float = DEFAULT_BANDWIDTH_BPS,
    ):
        self.scheduler = scheduler
        self.latency_ms = latency_ms
        self.bandwidth_bps = bandwidth_bps
        self.controllers: Dict[str, object] = {}
        self.services: Dict[str, object] = {}
        self.callbacks: Dict[str, Callable[[dict], dict]] = {}
        self.owner: Dict[str, str] = {}
        self.down: Set[str] = set()
        self.disabled: Set[str] = set()
        self._cb_ids = itertools.count(1)

    def register(self, node_id: str, controller_address: str, controller, service_address: str, service) -> None:
        self.controllers[controller_address] = controller
        self.services[service_address] = service
        self.owner[controller_address] = node_id
        self.owner[service_address] = node_id

    def set_up(self, node_id: str, up: bool) -> None:
        if up:
            self.down.discard(node_id)
        else:
            self.down.add(node_id)
            for endpoint in [e for e, n in self.owner.items() if n == node_id and e in self.callbacks]:
                del self.callbacks[endpoint]

    def disable_endpoint(self, address: str) -> None:
        self.disabled.add(address)

    def enable_endpoint(self, address: str) -> None:
        self.disabled.discard(address)

    def reachable(self, address: str) -> bool:
        node = self.owner.get(address)
        return node is not None and node not in self.down and address not in self.disabled

    def delay_ms(self, origin: Optional[str], address: str, payload_bytes: int = 0) -> float:
        if origin is not None and self.owner.get(address) == origin:
            return 0.0
        return self.latency_ms + payload_bytes * 8 * 1000.0 / self.bandwidth_bps

    def view(self, node_id: Optional[str] = None) -> "LocalTransport":
        return LocalTransport(self, node_id)


class LocalTransport:
    def __init__(self, network: LocalNetwork, origin: Optional[str]):
        self.net = network
        self.origin = origin

    def _controller(self, address: str):
        if not self.net.reachable(address) or address not in self.net.controllers:
            raise Unreachable(f"controller {address} unreachable")
        return self.net.controllers[address]

    def _service(self, address: str):
        if not self.net.reachable(address) or address not in self.net.services:
            raise Unreachable(f"service {address} unreachable")
        return self.net.services[address]

    # controller
    def start_workload(self, controller: str, image_ref: str, source_service: str, **opts) -> dict:
        return self._controller(controller).start(image_ref, source_service, **opts).to_dict()

    def stop_workload(self, controller: str, image_ref: str, source_service: str) -> dict:
        return self._controller(controller).stop(image_ref, source_service)

    def registry(self, controller: str) -> list:
        return self._controller(controller).registry.snapshot()

    def heartbeat(self, controller: str, report: dict) -> None:
        self._controller(controller).registry.update(report)

    # service
    def state(self, service: str) -> dict:
        return self._service(service).state().to_dict()

    def presence(self, service: str) -> dict:
        return self._service(service).presence()

    def sensor_pull(self, service: str, sensor_id: str) -> dict:
        return self._service(service).pull(sensor_id).to_dict()

    def subscribe(self, service: str, sensor_id: str, callback: str) -> str:
        return self._service(service).subscribe(sensor_id, callback)

    def unsubscribe(self, service: str, sub_id: str) -> dict:
        return self._service(service).unsubscribe(sub_id)

    def actuate(self, service: str, actuator_id: str, command: dict) -> dict:
        target = self._service(service)
        delay = self.net.delay_ms(self.origin, service)

        def arrive():
            if self.net.reachable(service):
                try:
                    target.actuate(actuator_id, command)
                except NodeError:
                    pass

        self.net.scheduler.call_later(delay, arrive)
        return {"actuator_id": actuator_id, "queued": True}

    # callbacks
    def bind_callback(self, handler: Callable[[dict], dict]) -> str:
        endpoint = f"inproc://{self.origin}/cb-{next(self.net._cb_ids)}"
        self.net.callbacks[endpoint] = handler
        self.net.owner[endpoint] = self.origin
        return endpoint

    def unbind_callback(self, endpoint: str) -> None:
        self.net.callbacks.pop(endpoint, None)

    def push(self, callback: str, payload: dict) -> dict:
        handler = self.net.callbacks.get(callback)
        if handler is None or not self.net.reachable(callback):
            raise Unreachable(f"callback {callback} unreachable")
        delay = self.net.delay_ms(self.origin, callback, int(payload.get("payload_bytes", 0)))

        def arrive():
            live = self.net.callbacks.get(callback)
            if live is not None and self.net.reachable(callback):
                try:
                    live(payload)
                except NodeError:
                    pass

        self.net.scheduler.call_later(delay, arrive)
        return {"queued": True}

    def close(self) -> None:
        pass
