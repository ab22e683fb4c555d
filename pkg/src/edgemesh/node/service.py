"""The per-node Service: state monitor, presence signal, sensors and actuators.

The Service owns the node's peripherals. Workloads, wherever they run, pull
or subscribe to its sensors and send actuation commands back to it. Every
acknowledged push and every actuation received counts as contact with the
workload, which is what the source's policy uses to judge remote health.
"""

from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from .adapters import EnergyAdapter, HostAdapter
from .errors import BadRequest, NodeError, NoSampleYet, UnknownActuator, UnknownSensor, UnknownSubscription

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SensorSpec:
    sensor_id: str
    period_ms: int = 1000
    payload_bytes: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "SensorSpec":
        return cls(
            sensor_id=str(data["id"]),
            period_ms=int(data.get("period_ms", 1000)),
            payload_bytes=int(data.get("payload_bytes", 0)),
        )


@dataclass(frozen=True)
class Sample:
    sensor_id: str
    seq: int
    timestamp: int
    payload_bytes: int = 0

    def to_dict(self) -> dict:
        return {
            "sensor_id": self.sensor_id,
            "seq": self.seq,
            "timestamp": self.timestamp,
            "payload_bytes": self.payload_bytes,
        }


@dataclass(frozen=True)
class Subscription:
    sub_id: str
    sensor_id: str
    subscriber: str
    mode: str = "push"


@dataclass
class NodeState:
    battery_pct: float
    cpu_pct: float
    mem_pct: float
    location: Optional[str] = None
    bandwidth: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "battery_pct": self.battery_pct,
            "cpu_pct": self.cpu_pct,
            "mem_pct": self.mem_pct,
            "location": self.location,
            "bandwidth": self.bandwidth,
        }


@dataclass
class IOStats:
    """Counters the simulator drains once per slot."""

    generated: int = 0
    processed: int = 0
    proc_times_ms: List[int] = field(default_factory=list)


# deliver(callback, payload) -> ack body; raises NodeError on failure
Deliver = Callable[[str, dict], dict]


class Service:
    def __init__(
        self,
        node_id: str,
        controller_address: str,
        service_address: str,
        clock: Callable[[], int],
        energy: EnergyAdapter,
        host: HostAdapter,
        sensors: List[SensorSpec] = (),
        actuators: List[str] = (),
        deliver: Optional[Deliver] = None,
        location: Optional[str] = None,
        bandwidth: Optional[dict] = None,
    ):
        self.node_id = node_id
        self.controller_address = controller_address
        self.service_address = service_address
        self.clock = clock
        self.energy = energy
        self.host = host
        self.location = location
        self.bandwidth = bandwidth
        self.deliver = deliver
        # wired by the daemon: () -> list of running handle descriptors
        self.exec_status_source: Callable[[], List[dict]] = lambda: []

        self._lock = threading.RLock()
        self.sensors: Dict[str, SensorSpec] = {s.sensor_id: s for s in sensors}
        self._seq = {s: 0 for s in self.sensors}
        self._latest: Dict[str, Sample] = {}
        self._subs: Dict[str, Subscription] = {}
        self._sub_ids = itertools.count(1)
        self.actuation_log: Dict[str, List[dict]] = {a: [] for a in actuators}
        self.last_contact: Optional[int] = None
        self.stats = IOStats()
        self.dropped_deliveries = 0

    # state monitor
    def workload_count(self) -> int:
        return len(self.exec_status_source())

    def state(self) -> NodeState:
        return NodeState(
            battery_pct=round(self.energy.percent(), 6),
            cpu_pct=self.host.cpu_pct(self.workload_count()),
            mem_pct=self.host.mem_pct(self.workload_count()),
            location=self.location,
            bandwidth=self.bandwidth,
        )

    # presence signal
    def presence(self) -> dict:
        return {
            "alive": True,
            "node_id": self.node_id,
            "controller_address": self.controller_address,
            "service_address": self.service_address,
            "timestamp": self.clock(),
            "exec_status": self.exec_status_source(),
        }

    # sensor manager
    def publish(self, sensor_id: str) -> Sample:
        """Take a new sample and push it to every subscriber."""
        with self._lock:
            spec = self._sensor(sensor_id)
            self._seq[sensor_id] += 1
            sample = Sample(sensor_id, self._seq[sensor_id], self.clock(), spec.payload_bytes)
            self._latest[sensor_id] = sample
            self.stats.generated += 1
            targets = [s for s in self._subs.values() if s.sensor_id == sensor_id]
        payload = {**sample.to_dict(), "source": self.service_address}
        for sub in targets:
            self._push(sub, payload)
        return sample

    def _push(self, sub: Subscription, payload: dict) -> None:
        if self.deliver is None:
            return
        for attempt in range(2):
            with self._lock:
                if sub.sub_id not in self._subs:
                    return
            try:
                self.deliver(sub.subscriber, {**payload, "subscription": sub.sub_id})
            except NodeError as exc:
                log.debug("push to %s failed (attempt %d): %s", sub.subscriber, attempt + 1, exc)
                continue
            self.touch_contact()
            return
        with self._lock:
            self.dropped_deliveries += 1

    def pull(self, sensor_id: str) -> Sample:
        with self._lock:
            self._sensor(sensor_id)
            sample = self._latest.get(sensor_id)
            if sample is None:
                raise NoSampleYet(f"sensor {sensor_id} has not produced a sample yet")
            return sample

    def subscribe(self, sensor_id: str, callback: str) -> str:
        if not callback or not isinstance(callback, str):
            raise BadRequest("callback endpoint missing")
        with self._lock:
            self._sensor(sensor_id)
            for sub in self._subs.values():
                if sub.sensor_id == sensor_id and sub.subscriber == callback:
                    return sub.sub_id
            sub_id = f"sub-{next(self._sub_ids)}"
            self._subs[sub_id] = Subscription(sub_id, sensor_id, callback)
            return sub_id

    def unsubscribe(self, sub_id: str) -> dict:
        with self._lock:
            if self._subs.pop(sub_id, None) is None:
                raise UnknownSubscription(f"no subscription {sub_id}")
        return {"unsubscribed": sub_id}

    def drop_subscriber(self, callback: str) -> int:
        """Forget every subscription of ``callback``; returns how many."""
        with self._lock:
            ids = [k for k, s in self._subs.items() if s.subscriber == callback]
            for k in ids:
                del self._subs[k]
        return len(ids)

    def subscriptions(self) -> List[Subscription]:
        with self._lock:
            return list(self._subs.values())

    def _sensor(self, sensor_id: str) -> SensorSpec:
        try:
            return self.sensors[sensor_id]
        except KeyError:
            raise UnknownSensor(f"no sensor {sensor_id} on {self.node_id}") from None

    # actuator manager
    def actuate(self, actuator_id: str, command: dict) -> dict:
        now = self.clock()
        with self._lock:
            if actuator_id not in self.actuation_log:
                raise UnknownActuator(f"no actuator {actuator_id} on {self.node_id}")
            record = {"received_at": now, **(command or {})}
            self.actuation_log[actuator_id].append(record)
            generated_at = record.get("generated_at")
            if generated_at is not None:
                self.stats.processed += 1
                self.stats.proc_times_ms.append(now - int(generated_at))
        self.touch_contact(now)
        return {"actuator_id": actuator_id, "completed_at": now}

    def touch_contact(self, when: Optional[int] = None) -> None:
        with self._lock:
            self.last_contact = self.clock() if when is None else when

    def drain_stats(self) -> IOStats:
        with self._lock:
            stats, self.stats = self.stats, IOStats()
            return stats

    def reset(self) -> None:
        """Forget run-time state, as after a power cycle."""
        with self._lock:
            self._subs.clear()
            self._latest.clear()
            self.last_contact = None
