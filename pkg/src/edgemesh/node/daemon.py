"""Live node daemon: config file, HTTP endpoints and periodic tasks."""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from ..clock import PeriodicTask, RealTimeScheduler
from ..core import ContractError, EnergyState, NodeRef
from ..discovery import AddressSpace, HEARTBEAT_INTERVAL_MS
from ..policy import PolicyParams
from .adapters import (
    EngineRuntime,
    InProcessRuntime,
    ProbeEnergy,
    PsutilHost,
    SimulatedHost,
    SubprocessRuntime,
    VirtualBattery,
)
from .controller import MAX_WORKLOADS, WorkloadDefaults
from .http import HttpTransport, JsonServer, controller_routes, service_routes
from .node import Node
from .service import SensorSpec

log = logging.getLogger(__name__)


class ConfigInvalid(ValueError):
    pass


def _split(address: str):
    host, _, port = str(address).rpartition(":")
    if not host or not port.isdigit():
        raise ConfigInvalid(f"address {address!r} is not host:port")
    return host, int(port)


@dataclass
class NodeConfig:
    node_id: str
    controller_address: str
    service_address: str
    policy: PolicyParams = field(default_factory=PolicyParams)
    energy_adapter: str = "virtual"
    runtime_adapter: str = "inproc"
    sensors: List[SensorSpec] = field(default_factory=list)
    actuators: List[str] = field(default_factory=list)
    peers: List[NodeRef] = field(default_factory=list)
    subnet: Optional[dict] = None
    workload: WorkloadDefaults = field(default_factory=WorkloadDefaults)
    image_ref: str = "edgemesh/deterrent:latest"
    energy: dict = field(default_factory=dict)
    heartbeat_ms: int = HEARTBEAT_INTERVAL_MS
    max_workloads: int = MAX_WORKLOADS
    engine: str = "docker"
    policy_enabled: bool = True

    @property
    def ref(self) -> NodeRef:
        return NodeRef(self.node_id, self.controller_address, self.service_address)

    @classmethod
    def from_dict(cls, data: dict) -> "NodeConfig":
        try:
            adapters = data.get("adapters", {})
            workload = data.get("workload", {})
            cfg = cls(
                node_id=str(data["node_id"]),
                controller_address=str(data["controller"]),
                service_address=str(data["service"]),
                policy=PolicyParams.from_config(data.get("policy", {})),
                energy_adapter=adapters.get("energy", "virtual"),
                runtime_adapter=adapters.get("runtime", "inproc"),
                sensors=[SensorSpec.from_dict(s) for s in data.get("sensors", [])],
                actuators=[str(a["id"]) for a in data.get("actuators", [])],
                peers=[NodeRef.from_dict(p) for p in data.get("peers", [])],
                subnet=data.get("subnet"),
                workload=WorkloadDefaults(
                    sensor_id=workload.get("sensor_id", "camera"),
                    actuator_id=workload.get("actuator_id", "deterrent"),
                    service_time_ms=float(workload.get("service_time_ms", 400.0)),
                ),
                image_ref=workload.get("image_ref", "edgemesh/deterrent:latest"),
                energy=data.get("energy", {}),
                heartbeat_ms=int(data.get("heartbeat_ms", HEARTBEAT_INTERVAL_MS)),
                max_workloads=int(data.get("max_workloads", MAX_WORKLOADS)),
                engine=adapters.get("engine_binary", "docker"),
                policy_enabled=bool(data.get("policy_enabled", True)),
            )
        except ConfigInvalid:
            raise
        except (KeyError, TypeError, ValueError, ContractError) as exc:
            raise ConfigInvalid(f"{type(exc).__name__}: {exc}") from exc
        _split(cfg.controller_address)
        _split(cfg.service_address)
        if cfg.energy_adapter not in ("virtual", "probe"):
            raise ConfigInvalid(f"unknown energy adapter {cfg.energy_adapter!r}")
        if cfg.runtime_adapter not in ("inproc", "subprocess", "engine"):
            raise ConfigInvalid(f"unknown runtime adapter {cfg.runtime_adapter!r}")
        if cfg.energy_adapter == "probe" and "probe" not in cfg.energy:
            raise ConfigInvalid("probe energy adapter needs energy.probe")
        return cfg


def load_config(path) -> NodeConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigInvalid(f"config file {path} not found") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigInvalid("config must be a JSON object")
    return NodeConfig.from_dict(data)


class NodeDaemon:
    """One node served over HTTP.

    ``periodic=False`` leaves sampling, heartbeats and the policy loop to the
    caller, which is how the tests drive daemons on a virtual clock.
    """

    def __init__(self, config: NodeConfig, scheduler=None, transport=None, energy=None, host=None):
        self.config = config
        self.scheduler = scheduler or RealTimeScheduler()
        ctl_host, ctl_port = _split(config.controller_address)
        svc_host, svc_port = _split(config.service_address)
        self.transport = transport or HttpTransport(bind_host=svc_host)
        self.energy = energy or self._energy_adapter()
        if config.subnet:
            space = AddressSpace.from_subnet(
                config.subnet["interface"],
                config.subnet["netmask"],
                int(config.subnet.get("service_port", svc_port)),
                int(config.subnet.get("controller_port", ctl_port)),
            )
        else:
            space = AddressSpace.from_endpoints(config.ref, config.peers)
        self.node = Node(
            config.ref,
            self.transport,
            self.scheduler,
            energy=self.energy,
            host=host or (SimulatedHost() if config.energy_adapter == "virtual" else PsutilHost()),
            params=config.policy,
            sensors=config.sensors,
            actuators=config.actuators,
            workload=config.workload,
            image_ref=config.image_ref,
            space=space,
            runtime=self._runtime_adapter(),
            heartbeat_ms=config.heartbeat_ms,
            max_workloads=config.max_workloads,
        )
        self.controller_server = JsonServer(
            controller_routes(self.node.controller), ctl_host, ctl_port, name=f"{config.node_id}-controller"
        )
        self.service_server = JsonServer(
            service_routes(self.node.service), svc_host, svc_port, name=f"{config.node_id}-service"
        )
        self._tasks: List[PeriodicTask] = []
        self._stopped = threading.Event()

    def _energy_adapter(self):
        cfg = self.config
        if cfg.energy_adapter == "probe":
            return ProbeEnergy(cfg.energy["probe"])
        capacity = float(cfg.energy.get("capacity", 100.0))
        return VirtualBattery(
            EnergyState(
                battery_charge=float(cfg.energy.get("initial_charge", capacity)),
                capacity=capacity,
                compute_cost_per_ms=float(cfg.energy.get("phi", 0.0)),
                network_cost_per_ms=float(cfg.energy.get("varphi", 0.0)),
            )
        )

    def _runtime_adapter(self):
        kind = self.config.runtime_adapter
        if kind == "subprocess":
            return SubprocessRuntime(bind_host=_split(self.config.service_address)[0])
        if kind == "engine":
            return EngineRuntime(self.config.engine)
        return InProcessRuntime(self.transport, self.scheduler)

    @property
    def ref(self) -> NodeRef:
        return self.node.ref

    def start(self, periodic: bool = True) -> "NodeDaemon":
        self.controller_server.start()
        self.service_server.start()
        log.info(
            "node %s up: controller %s, service %s",
            self.config.node_id,
            self.controller_server.address,
            self.service_server.address,
        )
        if periodic:
            self._start_tasks()
        return self

    def _start_tasks(self) -> None:
        node = self.node
        for spec in self.config.sensors:
            self._tasks.append(
                PeriodicTask(f"sensor-{spec.sensor_id}", spec.period_ms, lambda s=spec.sensor_id: node.sample(s))
            )
        self._tasks.append(PeriodicTask("heartbeat", self.config.heartbeat_ms, node.emit_heartbeat))
        if self.config.policy_enabled:
            self._tasks.append(
                PeriodicTask("policy", self.config.policy.loop_period * 1000, self._policy_tick)
            )
        if isinstance(self.energy, VirtualBattery) and "slot_ms" in self.config.energy:
            self._tasks.append(
                PeriodicTask("battery", float(self.config.energy["slot_ms"]), self._battery_tick)
            )
        for task in self._tasks:
            task.start()

    def _policy_tick(self) -> None:
        def on_event(kind, detail):
            log.info("policy event %s %s", kind, json.dumps(detail, sort_keys=True))

        self.node.policy_step(on_event)

    def _battery_tick(self) -> None:
        hosted, local = self.node.controller.load()
        _, active = self.energy.step(float(self.config.energy.get("solar_per_slot", 0.0)), hosted, local)
        if not active:
            log.warning("virtual battery of %s exhausted; halting workloads", self.config.node_id)
            self.node.power_off()

    def stop_controller_endpoint(self) -> None:
        """Take the Controller's HTTP endpoint down while the node keeps running."""
        self.controller_server.shutdown()

    def shutdown(self) -> None:
        if self._stopped.is_set():
            return
        self._stopped.set()
        for task in self._tasks:
            task.stop()
        self.node.controller.halt_all()
        for server in (self.controller_server, self.service_server):
            try:
                server.shutdown()
            except Exception:
                pass
        self.transport.close()
        if isinstance(self.scheduler, RealTimeScheduler):
            self.scheduler.close()

    def serve_forever(self) -> None:
        self.start()
        try:
            self._stopped.wait()
        except KeyboardInterrupt:
            pass
        finally:
            self.shutdown()
