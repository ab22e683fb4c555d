"""Scenario description: nodes, energy traces, topology, workload, policy."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from ..core import ContractError, EnergyState, Horizon, NodeRef, WorkloadSpec
from ..policy import PolicyParams

TOPOLOGIES = ("mesh", "client-server", "master-slave", "hierarchical")


class ScenarioInvalid(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    """Who may look for destinations, and which peers qualify.

    mesh: everyone, any peer. client-server: clients offload to servers only;
    servers never look. master-slave: the master offloads to slaves; slaves
    never look. hierarchical: tier ``k`` offloads to tier ``k + 1`` only.
    """

    kind: str = "mesh"
    roles: Dict[str, str] = field(default_factory=dict)
    tiers: Dict[str, int] = field(default_factory=dict)

    def validate(self, node_ids) -> None:
        if self.kind not in TOPOLOGIES:
            raise ScenarioInvalid(f"unknown topology {self.kind!r}")
        known = set(node_ids)
        for name in list(self.roles) + list(self.tiers):
            if name not in known:
                raise ScenarioInvalid(f"topology references undeclared node {name!r}")
        if self.kind == "client-server" and "server" not in self.roles.values():
            raise ScenarioInvalid("client-server topology needs at least one server")
        if self.kind == "master-slave" and list(self.roles.values()).count("master") != 1:
            raise ScenarioInvalid("master-slave topology needs exactly one master")
        if self.kind == "hierarchical" and set(self.tiers) != known:
            raise ScenarioInvalid("hierarchical topology needs a tier for every node")

    def may_discover(self, node_id: str) -> bool:
        role = self.roles.get(node_id)
        if self.kind == "master-slave":
            return role == "master"
        if self.kind == "client-server":
            return role != "server"
        return True

    def allowed(self, source: NodeRef, candidates: List[NodeRef]) -> List[NodeRef]:
        if self.kind == "mesh":
            return list(candidates)
        if self.kind == "client-server":
            return [c for c in candidates if self.roles.get(c.node_id) == "server"]
        if self.kind == "master-slave":
            if self.roles.get(source.node_id) != "master":
                return []
            return [c for c in candidates if self.roles.get(c.node_id) == "slave"]
        tier = self.tiers[source.node_id]
        return [c for c in candidates if self.tiers.get(c.node_id) == tier + 1]


@dataclass(frozen=True)
class NodeSpec:
    ref: NodeRef
    energy: EnergyState
    solar: Tuple[float, ...]
    source: bool = True

    @property
    def node_id(self) -> str:
        return self.ref.node_id


@dataclass(frozen=True)
class Scenario:
    nodes: Tuple[NodeSpec, ...]
    horizon: Horizon
    workload: WorkloadSpec = WorkloadSpec()
    policy: PolicyParams = PolicyParams()
    topology: Topology = Topology()
    seed: int = 0
    name: str = "scenario"
    cpu_per_workload_pct: float = 30.0
    cpu_floor_pct: float = 2.0
    max_workloads: int = 2
    latency_ms: float = 5.0
    bandwidth_bps: float = 2_000_000
    payload_bytes: int = 0
    solar_jitter: float = 0.0
    sensor_id: str = "camera"
    actuator_id: str = "deterrent"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.nodes:
            raise ScenarioInvalid("scenario declares no nodes")
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ScenarioInvalid("duplicate node ids")
        addresses = [a for n in self.nodes for a in (n.ref.controller_address, n.ref.service_address)]
        if len(set(addresses)) != len(addresses):
            raise ScenarioInvalid("duplicate endpoint addresses")
        for n in self.nodes:
            if len(n.solar) != self.horizon.num_slots:
                raise ScenarioInvalid(
                    f"node {n.node_id}: solar trace has {len(n.solar)} entries, "
                    f"horizon has {self.horizon.num_slots}"
                )
            if any(x < 0 for x in n.solar):
                raise ScenarioInvalid(f"node {n.node_id}: negative solar input")
        sources = [n for n in self.nodes if n.source]
        if len(sources) != self.workload.count:
            raise ScenarioInvalid(
                f"workload count {self.workload.count} does not match {len(sources)} source nodes"
            )
        if not 0 <= self.solar_jitter < 1:
            raise ScenarioInvalid("solar_jitter must lie in [0, 1)")
        self.topology.validate(ids)

    @property
    def endpoints(self) -> List[NodeRef]:
        return [n.ref for n in self.nodes]

    def solar_traces(self) -> Dict[str, List[float]]:
        """Solar input per node per slot, with the seeded jitter applied."""
        rng = random.Random(self.seed)
        traces = {}
        for n in self.nodes:
            if self.solar_jitter:
                traces[n.node_id] = [
                    max(0.0, x * (1 + rng.uniform(-self.solar_jitter, self.solar_jitter)))
                    for x in n.solar
                ]
            else:
                traces[n.node_id] = list(n.solar)
        return traces

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)


def _solar(raw: dict, num_slots: int) -> Tuple[float, ...]:
    if "solar" in raw:
        return tuple(float(x) for x in raw["solar"])
    trace = [float(raw.get("solar_default", 0.0))] * num_slots
    for seg in raw.get("solar_segments", []):
        start, end = int(seg["from"]), int(seg["to"])
        if not 0 <= start <= end <= num_slots:
            raise ScenarioInvalid(f"solar segment {seg} outside horizon")
        for t in range(start, end):
            trace[t] = float(seg["value"])
    return tuple(trace)


def scenario_from_dict(data: dict) -> Scenario:
    try:
        hz = data["horizon"]
        horizon = Horizon(int(hz["num_slots"]), float(hz.get("slot_duration_s", 60.0)))
        wl = data.get("workload", {})
        nodes = []
        for raw in data["nodes"]:
            capacity = float(raw.get("capacity", 100.0))
            nodes.append(
                NodeSpec(
                    ref=NodeRef(
                        str(raw["node_id"]),
                        str(raw["controller_address"]),
                        str(raw["service_address"]),
                    ),
                    energy=EnergyState(
                        battery_charge=float(raw.get("initial_charge", capacity)),
                        capacity=capacity,
                        compute_cost_per_ms=float(raw.get("phi", 0.0)),
                        network_cost_per_ms=float(raw.get("varphi", 0.0)),
                    ),
                    solar=_solar(raw, horizon.num_slots),
                    source=bool(raw.get("source", True)),
                )
            )
        count = int(wl.get("count", sum(1 for n in nodes if n.source)))
        workload = WorkloadSpec(
            image_ref=str(wl.get("image_ref", "edgemesh/deterrent:latest")),
            service_time_ms=float(wl.get("service_time_ms", 400.0)),
            input_period_ms=float(wl.get("input_period_ms", 1000.0)),
            count=count,
        )
        topo = data.get("topology", {})
        topology = Topology(
            kind=str(topo.get("kind", "mesh")),
            roles={str(k): str(v) for k, v in topo.get("roles", {}).items()},
            tiers={str(k): int(v) for k, v in topo.get("tiers", {}).items()},
        )
        cpu = data.get("cpu", {})
        net = data.get("network", {})
        return Scenario(
            nodes=tuple(nodes),
            horizon=horizon,
            workload=workload,
            policy=PolicyParams.from_config(data.get("policy", {})),
            topology=topology,
            seed=int(data.get("seed", 0)),
            name=str(data.get("name", "scenario")),
            cpu_per_workload_pct=float(cpu.get("per_workload_pct", 30.0)),
            cpu_floor_pct=float(cpu.get("floor_pct", 2.0)),
            max_workloads=int(data.get("max_workloads", 2)),
            latency_ms=float(net.get("latency_ms", 5.0)),
            bandwidth_bps=float(net.get("bandwidth_bps", 2_000_000)),
            payload_bytes=int(wl.get("payload_bytes", 0)),
            solar_jitter=float(data.get("solar_jitter", 0.0)),
            sensor_id=str(wl.get("sensor_id", "camera")),
            actuator_id=str(wl.get("actuator_id", "deterrent")),
        )
    except ScenarioInvalid:
        raise
    except (KeyError, TypeError, ValueError, ContractError) as exc:
        raise ScenarioInvalid(f"{type(exc).__name__}: {exc}") from exc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioInvalid(f"scenario file {path} not found") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioInvalid(f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioInvalid("scenario must be a JSON object")
    return scenario_from_dict(data)


def bundled(name: str) -> Path:
    """Path of a data file shipped with the package."""
    return Path(__file__).resolve().parent.parent / "data" / name


def case_study(seed: Optional[int] = None) -> Scenario:
    scenario = load_scenario(bundled("case_study.json"))
    return scenario if seed is None else scenario.with_seed(seed)
