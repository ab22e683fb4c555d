"""Lock-step discrete-time simulation of a set of nodes.

Every slot the harness

1. lets each running node send its presence heartbeat and each running
   source node run one pass of its resource-management loop, using the
   battery level left by the previous slot;
2. applies the energy model to every node with the workloads it now hosts,
   powering off nodes that cannot run the slot and booting nodes that can;
3. plays the slot's sensor samples, pushes, processing and actuations on the
   virtual clock;
4. appends one metrics row per node.

The node objects are the same ones the live daemon serves; only the
transport (in-process, with per-hop delays) and the clock differ.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from ..clock import VirtualScheduler
from ..node.adapters import SimulatedHost, VirtualBattery
from ..node.controller import WorkloadDefaults
from ..node.node import Node
from ..node.service import SensorSpec
from ..node.transport import LocalNetwork
from ..discovery import AddressSpace
from .scenario import Scenario

log = logging.getLogger(__name__)


@dataclass
class MetricsRow:
    slot: int
    node_id: str
    battery_pct: float
    cpu_pct: float
    workloads: int
    generated: int
    processed: int
    proc_times_ms: List[int] = field(default_factory=list)
    offload_events: int = 0
    # energy-model detail, kept for checks; not part of metrics.csv
    charge: float = 0.0
    solar: float = 0.0
    consumption: float = 0.0
    active: int = 1
    local_workloads: int = 0

    @property
    def mean_proc_ms(self) -> Optional[float]:
        if not self.proc_times_ms:
            return None
        return sum(self.proc_times_ms) / len(self.proc_times_ms)


@dataclass
class Event:
    slot: int
    time_ms: int
    node_id: str
    kind: str
    peer: Optional[str] = None
    battery_pct: Optional[float] = None


@dataclass
class MetricsRecord:
    scenario: str
    node_ids: List[str]
    slot_ms: int
    input_period_ms: float
    rows: List[MetricsRow] = field(default_factory=list)
    events: List[Event] = field(default_factory=list)
    # placements[t][source_id] -> id of the node hosting that source's workload
    placements: List[Dict[str, Optional[str]]] = field(default_factory=list)
    slots_run: int = 0

    def series(self, node_id: str, attr: str) -> List:
        return [getattr(r, attr) for r in self.rows if r.node_id == node_id]

    def row(self, slot: int, node_id: str) -> MetricsRow:
        for r in self.rows:
            if r.slot == slot and r.node_id == node_id:
                return r
        raise KeyError((slot, node_id))

    def events_of(self, kind: str, node_id: Optional[str] = None) -> List[Event]:
        return [e for e in self.events if e.kind == kind and (node_id is None or e.node_id == node_id)]

    def operative_times(self) -> Dict[str, int]:
        taus = {n: 0 for n in self.node_ids}
        for r in self.rows:
            taus[r.node_id] += r.active
        return taus

    def summary(self) -> dict:
        taus = self.operative_times()
        return {
            "scenario": self.scenario,
            "slots": self.slots_run,
            "operative_times": taus,
            "objective": min(taus.values()) if taus else 0,
            "processed_input_ratio": {
                str(int(k) if float(k).is_integer() else k): round(v, 6)
                for k, v in processed_input_ratio(self).items()
            },
            "generated": sum(r.generated for r in self.rows),
            "processed": sum(r.processed for r in self.rows),
            "offloads": len(self.events_of("offload")),
            "repatriations": len(self.events_of("repatriate")),
            "remote_failures": len(self.events_of("remote_failure")),
        }


def processed_input_ratio(record: MetricsRecord) -> Dict[float, float]:
    """Percentage of generated inputs that were processed, keyed by input period."""
    generated = sum(r.generated for r in record.rows)
    processed = sum(r.processed for r in record.rows)
    ratio = 100.0 * processed / generated if generated else 0.0
    return {record.input_period_ms: ratio}


class Simulation:
    """Builds the nodes of a scenario and steps them slot by slot."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.scheduler = VirtualScheduler()
        self.network = LocalNetwork(
            self.scheduler, latency_ms=scenario.latency_ms, bandwidth_bps=scenario.bandwidth_bps
        )
        self.solar = scenario.solar_traces()
        self.slot_ms = scenario.horizon.slot_ms
        self.end_ms = scenario.horizon.num_slots * self.slot_ms
        self.nodes: Dict[str, Node] = {}
        self.batteries: Dict[str, VirtualBattery] = {}
        self.hosts: Dict[str, SimulatedHost] = {}
        self.up: Dict[str, bool] = {}
        self.scans: Dict[str, int] = {}
        self.record = MetricsRecord(
            scenario=scenario.name,
            node_ids=[n.node_id for n in scenario.nodes],
            slot_ms=self.slot_ms,
            input_period_ms=scenario.workload.input_period_ms,
        )
        self._slot = 0
        self._offloads_this_slot: Dict[str, int] = {}
        self._build()

    def _build(self) -> None:
        sc = self.scenario
        period = int(round(sc.workload.input_period_ms))
        defaults = WorkloadDefaults(
            sensor_id=sc.sensor_id,
            actuator_id=sc.actuator_id,
            service_time_ms=sc.workload.service_time_ms,
        )
        # slot-based control: one policy pass and one heartbeat per slot
        params = sc.policy
        for spec in sc.nodes:
            battery = VirtualBattery(spec.energy)
            host = SimulatedHost(sc.cpu_per_workload_pct, sc.cpu_floor_pct)
            sensors = [SensorSpec(sc.sensor_id, period, sc.payload_bytes)] if spec.source else []
            actuators = [sc.actuator_id] if spec.source else []
            node = Node(
                spec.ref,
                self.network.view(spec.node_id),
                self.scheduler,
                energy=battery,
                host=host,
                params=params,
                sensors=sensors,
                actuators=actuators,
                workload=defaults,
                image_ref=sc.workload.image_ref,
                space=AddressSpace.from_endpoints(spec.ref, sc.endpoints),
                heartbeat_ms=self.slot_ms,
                max_workloads=sc.max_workloads,
                candidate_filter=sc.topology.allowed,
                may_discover=sc.topology.may_discover(spec.node_id),
                probe_workers=1,
            )
            self._count_scans(node)
            self.network.register(
                spec.node_id,
                spec.ref.controller_address,
                node.controller,
                spec.ref.service_address,
                node.service,
            )
            self.nodes[spec.node_id] = node
            self.batteries[spec.node_id] = battery
            self.hosts[spec.node_id] = host
            self.up[spec.node_id] = True
            if spec.source:
                self.scheduler.call_at(0, self._sample, spec.node_id, 0)

    def _count_scans(self, node: Node) -> None:
        self.scans[node.node_id] = 0
        original = node.peers.discover

        def counted():
            self.scans[node.node_id] += 1
            return original()

        node.peers.discover = counted

    def _sample(self, node_id: str, k: int) -> None:
        if self.up[node_id]:
            self.nodes[node_id].sample(self.scenario.sensor_id)
        nxt = int(round((k + 1) * self.scenario.workload.input_period_ms))
        if nxt < self.end_ms:
            self.scheduler.call_at(nxt, self._sample, node_id, k + 1)

    def _event_sink(self, node_id: str) -> Callable[[str, dict], None]:
        def sink(kind: str, detail: dict) -> None:
            peer = detail.get("to") or detail.get("from") or detail.get("peer") or detail.get("target")
            self.record.events.append(
                Event(
                    slot=self._slot + 1,
                    time_ms=self.scheduler.now(),
                    node_id=node_id,
                    kind=kind,
                    peer=peer,
                    battery_pct=detail.get("battery"),
                )
            )
            if kind == "offload":
                self._offloads_this_slot[node_id] = self._offloads_this_slot.get(node_id, 0) + 1

        return sink

    def step(self) -> bool:
        """Run one slot. Returns False once the scenario is over."""
        sc = self.scenario
        t = self._slot
        if t >= sc.horizon.num_slots:
            return False
        t0 = t * self.slot_ms
        self.scheduler.run_until(t0)
        self._offloads_this_slot = {}

        order = [n.node_id for n in sc.nodes]
        for node_id in order:
            if self.up[node_id]:
                self.nodes[node_id].emit_heartbeat()
        for spec in sc.nodes:
            if spec.source and self.up[spec.node_id]:
                self.nodes[spec.node_id].policy_step(self._event_sink(spec.node_id))

        actives = {}
        details = {}
        for node_id in order:
            node = self.nodes[node_id]
            hosted, local = node.controller.load() if self.up[node_id] else (0, 0)
            consumption, active = self.batteries[node_id].step(self.solar[node_id][t], hosted, local)
            actives[node_id] = active
            details[node_id] = (consumption, hosted, local)
        for node_id in order:
            if actives[node_id] and not self.up[node_id]:
                self._power(node_id, True)
            elif not actives[node_id] and self.up[node_id]:
                self._power(node_id, False)

        placements = self._placements()

        last = t == sc.horizon.num_slots - 1
        # the final slot also drains data still in flight at the horizon
        self.scheduler.run_until(t0 + self.slot_ms * (2 if last else 1))

        for node_id in order:
            node = self.nodes[node_id]
            stats = node.service.drain_stats()
            consumption, hosted, local = details[node_id]
            if not actives[node_id]:
                hosted = local = 0
            state = self.batteries[node_id].state
            self.record.rows.append(
                MetricsRow(
                    slot=t + 1,
                    node_id=node_id,
                    battery_pct=state.percent,
                    cpu_pct=self.hosts[node_id].cpu_pct(hosted),
                    workloads=hosted,
                    generated=stats.generated,
                    processed=stats.processed,
                    proc_times_ms=stats.proc_times_ms,
                    offload_events=self._offloads_this_slot.get(node_id, 0),
                    charge=state.battery_charge,
                    solar=self.solar[node_id][t],
                    consumption=consumption if actives[node_id] else 0.0,
                    active=actives[node_id],
                    local_workloads=local,
                )
            )
        self.record.placements.append(placements)
        self._slot += 1
        self.record.slots_run = self._slot
        if not any(actives.values()):
            return False
        return self._slot < sc.horizon.num_slots

    def _power(self, node_id: str, on: bool) -> None:
        node = self.nodes[node_id]
        self.up[node_id] = on
        self.hosts[node_id].up = on
        self.network.set_up(node_id, on)
        if not on:
            node.power_off()
        self.record.events.append(
            Event(
                slot=self._slot + 1,
                time_ms=self.scheduler.now(),
                node_id=node_id,
                kind="node_up" if on else "node_down",
                battery_pct=self.batteries[node_id].percent(),
            )
        )

    def _placements(self) -> Dict[str, Optional[str]]:
        where: Dict[str, Optional[str]] = {}
        by_service = {n.ref.service_address: n.node_id for n in self.scenario.nodes}
        for spec in self.scenario.nodes:
            if spec.source:
                where[spec.node_id] = None
        for node_id, node in self.nodes.items():
            if not self.up[node_id]:
                continue
            for handle in node.controller.handles():
                src = by_service.get(handle.source_service_address)
                if src is not None:
                    where[src] = node_id
        return where

    def run(self) -> MetricsRecord:
        while self.step():
            pass
        return self.record


def run_scenario(scenario: Scenario) -> MetricsRecord:
    """Simulate ``scenario`` to its horizon (or until every node is off)."""
    return Simulation(scenario).run()
