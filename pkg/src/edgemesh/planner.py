"""Exact max-min operative-time placement for small instances.

Each slot assigns the ``m`` homogeneous microservices to distinct nodes. The
node hosting microservice ``j`` in the first slot is its home; hosting it
anywhere else later pays the networking surcharge. Battery dynamics follow
:func:`edgemesh.core.step_battery`, and the objective is the operative time
of the worst-off node.

The search is exhaustive with memoisation on (slot, homes, battery vector,
operative-time vector). It is only meant as a desk-scale baseline, hence the
size guard.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from .core import (
    ContractError,
    EnergyState,
    Horizon,
    WorkloadSpec,
    slot_consumption,
    step_battery,
)

MAX_NODES = 5
MAX_SLOTS = 8
QUANTUM = 1e-9  # fraction of capacity


class PlannerError(Exception):
    pass


class SizeExceeded(PlannerError):
    pass


class Infeasible(PlannerError):
    pass


class DimensionMismatch(PlannerError):
    pass


@dataclass(frozen=True)
class PlanNode:
    node_id: str
    energy: EnergyState
    solar: Tuple[float, ...]


@dataclass(frozen=True)
class PlanInstance:
    nodes: Tuple[PlanNode, ...]
    horizon: Horizon
    workload: WorkloadSpec

    def __post_init__(self):
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ContractError("duplicate node ids in instance")
        for n in self.nodes:
            if len(n.solar) != self.horizon.num_slots:
                raise ContractError(
                    f"node {n.node_id}: solar trace has {len(n.solar)} entries, "
                    f"expected {self.horizon.num_slots}"
                )

    @property
    def m(self) -> int:
        return self.workload.count

    @property
    def T(self) -> int:
        return self.horizon.num_slots

    def sorted_nodes(self) -> List[PlanNode]:
        return sorted(self.nodes, key=lambda n: n.node_id)


@dataclass
class PlacementPlan:
    # assignment[t][j] is the node hosting microservice j in slot t (0-based)
    assignment: List[Tuple[str, ...]]
    indicators: Dict[str, List[int]] = field(default_factory=dict)
    operative_times: Dict[str, int] = field(default_factory=dict)
    objective: int = 0

    @property
    def homes(self) -> Tuple[str, ...]:
        return self.assignment[0] if self.assignment else ()

    def hosted_counts(self, t: int) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for node_id in self.assignment[t]:
            counts[node_id] = counts.get(node_id, 0) + 1
        return counts

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "operative_times": dict(self.operative_times),
            "indicators": {k: list(v) for k, v in self.indicators.items()},
            "homes": list(self.homes),
            "assignment": [list(a) for a in self.assignment],
        }

    def assignment_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["slot", "microservice", "home", "host", "offloaded"])
        homes = self.homes
        for t, row in enumerate(self.assignment, start=1):
            for j, host in enumerate(row):
                writer.writerow([t, j, homes[j], host, int(host != homes[j])])
        return buf.getvalue()


def _loads(n: int, homes: Sequence[int], hosts: Sequence[int]) -> Tuple[Tuple[int, int], ...]:
    hosted = [0] * n
    local = [0] * n
    for home, host in zip(homes, hosts):
        hosted[host] += 1
        if home == host:
            local[host] += 1
    return tuple(zip(hosted, local))


def _advance(nodes, states, t, loads):
    new_states = []
    chis = []
    for node, state, (hosted, local) in zip(nodes, states, loads):
        cons = slot_consumption(
            state.compute_cost_per_ms, state.network_cost_per_ms, hosted, local
        )
        new_state, chi = step_battery(state, node.solar[t], cons)
        new_states.append(new_state)
        chis.append(chi)
    return new_states, chis


def solve_exact(instance: PlanInstance) -> PlacementPlan:
    """Maximise the minimum operative time over all per-slot assignments.

    Ties resolve to the lexicographically smallest assignment sequence with
    nodes ordered by id.
    """
    nodes = instance.sorted_nodes()
    n, m, T = len(nodes), instance.m, instance.T
    if n > MAX_NODES or T > MAX_SLOTS:
        raise SizeExceeded(f"instance n={n}, T={T} exceeds n<={MAX_NODES}, T<={MAX_SLOTS}")
    if m > n:
        raise Infeasible(f"{m} microservices cannot be spread over {n} nodes")

    permutations = list(itertools.permutations(range(n), m))
    quanta = [QUANTUM * node.energy.capacity for node in nodes]
    memo: Dict[tuple, Tuple[int, Tuple[Tuple[int, ...], ...]]] = {}

    def key_of(t, homes, states, taus):
        return (
            t,
            homes,
            tuple(round(s.battery_charge / q) for s, q in zip(states, quanta)),
            taus,
        )

    def search(t, homes, states, taus):
        if t == T:
            return min(taus), ()
        key = key_of(t, homes, states, taus)
        hit = memo.get(key)
        if hit is not None:
            return hit
        best_value = -1
        best_tail: Tuple[Tuple[int, ...], ...] = ()
        seen = set()
        ceiling = min(taus) + (T - t)
        for hosts in permutations:
            slot_homes = hosts if t == 0 else homes
            loads = _loads(n, slot_homes, hosts)
            if t > 0:
                # assignments with equal per-node loads have identical futures;
                # keep the first in order
                if loads in seen:
                    continue
                seen.add(loads)
            new_states, chis = _advance(nodes, states, t, loads)
            new_taus = tuple(a + b for a, b in zip(taus, chis))
            value, tail = search(t + 1, slot_homes, new_states, new_taus)
            if value > best_value:
                best_value = value
                best_tail = (hosts,) + tail
                if best_value == ceiling:
                    break
        memo[key] = (best_value, best_tail)
        return best_value, best_tail

    initial = [node.energy for node in nodes]
    _, seq = search(0, (), initial, tuple(0 for _ in nodes))
    plan = PlacementPlan(
        assignment=[tuple(nodes[i].node_id for i in hosts) for hosts in seq]
    )
    objective, taus, indicators = _replay(instance, plan)
    plan.objective = objective
    plan.operative_times = taus
    plan.indicators = indicators
    return plan


def _replay(instance: PlanInstance, plan: PlacementPlan):
    nodes = instance.sorted_nodes()
    index = {node.node_id: i for i, node in enumerate(nodes)}
    homes = [index[h] for h in plan.assignment[0]]
    states = [node.energy for node in nodes]
    indicators = {node.node_id: [] for node in nodes}
    for t, row in enumerate(plan.assignment):
        hosts = [index[h] for h in row]
        states, chis = _advance(nodes, states, t, _loads(len(nodes), homes, hosts))
        for node, chi in zip(nodes, chis):
            indicators[node.node_id].append(chi)
    taus = {k: sum(v) for k, v in indicators.items()}
    return min(taus.values()), taus, indicators


def evaluate_plan(instance: PlanInstance, plan: PlacementPlan) -> Tuple[int, Dict[str, int]]:
    """Recompute activity, operative times and the objective of ``plan``."""
    if len(plan.assignment) != instance.T:
        raise DimensionMismatch(
            f"plan covers {len(plan.assignment)} slots, instance has {instance.T}"
        )
    ids = {node.node_id for node in instance.nodes}
    for t, row in enumerate(plan.assignment):
        if len(row) != instance.m:
            raise DimensionMismatch(
                f"slot {t + 1} places {len(row)} microservices, instance has {instance.m}"
            )
        unknown = set(row) - ids
        if unknown:
            raise DimensionMismatch(f"slot {t + 1} names unknown nodes {sorted(unknown)}")
        if len(set(row)) != len(row):
            raise ContractError(f"slot {t + 1} stacks microservices on one node")
    objective, taus, _ = _replay(instance, plan)
    return objective, taus


def instance_from_dict(data: dict) -> PlanInstance:
    T = int(data["T"])
    nodes = []
    for raw in data["nodes"]:
        capacity = float(raw["capacity"])
        nodes.append(
            PlanNode(
                node_id=str(raw["id"]),
                energy=EnergyState(
                    battery_charge=float(raw.get("initial_charge", capacity)),
                    capacity=capacity,
                    compute_cost_per_ms=float(raw.get("phi", 0.0)),
                    network_cost_per_ms=float(raw.get("varphi", 0.0)),
                ),
                solar=tuple(float(x) for x in raw["solar"]),
            )
        )
    workload = WorkloadSpec(count=int(data["m"]))
    return PlanInstance(
        nodes=tuple(nodes),
        horizon=Horizon(num_slots=T, slot_duration=float(data.get("slot_duration", 60.0))),
        workload=workload,
    )


def instance_to_dict(instance: PlanInstance) -> dict:
    return {
        "T": instance.T,
        "m": instance.m,
        "nodes": [
            {
                "id": n.node_id,
                "capacity": n.energy.capacity,
                "initial_charge": n.energy.battery_charge,
                "phi": n.energy.compute_cost_per_ms,
                "varphi": n.energy.network_cost_per_ms,
                "solar": list(n.solar),
            }
            for n in instance.nodes
        ],
    }


def load_instance(path) -> PlanInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def write_plan(plan: PlacementPlan, out: Path) -> Tuple[Path, Path]:
    """Write ``plan`` as JSON to ``out`` and its per-slot CSV next to it."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(plan.to_dict(), indent=2, sort_keys=True) + "\n")
    csv_path = out.with_suffix(".csv")
    csv_path.write_text(plan.assignment_csv())
    return out, csv_path
