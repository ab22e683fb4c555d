"""Translate between planner instances and simulator scenarios.

Used to score the decentralised policy against the exact planner: a planner
instance becomes a scenario in which the first ``m`` nodes (by id) each own
one microservice, and the resulting trace becomes a placement plan that
:func:`edgemesh.planner.evaluate_plan` can score under the planner's model.
"""

from __future__ import annotations

from typing import List, Optional

from ..core import NodeRef, WorkloadSpec
from ..planner import PlacementPlan, PlanInstance
from ..policy import PolicyParams
from .harness import MetricsRecord
from .scenario import NodeSpec, Scenario


def scenario_from_instance(
    instance: PlanInstance,
    policy: Optional[PolicyParams] = None,
    inputs_per_slot: int = 6,
) -> Scenario:
    """Scenario that runs the policy on ``instance``.

    The policy loop and the remote timeout both default to one slot, and every
    node hosts at most one microservice, matching the planner's one-per-node rule.
    """
    slot_s = instance.horizon.slot_duration
    if policy is None:
        policy = PolicyParams(loop_period=slot_s, remote_timeout=slot_s)
    nodes = []
    for i, pn in enumerate(instance.sorted_nodes(), start=1):
        nodes.append(
            NodeSpec(
                ref=NodeRef(pn.node_id, f"10.0.1.{i}:5000", f"10.0.1.{i}:5001"),
                energy=pn.energy,
                solar=tuple(pn.solar),
                source=i <= instance.m,
            )
        )
    workload = WorkloadSpec(
        service_time_ms=min(400.0, instance.horizon.slot_ms / inputs_per_slot / 2),
        input_period_ms=instance.horizon.slot_ms / inputs_per_slot,
        count=instance.m,
    )
    return Scenario(
        nodes=tuple(nodes),
        horizon=instance.horizon,
        workload=workload,
        policy=policy,
        name="planner-instance",
        max_workloads=1,
    )


def plan_from_record(record: MetricsRecord, instance: PlanInstance) -> PlacementPlan:
    """Placement plan followed by the simulated policy.

    A microservice that is hosted nowhere in a slot (its host just powered
    off and the source has not restarted it yet) is charged to its home node,
    or to the first free node by id if the home is occupied, so that every
    slot places all ``m`` microservices on distinct nodes. Slots after an
    early stop (every node off) keep each microservice at home.
    """
    ids = [n.node_id for n in instance.sorted_nodes()]
    homes = ids[: instance.m]
    assignment: List[tuple] = []
    for placement in record.placements:
        row = [placement.get(h) for h in homes]
        taken = {x for x in row if x is not None}
        for j, host in enumerate(row):
            if host is not None:
                continue
            pick = homes[j] if homes[j] not in taken else next(i for i in ids if i not in taken)
            row[j] = pick
            taken.add(pick)
        assignment.append(tuple(row))
    while len(assignment) < instance.T:
        assignment.append(tuple(homes))
    return PlacementPlan(assignment=assignment)
