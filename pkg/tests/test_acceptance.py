"""Acceptance suite: one PASS/FAIL line per criterion.

Each test gathers named checks, prints a verdict line that is shown even
under output capture, then fails if any check failed.
"""

import dataclasses
import random
import time

import pytest

from edgemesh.clock import VirtualScheduler
from edgemesh.core import (
    EnergyState,
    Horizon,
    WorkloadSpec,
    activity_indicator,
    operative_time,
    slot_consumption,
    step_battery,
)
from edgemesh.discovery import PROBE_TIMEOUT_MS, address_key
from edgemesh.planner import PlanInstance, PlanNode, evaluate_plan, solve_exact
from edgemesh.policy import EnergyAwarePolicy, PolicyParams
from edgemesh.sim import case_study, processed_input_ratio, run_scenario
from edgemesh.sim.bridge import plan_from_record, scenario_from_instance
from edgemesh.sim.export import write_metrics

from nodekit import LocalCluster, http_config, http_daemon
from policy_fakes import FakePeers, FakeRuntime, peer
from simkit import drop_rule_oracle, ratio_scenario


class Verdict:
    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.failed = []
        self.notes = []
        self.done = False

    def check(self, name, ok):
        if not ok:
            self.failed.append(name)
        return ok

    def note(self, text):
        self.notes.append(text)


@pytest.fixture
def verdict(capsys):
    made = []

    def make(number, title):
        v = Verdict(number, title)
        made.append(v)
        return v

    yield make
    for v in made:
        status = "PASS" if v.done and not v.failed else "FAIL"
        detail = "; ".join(v.notes)
        if v.failed:
            detail += " | failed: " + ", ".join(v.failed)
        elif not v.done:
            detail += " | raised before completing"
        with capsys.disabled():
            print(f"\nACCEPTANCE {v.number} {status}: {v.title} ({detail})")


def finish(v):
    v.done = True
    assert not v.failed, f"criterion {v.number}: {v.failed}"


# -- 1: energy model --------------------------------------------------------


def test_criterion_1_energy_model(verdict):
    v = verdict(1, "energy model examples and charge bounds")
    v.check("indicator (0,5,5)", activity_indicator(0, 5, 5) == 0)
    v.check("indicator (3,5,5)", activity_indicator(3, 5, 5) == 1)
    v.check("indicator (0,0,0)", activity_indicator(0, 0, 0) == 0)
    v.check("consumption (2,1,3,1)", slot_consumption(2, 1, 3, 1) == 8)
    v.check("consumption idle", slot_consumption(1.5, 0.7, 0, 0) == 0)
    v.check("consumption all local", slot_consumption(2, 1, 2, 2) == 4)
    v.check("tau [1,1,0,1]", operative_time([1, 1, 0, 1]) == 3)
    v.check("tau [0,0,0]", operative_time([0, 0, 0]) == 0)
    v.check("tau always on", operative_time([1] * 7) == 7)
    s, a = step_battery(EnergyState(10, 10), 5, 3)
    v.check("step clamp then consume", (s.battery_charge, a) == (7, 1))
    s, a = step_battery(EnergyState(1, 10), 0, 2)
    v.check("step inactive keeps charge", (s.battery_charge, a) == (1, 0))

    rng = random.Random(1)
    began = time.perf_counter()
    bad = 0
    for _ in range(10_000):
        cap = rng.uniform(0.1, 200)
        state = EnergyState(rng.uniform(0, cap), cap)
        state, _ = step_battery(state, rng.uniform(0, 2 * cap), rng.uniform(0, 2 * cap))
        bad += not 0 <= state.battery_charge <= state.capacity
    elapsed = time.perf_counter() - began
    v.check("10000 random steps in bounds", bad == 0)
    v.check("runtime under 1 s", elapsed < 1.0)
    v.note(f"{bad} violations, {elapsed:.3f} s")
    finish(v)


# -- 2: oracle dominance ----------------------------------------------------


def random_instance(rng):
    n = rng.randint(2, 4)
    T = rng.randint(1, 6)
    m = rng.randint(1, min(2, n))
    nodes = tuple(
        PlanNode(
            f"n{i}",
            EnergyState(
                rng.uniform(5, 100),
                100,
                compute_cost_per_ms=rng.uniform(5, 40),
                network_cost_per_ms=rng.uniform(0, 10),
            ),
            tuple(rng.uniform(0, 30) for _ in range(T)),
        )
        for i in range(n)
    )
    return PlanInstance(nodes, Horizon(T), WorkloadSpec(count=m))


def test_criterion_2_oracle_dominance(verdict):
    v = verdict(2, "greedy trace never beats the exact planner")
    rng = random.Random(2024)
    began = time.perf_counter()
    dominated = exact_repro = 0
    trials = 60
    for _ in range(trials):
        inst = random_instance(rng)
        plan = solve_exact(inst)
        objective, _ = evaluate_plan(inst, plan)
        exact_repro += objective == plan.objective
        greedy, _ = evaluate_plan(inst, plan_from_record(run_scenario(scenario_from_instance(inst)), inst))
        dominated += greedy <= plan.objective
    elapsed = time.perf_counter() - began
    v.check("greedy <= exact on every instance", dominated == trials)
    v.check("evaluate_plan reproduces the solver bit-exactly", exact_repro == trials)
    v.check("runtime under 2 min", elapsed < 120)
    v.note(f"{trials} instances, {dominated} dominated, {exact_repro} exact, {elapsed:.2f} s")
    finish(v)


# -- 3: case-study trace ----------------------------------------------------


def test_criterion_3_case_study_trace(verdict):
    v = verdict(3, "case-study trace conformance")
    sc = case_study()
    alpha, gamma = sc.policy.alpha, sc.policy.gamma
    rec = run_scenario(sc)
    ids = rec.node_ids
    start = {s.node_id: s.energy.percent for s in sc.nodes}

    def seen(slot, node_id):
        # battery the policy reads at the start of ``slot``
        return start[node_id] if slot == 1 else rec.row(slot - 1, node_id).battery_pct

    offloads = rec.events_of("offload")
    v.check("(a) exactly one offload", len(offloads) == 1)
    if not offloads:
        finish(v)
    off = offloads[0]
    src, dst = off.node_id, off.peer
    lowest = min(ids, key=lambda n: seen(off.slot, n))
    v.check("(a) offloading node has the lowest battery", src == lowest)
    crossing = next(t for t in range(1, rec.slots_run + 1) if seen(t, src) <= alpha)
    v.check("(a) offload at the first crossing below alpha", abs(off.slot - crossing) <= 1)
    v.check("(a) destination above gamma", seen(off.slot, dst) > gamma)
    v.note(f"{src} -> {dst} at slot {off.slot} (crossing {crossing}, dst {seen(off.slot, dst):.1f}%)")

    # (b) slots after the offload where a source sits at or below alpha with no peer above gamma
    witnesses = [
        t
        for t in range(off.slot + 1, rec.slots_run + 1)
        for s in sc.nodes
        if s.source
        and seen(t, s.node_id) <= alpha
        and not any(seen(t, p) > gamma for p in ids if p != s.node_id)
    ]
    v.check("(b) such slots occur", bool(witnesses))
    v.check("(b) no offload in them", not [e for e in offloads[1:] if e.slot in witnesses])
    v.note(f"{len(witnesses)} node-slots below alpha with no peer above gamma")

    downs = [e.slot for e in rec.events_of("node_down", dst) if e.slot >= off.slot]
    v.check("(c) destination deactivates", bool(downs))
    if downs:
        restarts = [
            e.slot
            for e in rec.events
            if e.node_id == src and e.kind in ("local_start", "fallback_local") and e.slot >= downs[0]
        ]
        slot_s = sc.horizon.slot_duration
        budget = round((sc.policy.loop_period + sc.policy.remote_timeout) / slot_s)
        v.check("(c) local restart", bool(restarts))
        if restarts:
            v.check("(c) restart within loop period + timeout", restarts[0] - downs[0] <= budget + 1)
            v.note(f"{dst} down at {downs[0]}, {src} local again at {restarts[0]}")

    remote_slots = [
        t for t, where in enumerate(rec.placements, start=1) if where.get(src) not in (None, src)
    ]
    cpu = [rec.row(t, src).cpu_pct for t in remote_slots]
    v.check("(d) workload ran remotely", bool(remote_slots))
    v.check("(d) source CPU below 5% while remote", all(c < 5 for c in cpu))
    v.note(f"max source CPU while remote {max(cpu, default=0):.1f}%")
    finish(v)


# -- 4: discovery and failure detection -------------------------------------


@pytest.fixture
def four_daemons():
    clock = VirtualScheduler()
    configs = [http_config(f"d{i}") for i in range(1, 5)]
    refs = [c.ref for c in configs]
    daemons = [
        http_daemon(dataclasses.replace(c, peers=[r for r in refs if r != c.ref]), scheduler=clock)
        for c in configs
    ]
    yield clock, daemons
    for d in daemons:
        d.shutdown()


def test_criterion_4_discovery_and_failure_detection(verdict, four_daemons):
    v = verdict(4, "killed daemon leaves scans and registries in time; scans ordered")
    clock, daemons = four_daemons
    hb = daemons[0].config.heartbeat_ms
    bound = 3 * hb + PROBE_TIMEOUT_MS

    for d in daemons:
        d.node.emit_heartbeat()
    orders_ok = True
    for d in daemons:
        first = [r.service_address for r in d.node.peers.discover()]
        orders_ok &= len(first) == 3 and first == sorted(first, key=address_key)
        for _ in range(19):
            orders_ok &= [r.service_address for r in d.node.peers.discover()] == first
    v.check("20 scans identical and ascending", orders_ok)

    clock.advance(hb // 2)
    victim, survivors = daemons[3], daemons[:3]
    victim.node.emit_heartbeat()
    killed_at = clock.now()
    victim.shutdown()

    gone_scan = gone_registry = None
    survivors_listed = True
    step = 100
    while clock.now() - killed_at <= 2 * bound:
        clock.advance(step)
        if (clock.now() - killed_at) % hb == 0:
            for d in survivors:
                d.node.emit_heartbeat()
        scans = [{r.node_id for r in d.node.peers.discover()} for d in survivors]
        regs = [{r.node_id for r in d.node.registry.live_peers()} for d in survivors]
        for d, scan, reg in zip(survivors, scans, regs):
            others = {s.config.node_id for s in survivors} - {d.config.node_id}
            survivors_listed &= others <= scan and others <= reg
        if gone_scan is None and all("d4" not in s for s in scans):
            gone_scan = clock.now() - killed_at
        if gone_registry is None and all("d4" not in r for r in regs):
            gone_registry = clock.now() - killed_at
        if gone_scan is not None and gone_registry is not None:
            break

    v.check("vanished from scans within bound", gone_scan is not None and gone_scan <= bound)
    v.check("vanished from registries within bound", gone_registry is not None and gone_registry <= bound)
    v.check("survivors stay listed", survivors_listed)
    v.note(f"scan {gone_scan} ms, registry {gone_registry} ms, bound {bound} ms")
    finish(v)


# -- 5: handshake transparency ----------------------------------------------


def wait_for(pred, timeout=5.0):
    end = time.monotonic() + timeout
    while time.monotonic() < end:
        if pred():
            return True
        time.sleep(0.02)
    return pred()


def test_criterion_5_flow_survives_controller_outage(verdict):
    v = verdict(5, "data flow continues with the destination controller down")
    periods = 35

    # in-process network on a virtual clock
    c = LocalCluster([40, 90], period_ms=1000)
    src, dst = c[0], c[1]
    src.control.start(dst.ref)
    c.net.disable_endpoint(dst.ref.controller_address)
    c.sample_every(src, 1000, periods * 1000)
    c.clock.run_until(periods * 1000 + 1000)
    log = src.service.actuation_log["deterrent"]
    v.check("virtual: one actuation per period", len(log) == periods)
    v.check("virtual: actuations from the remote workload", all("r:n2" in str(a) for a in log))

    # live daemons over loopback HTTP
    a = http_daemon(http_config("a", battery=40))
    b = http_daemon(http_config("b", battery=90, peers=[a.ref]))
    try:
        a.node.control.start(b.ref)
        b.stop_controller_endpoint()
        for _ in range(periods):
            a.node.sample("camera")
            time.sleep(0.03)
        got = wait_for(lambda: len(a.node.service.actuation_log["deterrent"]) >= periods)
        http_log = a.node.service.actuation_log["deterrent"]
        v.check("http: one actuation per period", got and len(http_log) == periods)
        v.check("http: actuations from the remote workload", all("r:b" in str(x) for x in http_log))
    finally:
        a.shutdown()
        b.shutdown()
    v.note(f"{periods} periods, virtual {len(log)}, http {len(http_log)} actuations")
    finish(v)


# -- 6: processed-input ratio -----------------------------------------------


def test_criterion_6_processed_input_ratio(verdict):
    v = verdict(6, "simulated drop rule matches the oracle; ratio nonincreasing in frequency")
    parts = []
    for service, period in [(400, 2000), (1500, 1000), (900, 500)]:
        oracle = drop_rule_oracle(service, period)
        rec = run_scenario(ratio_scenario(service, period))
        generated = sum(r.generated for r in rec.rows)
        sim = processed_input_ratio(rec)[float(period)]
        v.check(f"({service},{period}) 1000 inputs", generated == 1000)
        v.check(f"({service},{period}) within 1 pp", abs(sim - oracle) <= 1.0)
        parts.append(f"({service},{period}) sim {sim:.1f}% oracle {oracle:.1f}%")
    for service in (400, 900, 1500):
        ratios = [processed_input_ratio(run_scenario(ratio_scenario(service, p)))[float(p)]
                  for p in (2000, 1000, 500)]
        v.check(f"service {service} nonincreasing", all(x >= y for x, y in zip(ratios, ratios[1:])))
    v.note(", ".join(parts))
    finish(v)


# -- 7: determinism ---------------------------------------------------------


def test_criterion_7_determinism(verdict, tmp_path):
    v = verdict(7, "equal seeds give byte-identical metrics.csv")
    cases = {
        "case study": case_study(),
        "case study seed 7": case_study().with_seed(7),
        "planner instance": scenario_from_instance(random_instance(random.Random(5))).with_seed(3),
    }
    for name, sc in cases.items():
        blobs = []
        for k in range(2):
            path = tmp_path / f"run{k}.csv"
            write_metrics(run_scenario(sc), path)
            blobs.append(path.read_bytes())
        v.check(name, blobs[0] == blobs[1])
    v.note(f"{len(cases)} scenarios run twice")
    finish(v)


# -- 8: threshold semantics -------------------------------------------------


def cycle_trace(rng, cycles):
    """Battery crossing below alpha then above beta ``cycles`` times, monotone between turns."""
    level = rng.uniform(50.5, 100)
    trace = [level]
    for _ in range(cycles):
        for target in (rng.uniform(0, 50), rng.uniform(60.5, 100)):
            steps = rng.randint(1, 12)
            trace += [level + (target - level) * k / steps for k in range(1, steps)] + [target]
            level = target
    return trace


def test_criterion_8_threshold_semantics(verdict):
    v = verdict(8, "one offload per alpha crossing, one repatriation per beta crossing")
    rng = random.Random(8)
    traces = 300
    counts_ok = exclusive = True
    for _ in range(traces):
        cycles = rng.randint(1, 4)
        policy = EnergyAwarePolicy(PolicyParams())
        rt = FakeRuntime()
        peers = FakePeers([(peer(2), 95)])
        log = []
        for pct in cycle_trace(rng, cycles):
            flags = policy.step(pct, peers, rt, lambda kind, detail: log.append(kind))
            exclusive &= not (flags.local and flags.remote) and len(rt.running) <= 1
        moves = [k for k in log if k in ("offload", "repatriate")]
        counts_ok &= moves == ["offload", "repatriate"] * cycles
    v.check("offload/repatriate alternate once per crossing", counts_ok)
    v.check("never local and remote together", exclusive)
    v.note(f"{traces} traces of 1-4 cycles")
    finish(v)
