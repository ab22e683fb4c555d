import threading
import time

import pytest

from edgemesh.clock import VirtualScheduler
from edgemesh.core import NodeRef
from edgemesh.discovery import (
    HISTORY_LIMIT,
    AddressSpace,
    MalformedReport,
    Registry,
    address_key,
    discover_rpis,
)


def ref(i, port=5001):
    return NodeRef(f"n{i}", f"192.168.1.{i}:{port - 1}", f"192.168.1.{i}:{port}")


def presence_of(live):
    def probe(address):
        for r in live:
            if r.service_address == address:
                return {"alive": True, "node_id": r.node_id, "controller_address": r.controller_address}
        raise ConnectionError(address)

    return probe


def test_address_order_is_numeric():
    addrs = ["10.0.0.10:1", "10.0.0.9:1", "10.0.0.9:0", "9.255.0.1:5"]
    assert sorted(addrs, key=address_key) == ["9.255.0.1:5", "10.0.0.9:0", "10.0.0.9:1", "10.0.0.10:1"]


def test_three_live_one_dead_ascending():
    source = ref(1)
    peers = [ref(12), ref(3), ref(6), ref(5)]
    space = AddressSpace.from_endpoints(source, peers + [source])
    live = [ref(3), ref(6), ref(12)]
    found = discover_rpis(source, space, presence_of(live))
    assert found == live


def test_empty_and_alone():
    source = ref(1)
    assert discover_rpis(source, AddressSpace.from_endpoints(source, []), presence_of([])) == []
    alone = AddressSpace.from_endpoints(source, [source])
    assert alone.enumerated == []
    assert discover_rpis(source, alone, presence_of([source])) == []


def test_probe_failures_never_abort_the_scan():
    source = ref(1)
    space = AddressSpace.from_endpoints(source, [ref(2), ref(3), ref(4)])

    def probe(address):
        if address.startswith("192.168.1.2:"):
            raise TimeoutError
        if address.startswith("192.168.1.3:"):
            return None
        return {"alive": True, "node_id": "n4"}

    assert [r.node_id for r in discover_rpis(source, space, probe)] == ["n4"]


def test_concurrent_probes_keep_enumeration_order():
    source = ref(1)
    peers = [ref(i) for i in range(2, 10)]
    space = AddressSpace.from_endpoints(source, peers)
    seen_threads = set()

    def probe(address):
        seen_threads.add(threading.get_ident())
        # later addresses answer first
        time.sleep(0.002 * (20 - int(address.split(".")[3].split(":")[0])))
        return {"alive": True}

    results = [discover_rpis(source, space, probe, workers=8) for _ in range(3)]
    assert all(r == peers for r in results)
    assert len(seen_threads) > 1


def test_from_subnet_excludes_self():
    space = AddressSpace.from_subnet("10.1.0.5", "255.255.255.248", 5001, 5000)
    hosts = [r.service_address for r in space.enumerated]
    assert hosts == [f"10.1.0.{i}:5001" for i in (1, 2, 3, 4, 6)]


def report(node, ts, status=""):
    return {
        "node_id": node.node_id,
        "controller_address": node.controller_address,
        "service_address": node.service_address,
        "timestamp": ts,
        "exec_status": status,
    }


def test_registry_upsert_monotone_and_window():
    clock = VirtualScheduler()
    reg = Registry(clock.now, heartbeat_interval_ms=100)
    a, b = ref(2), ref(3)
    reg.update(report(b, 0))
    reg.update(report(a, 0, "busy"))
    assert reg.live_peers() == [a, b]
    reg.update(report(a, 50, "idle"))
    reg.update(report(a, 20, "stale"))
    assert reg.get("n2").last_seen == 50 and reg.get("n2").exec_status == "idle"
    clock.advance(300)
    # b last seen at 0: exactly at the window edge, still live
    assert reg.live_peers() == [a, b]
    clock.advance(1)
    assert reg.live_peers() == [a]
    assert reg.live_peers(exclude=["n2"]) == []
    clock.advance(50)
    assert reg.live_peers() == []


def test_registry_rejects_malformed_reports():
    reg = Registry(lambda: 0)
    with pytest.raises(MalformedReport):
        reg.update({"node_id": "x"})
    with pytest.raises(MalformedReport):
        reg.update({**report(ref(2), 0), "timestamp": "soon"})
    assert reg.rejected == 2
    assert reg.snapshot() == []


def test_registry_history_is_bounded():
    reg = Registry(lambda: 0)
    reg.update(report(ref(2), 0))
    for i in range(HISTORY_LIMIT + 10):
        reg.record_outcome("n2", i % 2 == 0, i)
    hist = reg.get("n2").history
    assert len(hist) == HISTORY_LIMIT
    assert hist[-1]["duration_ms"] == HISTORY_LIMIT + 9
    reg.record_outcome("nobody", True, 1)  # ignored
