import pytest

from edgemesh.node import NoSampleYet, NotFound, Refused, UnknownActuator, UnknownSensor, UnknownSubscription
from edgemesh.node.errors import BadRequest, Unreachable

from nodekit import LocalCluster

IMG = "edgemesh/deterrent:latest"


def test_local_start_streams_within_one_period():
    c = LocalCluster([90])
    n = c[0]
    handle = n.controller.start(IMG, n.ref.service_address, service_time_ms=100)
    assert handle.runtime_id.startswith("l:n1")
    c.sample_every(n, 1000, 5000)
    c.clock.run_until(1001)
    log = n.service.actuation_log["deterrent"]
    assert len(log) == 1 and log[0]["seq"] == 1
    assert log[0]["received_at"] == 100


def test_remote_start_actuates_source_with_workload_id():
    c = LocalCluster([90, 90])
    src, dst = c[0], c[1]
    src.control.start(dst.ref)
    c.sample_every(src, 1000, 3000)
    c.clock.run_until(4000)
    log = src.service.actuation_log["deterrent"]
    assert [e["seq"] for e in log] == [1, 2, 3]
    assert all(e["workload_id"].startswith("r:n2") for e in log)
    # each input crosses the link twice: push then actuation, 5 ms each
    assert [e["received_at"] - e["generated_at"] for e in log] == [410, 410, 410]
    assert dst.controller.load() == (1, 0)
    assert src.controller.load() == (0, 0)
    assert dst.service.presence()["exec_status"][0]["source_service"] == src.ref.service_address


def test_admission_refuses_drained_or_full_destination():
    c = LocalCluster([90, 40, 90, 90])
    with pytest.raises(Refused):
        c[1].controller.start(IMG, c[0].ref.service_address)
    dst = c[3]
    dst.controller.start(IMG, c[0].ref.service_address)
    dst.controller.start(IMG, c[1].ref.service_address)
    with pytest.raises(Refused):
        dst.controller.start(IMG, c[2].ref.service_address)
    # same pair again is idempotent, not a third workload
    assert dst.controller.start(IMG, c[0].ref.service_address).runtime_id.startswith("r:n4")
    # local starts ignore the battery floor
    assert c[1].controller.start(IMG, c[1].ref.service_address)


def test_stop_ends_actuations_and_is_not_repeatable():
    c = LocalCluster([90, 90])
    src, dst = c[0], c[1]
    src.control.start(dst.ref)
    c.sample_every(src, 1000, 10000)
    c.clock.run_until(2500)
    src.control.stop(dst.ref)
    count = len(src.service.actuation_log["deterrent"])
    c.clock.run_until(3500 + 1000)
    assert len(src.service.actuation_log["deterrent"]) == count
    assert src.service.subscriptions() == []
    with pytest.raises(NotFound):
        src.control.stop(dst.ref)
    with pytest.raises(NotFound):
        dst.controller.stop("other/image", src.ref.service_address)
    assert dst.controller.history[-1]["source_service"] == src.ref.service_address


def test_state_reflects_battery_and_cpu():
    c = LocalCluster([50, 100])
    assert c[0].service.state().battery_pct == 50
    assert c[1].service.state().battery_pct == 100
    idle = c[0].service.state().cpu_pct
    c[0].controller.start(IMG, c[0].ref.service_address)
    assert c[0].service.state().cpu_pct == pytest.approx(idle + 30)


def test_pull_semantics():
    c = LocalCluster([90])
    s = c[0].service
    with pytest.raises(NoSampleYet):
        s.pull("camera")
    with pytest.raises(UnknownSensor):
        s.pull("lidar")
    seqs = []
    for _ in range(3):
        s.publish("camera")
        seqs.append(s.pull("camera").seq)
        seqs.append(s.pull("camera").seq)
    assert seqs == sorted(seqs) and seqs[0] == seqs[1]


def test_subscribe_deliveries_in_order_and_at_most_once():
    c = LocalCluster([90])
    n = c[0]
    got = []
    transport = c.net.view("n1")
    cb = transport.bind_callback(lambda p: got.append(p["seq"]) or {})
    sub = n.service.subscribe("camera", cb)
    assert n.service.subscribe("camera", cb) == sub
    for _ in range(5):
        n.sample("camera")
    c.clock.run_until(1)
    assert got == [1, 2, 3, 4, 5]
    n.service.unsubscribe(sub)
    n.sample("camera")
    c.clock.run_until(2)
    assert got == [1, 2, 3, 4, 5]
    with pytest.raises(UnknownSubscription):
        n.service.unsubscribe(sub)
    with pytest.raises(UnknownSensor):
        n.service.subscribe("lidar", cb)
    with pytest.raises(BadRequest):
        n.service.subscribe("camera", "")


def test_failed_delivery_is_retried_once_then_dropped():
    c = LocalCluster([90])
    n = c[0]
    calls = []

    def flaky(callback, payload):
        calls.append(payload["seq"])
        if len(calls) <= 3:
            raise Unreachable("down")
        return {}

    n.service.deliver = flaky
    n.service.subscribe("camera", "cb://x")
    n.sample("camera")  # two failed attempts: dropped
    n.sample("camera")  # fails once then succeeds
    n.sample("camera")
    assert calls == [1, 1, 2, 2, 3]
    assert n.service.dropped_deliveries == 1


def test_actuators():
    c = LocalCluster([90], actuators=("deterrent", "siren"))
    s = c[0].service
    with pytest.raises(UnknownActuator):
        s.actuate("laser", {"on": True})
    s.actuate("deterrent", {"on": True})
    s.actuate("siren", {"on": True})
    assert len(s.actuation_log["deterrent"]) == 1 and len(s.actuation_log["siren"]) == 1


def test_unreachable_peer_and_power_off():
    c = LocalCluster([90, 90])
    src, dst = c[0], c[1]
    src.control.start(dst.ref)
    c.net.set_up("n2", False)
    dst.power_off()
    with pytest.raises(Unreachable):
        c.net.view("n1").state(dst.ref.service_address)
    assert dst.controller.load() == (0, 0)
    assert [r.node_id for r in src.peers.discover()] == []


def test_disabled_controller_keeps_data_plane():
    c = LocalCluster([90, 90])
    src, dst = c[0], c[1]
    src.control.start(dst.ref)
    c.net.disable_endpoint(dst.ref.controller_address)
    c.sample_every(src, 1000, 40000)
    c.clock.run_until(41000)
    assert len(src.service.actuation_log["deterrent"]) == 40
    with pytest.raises(Unreachable):
        c.net.view("n1").start_workload(dst.ref.controller_address, IMG, src.ref.service_address)


def test_policy_offloads_through_node_objects():
    c = LocalCluster([45, 75, 95])
    src = c[0]
    events = []
    src.policy_step(lambda k, d: events.append((k, d.get("to"))))
    # first-fit by address: n2 is earliest above gamma
    assert events == [("offload", "n2")]
    assert src.peers.queried == ["n2"]


def test_heartbeats_feed_registries():
    c = LocalCluster([90, 90, 90], heartbeat_ms=1000)
    for n in c.nodes:
        assert n.emit_heartbeat() == 2
    assert [r.node_id for r in c[0].registry.live_peers()] == ["n2", "n3"]
    c.net.set_up("n3", False)
    for _ in range(3):
        c.clock.advance(1000)
        c[1].emit_heartbeat()
    # window is inclusive: still listed exactly three beats after the last report
    assert [r.node_id for r in c[0].registry.live_peers()] == ["n2", "n3"]
    c.clock.advance(1)
    assert [r.node_id for r in c[0].registry.live_peers()] == ["n2"]
