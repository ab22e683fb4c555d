"""Synthetic microservice: subscribe to a sensor, process, actuate.

An input that arrives while the previous one is still being processed is
discarded rather than queued. Each completed input yields exactly one
actuation command to the source node's Service.

Run as ``python -m edgemesh.node.workload`` this module hosts one workload
in its own process, which is what :class:`SubprocessRuntime` launches.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading

from .adapters import WorkloadArgs
from .errors import NodeError, Unreachable

log = logging.getLogger(__name__)


class Workload:
    def __init__(self, args: WorkloadArgs, transport, scheduler):
        self.args = args
        self.transport = transport
        self.scheduler = scheduler
        self.callback = None
        self.subscription = None
        self.busy = False
        self.stopped = False
        self.received = 0
        self.dropped = 0
        self.completed = 0
        self._lock = threading.Lock()

    def start(self) -> None:
        self.callback = self.transport.bind_callback(self.on_sample)
        self.subscription = self.transport.subscribe(
            self.args.source_service, self.args.sensor_id, self.callback
        )

    def on_sample(self, payload: dict) -> dict:
        with self._lock:
            if self.stopped:
                raise Unreachable(f"workload {self.args.workload_id} stopped")
            self.received += 1
            if self.busy:
                self.dropped += 1
                return {"accepted": False}
            self.busy = True
        self.scheduler.call_later(self.args.service_time_ms, self._finish, payload)
        return {"accepted": True}

    def _finish(self, payload: dict) -> None:
        with self._lock:
            self.busy = False
            if self.stopped:
                return
            self.completed += 1
        command = {
            "action": "deter",
            "workload_id": self.args.workload_id,
            "sensor_id": payload.get("sensor_id"),
            "seq": payload.get("seq"),
            "generated_at": payload.get("timestamp"),
        }
        try:
            self.transport.actuate(self.args.source_service, self.args.actuator_id, command)
        except NodeError as exc:
            log.debug("actuation from %s lost: %s", self.args.workload_id, exc)

    def stop(self) -> None:
        with self._lock:
            if self.stopped:
                return
            self.stopped = True
        if self.subscription is not None:
            try:
                self.transport.unsubscribe(self.args.source_service, self.subscription)
            except NodeError:
                pass
        if self.callback is not None:
            self.transport.unbind_callback(self.callback)


def main(argv=None) -> int:
    from ..clock import RealTimeScheduler
    from .http import HttpTransport

    parser = argparse.ArgumentParser(prog="edgemesh-workload")
    parser.add_argument("--workload-id", required=True)
    parser.add_argument("--image-ref", default="edgemesh/deterrent:latest")
    parser.add_argument("--source", required=True)
    parser.add_argument("--sensor", required=True)
    parser.add_argument("--actuator", required=True)
    parser.add_argument("--service-time-ms", type=float, default=400.0)
    parser.add_argument("--bind", default="127.0.0.1")
    ns = parser.parse_args(argv)

    args = WorkloadArgs(
        workload_id=ns.workload_id,
        image_ref=ns.image_ref,
        source_service=ns.source,
        sensor_id=ns.sensor,
        actuator_id=ns.actuator,
        service_time_ms=ns.service_time_ms,
    )
    scheduler = RealTimeScheduler()
    transport = HttpTransport(bind_host=ns.bind)
    workload = Workload(args, transport, scheduler)
    done = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: done.set())
    signal.signal(signal.SIGINT, lambda *_: done.set())
    try:
        workload.start()
    except Exception as exc:
        print(json.dumps({"ready": False, "error": str(exc)}), flush=True)
        return 1
    print(json.dumps({"ready": True, "callback": workload.callback}), flush=True)
    done.wait()
    workload.stop()
    scheduler.close()
    transport.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
