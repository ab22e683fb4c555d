"""Pluggable back ends for energy, host metrics and workload execution."""

from __future__ import annotations

import json
import logging
import shlex
import subprocess
import sys
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Protocol

from ..core import EnergyState, slot_consumption, step_battery
from .errors import RuntimeFailure

log = logging.getLogger(__name__)


# -- energy -----------------------------------------------------------------


class EnergyAdapter(Protocol):
    def percent(self) -> float:
        ...


class VirtualBattery:
    """Battery driven by the slot energy model.

    The simulator calls :meth:`step` once per slot; a live daemon with a
    virtual battery calls it on its own timer.
    """

    def __init__(self, state: EnergyState):
        self.state = state
        self._lock = threading.Lock()

    def percent(self) -> float:
        with self._lock:
            return self.state.percent

    def step(self, solar_input: float, hosted: int, local: int):
        """Apply one slot; returns ``(consumption, active)``."""
        with self._lock:
            consumption = slot_consumption(
                self.state.compute_cost_per_ms, self.state.network_cost_per_ms, hosted, local
            )
            self.state, active = step_battery(self.state, solar_input, consumption)
            return consumption, active


class ProbeEnergy:
    """Battery percentage read from an external probe.

    ``source`` is either a callable, a path to a file holding a number, or a
    shell command printing one.
    """

    def __init__(self, source):
        self.source = source

    def percent(self) -> float:
        if callable(self.source):
            value = self.source()
        elif isinstance(self.source, (str, Path)) and Path(self.source).exists():
            value = Path(self.source).read_text().strip()
        else:
            out = subprocess.run(
                shlex.split(str(self.source)), capture_output=True, text=True, timeout=5, check=True
            )
            value = out.stdout.strip()
        return min(100.0, max(0.0, float(value)))


# -- host metrics -----------------------------------------------------------


class HostAdapter(Protocol):
    def cpu_pct(self, workloads: int) -> float:
        ...

    def mem_pct(self, workloads: int) -> float:
        ...


@dataclass
class SimulatedHost:
    """CPU use as a fixed share per hosted workload over a framework floor."""

    per_workload_pct: float = 30.0
    floor_pct: float = 2.0
    up: bool = True

    def cpu_pct(self, workloads: int) -> float:
        if not self.up:
            return 0.0
        return min(100.0, self.floor_pct + self.per_workload_pct * workloads)

    def mem_pct(self, workloads: int) -> float:
        return 0.0


class PsutilHost:
    def cpu_pct(self, workloads: int) -> float:
        import psutil

        return float(psutil.cpu_percent(interval=None))

    def mem_pct(self, workloads: int) -> float:
        import psutil

        return float(psutil.virtual_memory().percent)


# -- workload runtimes ------------------------------------------------------


@dataclass(frozen=True)
class WorkloadArgs:
    workload_id: str
    image_ref: str
    source_service: str
    sensor_id: str
    actuator_id: str
    service_time_ms: float


class RuntimeAdapter(Protocol):
    def launch(self, args: WorkloadArgs) -> str:
        """Start a workload and return its runtime id; raises RuntimeFailure."""

    def terminate(self, runtime_id: str) -> None:
        ...

    def running(self) -> List[str]:
        ...


class InProcessRuntime:
    """Workloads as objects inside the daemon, timed by its scheduler."""

    def __init__(self, transport, scheduler):
        self.transport = transport
        self.scheduler = scheduler
        self._workloads: Dict[str, object] = {}
        self._lock = threading.Lock()

    def launch(self, args: WorkloadArgs) -> str:
        from .workload import Workload  # workload.py imports this module

        workload = Workload(args, self.transport, self.scheduler)
        try:
            workload.start()
        except Exception as exc:
            workload.stop()
            raise RuntimeFailure(f"workload {args.workload_id} failed to start: {exc}") from exc
        with self._lock:
            self._workloads[args.workload_id] = workload
        return args.workload_id

    def terminate(self, runtime_id: str) -> None:
        with self._lock:
            workload = self._workloads.pop(runtime_id, None)
        if workload is not None:
            workload.stop()

    def running(self) -> List[str]:
        with self._lock:
            return list(self._workloads)

    def get(self, runtime_id: str):
        with self._lock:
            return self._workloads.get(runtime_id)


class SubprocessRuntime:
    """Each workload is a separate ``python -m edgemesh.node.workload`` process."""

    def __init__(self, bind_host: str = "127.0.0.1", python: str = sys.executable):
        self.bind_host = bind_host
        self.python = python
        self._procs: Dict[str, subprocess.Popen] = {}
        self._lock = threading.Lock()

    def command(self, args: WorkloadArgs) -> List[str]:
        return [
            self.python,
            "-m",
            "edgemesh.node.workload",
            "--workload-id", args.workload_id,
            "--image-ref", args.image_ref,
            "--source", args.source_service,
            "--sensor", args.sensor_id,
            "--actuator", args.actuator_id,
            "--service-time-ms", str(args.service_time_ms),
            "--bind", self.bind_host,
        ]

    def launch(self, args: WorkloadArgs) -> str:
        try:
            proc = subprocess.Popen(
                self.command(args),
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
            )
        except OSError as exc:
            raise RuntimeFailure(str(exc)) from exc
        # the child prints one JSON line once it has subscribed
        line = proc.stdout.readline()
        try:
            ready = json.loads(line)
        except json.JSONDecodeError:
            proc.kill()
            raise RuntimeFailure(f"workload process exited early: {line!r}") from None
        if not ready.get("ready"):
            proc.kill()
            raise RuntimeFailure(ready.get("error", "workload not ready"))
        with self._lock:
            self._procs[args.workload_id] = proc
        return args.workload_id

    def terminate(self, runtime_id: str) -> None:
        with self._lock:
            proc = self._procs.pop(runtime_id, None)
        if proc is None:
            return
        proc.terminate()
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()

    def running(self) -> List[str]:
        with self._lock:
            return [k for k, p in self._procs.items() if p.poll() is None]


class EngineRuntime:
    """Thin shim over a container engine CLI (``docker`` by default).

    The workload contract is passed as environment variables; the image is
    expected to honour them.
    """

    def __init__(self, engine: str = "docker", extra_args: Optional[List[str]] = None):
        self.engine = engine
        self.extra_args = list(extra_args or [])
        self._ids: Dict[str, str] = {}
        self._lock = threading.Lock()

    def command(self, args: WorkloadArgs) -> List[str]:
        env = {
            "EDGEMESH_WORKLOAD_ID": args.workload_id,
            "EDGEMESH_SOURCE": args.source_service,
            "EDGEMESH_SENSOR": args.sensor_id,
            "EDGEMESH_ACTUATOR": args.actuator_id,
            "EDGEMESH_SERVICE_TIME_MS": str(args.service_time_ms),
        }
        cmd = [self.engine, "run", "-d", "--rm", "--network", "host"]
        for key, value in env.items():
            cmd += ["-e", f"{key}={value}"]
        return cmd + self.extra_args + [args.image_ref]

    def launch(self, args: WorkloadArgs) -> str:
        try:
            out = subprocess.run(self.command(args), capture_output=True, text=True, timeout=60)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise RuntimeFailure(str(exc)) from exc
        if out.returncode != 0:
            raise RuntimeFailure(out.stderr.strip() or f"{self.engine} exited {out.returncode}")
        container = out.stdout.strip().splitlines()[-1] if out.stdout.strip() else args.workload_id
        with self._lock:
            self._ids[args.workload_id] = container
        return args.workload_id

    def terminate(self, runtime_id: str) -> None:
        with self._lock:
            container = self._ids.pop(runtime_id, None)
        if container is not None:
            subprocess.run([self.engine, "rm", "-f", container], capture_output=True, timeout=60)

    def running(self) -> List[str]:
        with self._lock:
            return list(self._ids)
