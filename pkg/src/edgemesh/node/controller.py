"""The per-node Controller: starts and stops workloads, hosts the registry.

A start request names the microservice image and the Service of the node
that owns the data. The Controller launches the workload with that address
injected; the workload subscribes to the source directly, so once the start
returns the Controller plays no further part in the data path.

Requests on behalf of another node are refused while this node's own
battery is at or below the selection floor, or when it already runs its
maximum number of workloads.
"""

from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

from ..discovery import Registry
from .adapters import RuntimeAdapter, WorkloadArgs
from .errors import NotFound, Refused
from .service import Service

log = logging.getLogger(__name__)

MAX_WORKLOADS = 2


@dataclass(frozen=True)
class WorkloadHandle:
    image_ref: str
    source_service_address: str
    runtime_id: str
    started_at: int
    sensor_id: str = ""
    actuator_id: str = ""

    def to_dict(self) -> dict:
        return {
            "image_ref": self.image_ref,
            "source_service": self.source_service_address,
            "runtime_id": self.runtime_id,
            "started_at": self.started_at,
            "sensor_id": self.sensor_id,
            "actuator_id": self.actuator_id,
        }


@dataclass(frozen=True)
class WorkloadDefaults:
    sensor_id: str = "camera"
    actuator_id: str = "deterrent"
    service_time_ms: float = 400.0


class Controller:
    def __init__(
        self,
        node_id: str,
        service: Service,
        runtime: RuntimeAdapter,
        registry: Registry,
        clock: Callable[[], int],
        gamma: float = 70.0,
        max_workloads: int = MAX_WORKLOADS,
        defaults: WorkloadDefaults = WorkloadDefaults(),
    ):
        self.node_id = node_id
        self.service = service
        self.runtime = runtime
        self.registry = registry
        self.clock = clock
        self.gamma = gamma
        self.max_workloads = max_workloads
        self.defaults = defaults
        self._handles: Dict[Tuple[str, str], WorkloadHandle] = {}
        self._lock = threading.RLock()
        self._ids = itertools.count(1)
        self.history: List[dict] = []
        service.exec_status_source = self.exec_status

    def is_local(self, source_service: str) -> bool:
        return source_service == self.service.service_address

    def start(
        self,
        image_ref: str,
        source_service: str,
        sensor_id: Optional[str] = None,
        actuator_id: Optional[str] = None,
        service_time_ms: Optional[float] = None,
    ) -> WorkloadHandle:
        key = (image_ref, source_service)
        with self._lock:
            existing = self._handles.get(key)
            if existing is not None:
                return existing
            if len(self._handles) >= self.max_workloads:
                raise Refused(f"{self.node_id} overloaded ({len(self._handles)} workloads)")
            local = self.is_local(source_service)
            if not local:
                battery = self.service.energy.percent()
                if battery <= self.gamma:
                    raise Refused(
                        f"{self.node_id} battery {battery:.1f}% at or below {self.gamma}%"
                    )
            prefix = "l" if local else "r"
            workload_id = f"{prefix}:{self.node_id}:{next(self._ids)}"
            args = WorkloadArgs(
                workload_id=workload_id,
                image_ref=image_ref,
                source_service=source_service,
                sensor_id=sensor_id or self.defaults.sensor_id,
                actuator_id=actuator_id or self.defaults.actuator_id,
                service_time_ms=float(service_time_ms or self.defaults.service_time_ms),
            )
            runtime_id = self.runtime.launch(args)
            handle = WorkloadHandle(
                image_ref=image_ref,
                source_service_address=source_service,
                runtime_id=runtime_id,
                started_at=self.clock(),
                sensor_id=args.sensor_id,
                actuator_id=args.actuator_id,
            )
            self._handles[key] = handle
            log.info("started %s for %s on %s", image_ref, source_service, self.node_id)
            return handle

    def stop(self, image_ref: str, source_service: str) -> dict:
        key = (image_ref, source_service)
        with self._lock:
            handle = self._handles.pop(key, None)
            if handle is None:
                raise NotFound(f"no {image_ref} running for {source_service} on {self.node_id}")
            self.runtime.terminate(handle.runtime_id)
            now = self.clock()
            record = {**handle.to_dict(), "stopped_at": now}
            self.history.append(record)
            self._record_outcome(handle, now)
        return {"stopped": handle.runtime_id, "at": now}

    def _record_outcome(self, handle: WorkloadHandle, now: int) -> None:
        for entry in self.registry.snapshot():
            if entry["service_address"] == handle.source_service_address:
                self.registry.record_outcome(entry["node_id"], True, now - handle.started_at)

    def handles(self) -> List[WorkloadHandle]:
        with self._lock:
            return list(self._handles.values())

    def load(self) -> Tuple[int, int]:
        """``(hosted, locally initiated)`` workload counts."""
        with self._lock:
            hosted = len(self._handles)
            local = sum(1 for (_, src) in self._handles if self.is_local(src))
        return hosted, local

    def exec_status(self) -> List[dict]:
        return [h.to_dict() for h in self.handles()]

    def halt_all(self) -> None:
        """Terminate every workload without recording outcomes (power loss)."""
        with self._lock:
            handles, self._handles = list(self._handles.values()), {}
        for h in handles:
            self.runtime.terminate(h.runtime_id)
