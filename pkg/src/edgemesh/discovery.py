"""Peer discovery by address scan, and the registry of peers seen alive.

A scan enumerates every candidate address of the source's subnet (or the
endpoint list a scenario declares), asks each candidate's service for its
presence and keeps those that answer, in ascending address order.

The registry is fed by presence heartbeats. Entries that miss three beats
drop out of :meth:`Registry.live_peers`.
"""

from __future__ import annotations

import ipaddress
import threading
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, Iterable, List, Optional, Sequence

from .core import NodeRef

HEARTBEAT_INTERVAL_MS = 2000
MISSED_BEATS = 3
PROBE_TIMEOUT_MS = 500
HISTORY_LIMIT = 64

# probe(service_address) -> presence body, or None when the candidate is absent
Probe = Callable[[str], Optional[dict]]


def address_key(address: str):
    """Sort key placing ``host:port`` endpoints in ascending numeric order."""
    host, _, port = address.rpartition(":")
    try:
        ip = int(ipaddress.ip_address(host))
        return (0, ip, int(port or 0), "")
    except ValueError:
        return (1, 0, int(port) if port.isdigit() else 0, host)


@dataclass
class AddressSpace:
    interface_address: str
    netmask: str
    enumerated: List[NodeRef] = field(default_factory=list)

    @classmethod
    def from_endpoints(cls, source: NodeRef, endpoints: Iterable) -> "AddressSpace":
        """Build a space from a declared endpoint list (dicts or NodeRefs)."""
        refs = [e if isinstance(e, NodeRef) else NodeRef.from_dict(e) for e in endpoints]
        refs = [
            r
            for r in refs
            if r.service_address != source.service_address and r.node_id != source.node_id
        ]
        refs.sort(key=lambda r: address_key(r.service_address))
        host = source.service_address.rpartition(":")[0]
        return cls(interface_address=host, netmask="", enumerated=refs)

    @classmethod
    def from_subnet(
        cls,
        interface_address: str,
        netmask: str,
        service_port: int,
        controller_port: int,
        max_hosts: int = 1024,
    ) -> "AddressSpace":
        """Enumerate every host of the interface's subnet except itself."""
        network = ipaddress.ip_network(f"{interface_address}/{netmask}", strict=False)
        own = ipaddress.ip_address(interface_address)
        refs = []
        for host in network.hosts():
            if host == own:
                continue
            if len(refs) >= max_hosts:
                break
            refs.append(
                NodeRef(
                    node_id=str(host),
                    controller_address=f"{host}:{controller_port}",
                    service_address=f"{host}:{service_port}",
                )
            )
        return cls(interface_address=interface_address, netmask=netmask, enumerated=refs)


def discover_rpis(
    source: NodeRef, space: AddressSpace, probe: Probe, workers: int = 8
) -> List[NodeRef]:
    """Return the candidates of ``space`` that answer a presence probe.

    Probes may run concurrently; results keep enumeration order. A probe that
    raises or returns ``None`` marks the candidate absent.
    """
    candidates = [
        c for c in space.enumerated if c.service_address != source.service_address
    ]
    if not candidates:
        return []

    def ask(candidate: NodeRef):
        try:
            return probe(candidate.service_address)
        except Exception:
            return None

    if workers > 1 and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(candidates))) as pool:
            answers = list(pool.map(ask, candidates))
    else:
        answers = [ask(c) for c in candidates]

    found = []
    for candidate, answer in zip(candidates, answers):
        if not answer or not answer.get("alive"):
            continue
        node_id = answer.get("node_id") or candidate.node_id
        if node_id == source.node_id:
            continue
        found.append(
            NodeRef(
                node_id=node_id,
                controller_address=answer.get("controller_address")
                or candidate.controller_address,
                service_address=candidate.service_address,
            )
        )
    return found


class MalformedReport(ValueError):
    pass


@dataclass
class RegistryEntry:
    node: NodeRef
    last_seen: int
    exec_status: str = ""
    history: Deque[dict] = field(default_factory=lambda: deque(maxlen=HISTORY_LIMIT))

    def to_dict(self) -> dict:
        return {
            **self.node.to_dict(),
            "last_seen": self.last_seen,
            "exec_status": self.exec_status,
            "history": list(self.history),
        }


class Registry:
    """Thread-safe table of peers keyed by node id.

    ``clock`` returns the current time in integer milliseconds.
    """

    def __init__(
        self,
        clock: Callable[[], int],
        heartbeat_interval_ms: int = HEARTBEAT_INTERVAL_MS,
        missed_beats: int = MISSED_BEATS,
    ):
        self._clock = clock
        self._lock = threading.Lock()
        self._entries: Dict[str, RegistryEntry] = {}
        self.window_ms = heartbeat_interval_ms * missed_beats
        self.rejected = 0

    def update(self, report: dict) -> RegistryEntry:
        """Upsert an entry from a presence report.

        Reports older than what is already recorded for a node are ignored.
        """
        try:
            node = NodeRef(
                node_id=str(report["node_id"]),
                controller_address=str(report["controller_address"]),
                service_address=str(report["service_address"]),
            )
            timestamp = int(report["timestamp"])
            exec_status = report.get("exec_status", "")
            if not isinstance(exec_status, str):
                exec_status = ",".join(map(str, exec_status))
        except (KeyError, TypeError, ValueError) as exc:
            with self._lock:
                self.rejected += 1
            raise MalformedReport(str(exc)) from exc

        with self._lock:
            entry = self._entries.get(node.node_id)
            if entry is None:
                entry = RegistryEntry(node=node, last_seen=timestamp, exec_status=exec_status)
                self._entries[node.node_id] = entry
            elif timestamp >= entry.last_seen:
                entry.node = node
                entry.last_seen = timestamp
                entry.exec_status = exec_status
            return entry

    def record_outcome(self, node_id: str, success: bool, duration_ms: int) -> None:
        with self._lock:
            entry = self._entries.get(node_id)
            if entry is not None:
                entry.history.append({"success": bool(success), "duration_ms": int(duration_ms)})

    def _prune(self, now: int) -> None:
        stale = [k for k, e in self._entries.items() if now - e.last_seen > self.window_ms]
        for k in stale:
            del self._entries[k]

    def live_peers(self, exclude: Sequence[str] = ()) -> List[NodeRef]:
        """Peers heard from within the liveness window, ascending by address."""
        now = self._clock()
        with self._lock:
            self._prune(now)
            refs = [e.node for k, e in self._entries.items() if k not in exclude]
        return sorted(refs, key=lambda r: address_key(r.service_address))

    def get(self, node_id: str) -> Optional[RegistryEntry]:
        with self._lock:
            return self._entries.get(node_id)

    def snapshot(self) -> List[dict]:
        now = self._clock()
        with self._lock:
            self._prune(now)
            entries = sorted(self._entries.values(), key=lambda e: address_key(e.node.service_address))
            return [e.to_dict() for e in entries]
