"""Energy-aware resource management.

One call to :func:`manage_resource_step` is one pass of the greedy loop a
source node runs: start the workload locally while the battery is healthy,
offload it to the first peer above the selection floor once the battery
drops to the offload threshold, bring it back once the battery climbs above
the repatriation threshold, and drop the remote flag when the remote side
stops answering.

Peers and the workload runtime are reached through small provider objects so
the same loop drives the simulator and the live daemon.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Protocol

from .core import ContractError, NodeRef

log = logging.getLogger(__name__)


class PeerUnreachable(Exception):
    pass


class StartFailed(Exception):
    pass


@dataclass(frozen=True)
class PolicyParams:
    alpha: float = 50.0
    beta: float = 60.0
    gamma: float = 70.0
    loop_period: float = 1.0  # seconds
    remote_timeout: float = 3.0  # seconds

    def __post_init__(self):
        if not 0 < self.alpha <= self.beta <= 100:
            raise ContractError(f"need 0 < alpha <= beta <= 100, got {self.alpha}, {self.beta}")
        if not 0 < self.gamma <= 100:
            raise ContractError(f"need 0 < gamma <= 100, got {self.gamma}")
        if not self.loop_period > 0 or not self.remote_timeout > 0:
            raise ContractError("loop_period and remote_timeout must be positive")

    @classmethod
    def from_config(cls, data: dict) -> "PolicyParams":
        kwargs = {}
        for key in ("alpha", "beta", "gamma"):
            if key in data:
                kwargs[key] = float(data[key])
        if "loop_period_ms" in data:
            kwargs["loop_period"] = float(data["loop_period_ms"]) / 1000.0
        if "remote_timeout_ms" in data:
            kwargs["remote_timeout"] = float(data["remote_timeout_ms"]) / 1000.0
        return cls(**kwargs)

    def to_config(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "loop_period_ms": int(round(self.loop_period * 1000)),
            "remote_timeout_ms": int(round(self.remote_timeout * 1000)),
        }


@dataclass(frozen=True)
class ExecutionFlags:
    local: bool = False
    remote: bool = False
    selected: Optional[NodeRef] = None

    def __post_init__(self):
        if self.local and self.remote:
            raise ContractError("workload cannot run locally and remotely at once")


@dataclass(frozen=True)
class RemoteExecStatus:
    healthy: bool
    last_contact: int  # ms on the scenario clock


def check_remote_execution(status: RemoteExecStatus, timeout: float, now: float) -> bool:
    """True while the last contact is at most ``timeout`` old (inclusive)."""
    return now - status.last_contact <= timeout


class PeerProvider(Protocol):
    def discover(self) -> List[NodeRef]:
        """Candidate destinations in discovery order."""

    def battery(self, peer: NodeRef) -> float:
        """Battery percentage of ``peer``; raises PeerUnreachable."""


class RuntimeProvider(Protocol):
    """Starts and stops this node's workload on a given controller."""

    self_ref: NodeRef

    def start(self, target: NodeRef) -> None:
        ...

    def stop(self, target: NodeRef) -> None:
        ...

    def remote_healthy(self) -> bool:
        ...


EventSink = Callable[[str, dict], None]


def _noop(kind: str, detail: dict) -> None:
    pass


def select_destination(
    peers: PeerProvider, gamma: float, on_event: EventSink = _noop
) -> Optional[NodeRef]:
    """First-fit: the earliest discovered peer whose battery exceeds ``gamma``."""
    for peer in peers.discover():
        try:
            pct = peers.battery(peer)
        except PeerUnreachable:
            on_event("peer_unreachable", {"peer": peer.node_id})
            continue
        if pct > gamma:
            return peer
    return None


def manage_resource_step(
    flags: ExecutionFlags,
    battery_pct: float,
    params: PolicyParams,
    peers: PeerProvider,
    runtime: RuntimeProvider,
    on_event: EventSink = _noop,
) -> ExecutionFlags:
    """Run one iteration of the resource-management loop and return new flags."""
    if not 0 <= battery_pct <= 100:
        raise ContractError(f"battery_pct {battery_pct} outside [0, 100]")
    me = runtime.self_ref
    local, remote, selected = flags.local, flags.remote, flags.selected

    if battery_pct > params.alpha:
        if not local and not remote:
            if _try_start(runtime, me, on_event):
                local = True
                on_event("local_start", {"battery": battery_pct})
        elif not local and remote and battery_pct > params.beta:
            if _try_start(runtime, me, on_event):
                local = True
                _try_stop(runtime, selected, on_event)
                on_event(
                    "repatriate",
                    {"battery": battery_pct, "from": selected.node_id if selected else None},
                )
                remote = False
                selected = None
    elif not remote:
        target = select_destination(peers, params.gamma, on_event)
        started = False
        if target is not None:
            started = _try_start(runtime, target, on_event)
        if started:
            if local:
                _try_stop(runtime, me, on_event)
            local = False
            remote = True
            selected = target
            on_event("offload", {"battery": battery_pct, "to": target.node_id})
        elif not local:
            # nobody can take the workload: keep it here and retry next pass
            if _try_start(runtime, me, on_event):
                local = True
                on_event("fallback_local", {"battery": battery_pct})

    if remote and not runtime.remote_healthy():
        on_event("remote_failure", {"peer": selected.node_id if selected else None})
        # best effort: the destination may still be running it
        _try_stop(runtime, selected, on_event)
        remote = False
        selected = None

    return replace(flags, local=local, remote=remote, selected=selected)


def _try_start(runtime: RuntimeProvider, target: NodeRef, on_event: EventSink) -> bool:
    try:
        runtime.start(target)
    except (StartFailed, PeerUnreachable) as exc:
        log.info("start on %s failed: %s", target.node_id, exc)
        on_event("start_failed", {"target": target.node_id, "reason": str(exc)})
        return False
    return True


def _try_stop(runtime: RuntimeProvider, target: Optional[NodeRef], on_event: EventSink) -> None:
    if target is None:
        return
    try:
        runtime.stop(target)
    except Exception as exc:  # stop is advisory; the handle may already be gone
        log.debug("stop on %s failed: %s", target.node_id, exc)


class EnergyAwarePolicy:
    """Stateful wrapper that owns the flags between iterations.

    Any object with a compatible ``step`` method can stand in for this class
    in the node daemon and the simulator.
    """

    def __init__(self, params: PolicyParams):
        self.params = params
        self.flags = ExecutionFlags()

    def step(
        self,
        battery_pct: float,
        peers: PeerProvider,
        runtime: RuntimeProvider,
        on_event: EventSink = _noop,
    ) -> ExecutionFlags:
        self.flags = manage_resource_step(
            self.flags, battery_pct, self.params, peers, runtime, on_event
        )
        return self.flags

    def reset(self) -> None:
        self.flags = ExecutionFlags()
