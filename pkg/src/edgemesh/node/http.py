"""HTTP/JSON wire protocol: servers for Controller and Service, and a client.

Endpoints
---------
Controller: ``POST /container/start``, ``POST /container/stop``,
``GET /registry``, ``POST /registry/heartbeat``, ``GET /containers``.

Service: ``GET /state``, ``GET /presence``, ``GET /sensor/{id}``,
``POST /sensor/{id}/subscribe``, ``DELETE /subscription/{id}``,
``POST /actuate/{id}``, ``GET /actuator/{id}/log``.

Errors travel as ``{"error": <code>, "message": ...}`` with the status of the
matching :mod:`edgemesh.node.errors` class.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, List, Optional, Tuple

import requests

from ..discovery import MalformedReport
from .errors import BadRequest, NodeError, Unreachable, UnknownActuator, from_body

log = logging.getLogger(__name__)

CONTROL_TIMEOUT_S = 2.0
PROBE_TIMEOUT_S = 0.5

Route = Tuple[str, "re.Pattern", Callable]


class JsonServer:
    """A threaded HTTP server dispatching JSON requests to route functions."""

    def __init__(self, routes: List[Route], host: str = "127.0.0.1", port: int = 0, name: str = "http"):
        self.routes = routes
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                log.debug("%s %s", name, fmt % args)

            def _dispatch(self, method):
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length) if length else b""
                path = self.path.split("?", 1)[0]
                status, body = server.handle(method, path, raw)
                data = json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_GET(self):
                self._dispatch("GET")

            def do_POST(self):
                self._dispatch("POST")

            def do_DELETE(self):
                self._dispatch("DELETE")

        self.httpd = ThreadingHTTPServer((host, port), Handler)
        self.httpd.daemon_threads = True
        self.host, self.port = self.httpd.server_address[:2]
        self._thread = threading.Thread(target=self.httpd.serve_forever, name=name, daemon=True)

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def handle(self, method: str, path: str, raw: bytes):
        try:
            body = json.loads(raw) if raw else {}
        except json.JSONDecodeError:
            return 400, BadRequest("body is not JSON").to_body()
        for verb, pattern, fn in self.routes:
            if verb != method:
                continue
            match = pattern.fullmatch(path)
            if match:
                try:
                    return 200, fn(*match.groups(), body=body)
                except NodeError as exc:
                    return exc.status, exc.to_body()
                except (KeyError, TypeError, ValueError, MalformedReport) as exc:
                    return 400, BadRequest(str(exc)).to_body()
        return 404, {"error": "NotFound", "message": f"no route {method} {path}"}

    def start(self) -> "JsonServer":
        self._thread.start()
        return self

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()


def _route(method: str, pattern: str, fn: Callable) -> Route:
    return (method, re.compile(pattern), fn)


def controller_routes(controller) -> List[Route]:
    def start(body):
        handle = controller.start(
            body["image_ref"],
            body["source_service"],
            sensor_id=body.get("sensor_id"),
            actuator_id=body.get("actuator_id"),
            service_time_ms=body.get("service_time_ms"),
        )
        return handle.to_dict()

    return [
        _route("POST", r"/container/start", start),
        _route("POST", r"/container/stop", lambda body: controller.stop(body["image_ref"], body["source_service"])),
        _route("GET", r"/registry", lambda body: controller.registry.snapshot()),
        _route("POST", r"/registry/heartbeat", lambda body: controller.registry.update(body).to_dict()),
        _route("GET", r"/containers", lambda body: controller.exec_status()),
    ]


def service_routes(service) -> List[Route]:
    def actuation_log(actuator_id, body):
        if actuator_id not in service.actuation_log:
            raise UnknownActuator(actuator_id)
        return list(service.actuation_log[actuator_id])

    return [
        _route("GET", r"/state", lambda body: service.state().to_dict()),
        _route("GET", r"/presence", lambda body: service.presence()),
        _route("GET", r"/sensor/([^/]+)", lambda sid, body: service.pull(sid).to_dict()),
        _route(
            "POST",
            r"/sensor/([^/]+)/subscribe",
            lambda sid, body: {"subscription_id": service.subscribe(sid, body.get("callback"))},
        ),
        _route("DELETE", r"/subscription/([^/]+)", lambda sub, body: service.unsubscribe(sub)),
        _route("POST", r"/actuate/([^/]+)", lambda aid, body: service.actuate(aid, body.get("command") or {})),
        _route("GET", r"/actuator/([^/]+)/log", actuation_log),
    ]


class HttpTransport:
    """Client side of the wire protocol, plus callback endpoints for workloads."""

    def __init__(
        self,
        bind_host: str = "127.0.0.1",
        timeout: float = CONTROL_TIMEOUT_S,
        probe_timeout: float = PROBE_TIMEOUT_S,
    ):
        self.bind_host = bind_host
        self.timeout = timeout
        self.probe_timeout = probe_timeout
        self._callbacks = {}
        self._lock = threading.Lock()

    def _call(self, method: str, url: str, body: Optional[dict] = None, timeout: Optional[float] = None):
        if "://" not in url:
            url = "http://" + url
        try:
            resp = requests.request(method, url, json=body, timeout=timeout or self.timeout)
        except requests.RequestException as exc:
            raise Unreachable(f"{method} {url}: {exc}") from exc
        try:
            data = resp.json()
        except ValueError:
            raise NodeError(f"{method} {url}: non-JSON response ({resp.status_code})") from None
        if resp.status_code >= 400:
            raise from_body(data if isinstance(data, dict) else {})
        return data

    # controller
    def start_workload(self, controller: str, image_ref: str, source_service: str, **opts) -> dict:
        body = {"image_ref": image_ref, "source_service": source_service}
        body.update({k: v for k, v in opts.items() if v is not None})
        return self._call("POST", f"{controller}/container/start", body)

    def stop_workload(self, controller: str, image_ref: str, source_service: str) -> dict:
        return self._call(
            "POST", f"{controller}/container/stop", {"image_ref": image_ref, "source_service": source_service}
        )

    def registry(self, controller: str) -> list:
        return self._call("GET", f"{controller}/registry")

    def heartbeat(self, controller: str, report: dict) -> None:
        self._call("POST", f"{controller}/registry/heartbeat", report, timeout=self.probe_timeout)

    # service
    def state(self, service: str) -> dict:
        return self._call("GET", f"{service}/state", timeout=self.probe_timeout)

    def presence(self, service: str) -> dict:
        return self._call("GET", f"{service}/presence", timeout=self.probe_timeout)

    def sensor_pull(self, service: str, sensor_id: str) -> dict:
        return self._call("GET", f"{service}/sensor/{sensor_id}")

    def subscribe(self, service: str, sensor_id: str, callback: str) -> str:
        return self._call("POST", f"{service}/sensor/{sensor_id}/subscribe", {"callback": callback})[
            "subscription_id"
        ]

    def unsubscribe(self, service: str, sub_id: str) -> dict:
        return self._call("DELETE", f"{service}/subscription/{sub_id}")

    def actuate(self, service: str, actuator_id: str, command: dict) -> dict:
        return self._call("POST", f"{service}/actuate/{actuator_id}", {"command": command})

    def actuation_log(self, service: str, actuator_id: str) -> list:
        return self._call("GET", f"{service}/actuator/{actuator_id}/log")

    # callbacks
    def bind_callback(self, handler: Callable[[dict], dict]) -> str:
        server = JsonServer(
            [_route("POST", r"/push", lambda body: handler(body) or {})],
            host=self.bind_host,
            name="callback",
        ).start()
        endpoint = f"http://{server.address}/push"
        with self._lock:
            self._callbacks[endpoint] = server
        return endpoint

    def unbind_callback(self, endpoint: str) -> None:
        with self._lock:
            server = self._callbacks.pop(endpoint, None)
        if server is not None:
            server.shutdown()

    def push(self, callback: str, payload: dict) -> dict:
        return self._call("POST", callback, payload)

    def close(self) -> None:
        with self._lock:
            servers, self._callbacks = list(self._callbacks.values()), {}
        for s in servers:
            s.shutdown()
