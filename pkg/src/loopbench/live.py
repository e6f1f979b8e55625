"""Live mode: the local cloud and the actuator as JSON-over-HTTP services.

Framework routes::

    POST /registry/register        ServiceDescriptor JSON -> 201 | 409
    GET  /registry/lookup?kind=K   -> 200 descriptor | 404
    POST /authorization/rules      {consumer, provider, allowed} -> 201
    POST /authorization/check      {consumer, provider} -> 200 {"allowed": bool}
    POST /orchestration/request    {source, value[, request_id]} -> 200 {"target": ...} | 403 | 404
    GET  /orchestration/counters   -> 200 counter snapshot

Actuator routes::

    POST /actuator/value           {value[, request_id]} -> 200 {"decision", "timestamp_us"}
    GET  /actuator/state           -> 200 {"active", "activations"}
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .cloud import (
    Decision,
    LocalCloud,
    OrchestrationRequest,
    OrchestrationResponse,
    ServiceDescriptor,
)
from .devices import ActuatorNode, run_loop
from .errors import (
    AlreadyRegistered,
    LocalCloudError,
    NotFound,
    RunAborted,
    Unauthorized,
    UnknownSource,
)
from .scheduler import Scheduler, WallClock

log = logging.getLogger(__name__)

FRAMEWORK_URL_ENV = "LOOPBENCH_FRAMEWORK_URL"
TIMEOUT_S = 10.0


class EpochClock:
    """Microseconds since the Unix epoch; used for registration stamps."""

    mode = "wall"

    @property
    def now(self) -> int:
        return time.time_ns() // 1000


class BadRequest(ValueError):
    pass


class _JSONHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    routes: dict = {}

    def log_message(self, fmt, *args):
        log.debug("%s - " + fmt, self.address_string(), *args)

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            data = json.loads(raw or b"{}")
        except json.JSONDecodeError as exc:
            raise BadRequest(f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise BadRequest("body must be a JSON object")
        return data

    def _send(self, status: int, payload) -> None:
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _dispatch(self, method: str) -> None:
        url = urllib.parse.urlsplit(self.path)
        route = self.routes.get((method, url.path))
        if route is None:
            self._send(HTTPStatus.NOT_FOUND, {"error": f"no route {method} {url.path}"})
            return
        query = {k: v[-1] for k, v in urllib.parse.parse_qs(url.query).items()}
        try:
            body = self._body() if method == "POST" else {}
            status, payload = getattr(self, route)(body, query)
        except (BadRequest, KeyError, TypeError, ValueError) as exc:
            status, payload = HTTPStatus.BAD_REQUEST, {"error": str(exc)}
        self._send(status, payload)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")


class FrameworkHandler(_JSONHandler):
    routes = {
        ("POST", "/registry/register"): "register",
        ("GET", "/registry/lookup"): "lookup",
        ("POST", "/authorization/rules"): "add_rule",
        ("POST", "/authorization/check"): "check",
        ("POST", "/orchestration/request"): "orchestrate",
        ("GET", "/orchestration/counters"): "counters",
    }

    @property
    def cloud(self) -> LocalCloud:
        return self.server.cloud

    def register(self, body, query):
        desc = ServiceDescriptor.from_json(body)
        try:
            self.cloud.register_service(desc)
        except AlreadyRegistered:
            return HTTPStatus.CONFLICT, {"error": f"{desc.service_name} already registered"}
        return HTTPStatus.CREATED, self.cloud.get_service(desc.service_name).to_json()

    def lookup(self, body, query):
        try:
            return HTTPStatus.OK, self.cloud.lookup(query["kind"]).to_json()
        except NotFound as exc:
            return HTTPStatus.NOT_FOUND, {"error": f"not found: {exc}"}

    def add_rule(self, body, query):
        rule = self.cloud.set_rule(body["consumer"], body["provider"], bool(body.get("allowed", True)))
        return HTTPStatus.CREATED, {"consumer": rule.consumer, "provider": rule.provider,
                                    "allowed": rule.allowed}

    def check(self, body, query):
        decision = self.cloud.check_authorization(body["consumer"], body["provider"])
        return HTTPStatus.OK, {"allowed": decision is Decision.ALLOWED}

    def orchestrate(self, body, query):
        req = OrchestrationRequest(body["source"], float(body["value"]), body.get("request_id"))
        try:
            resp = self.cloud.orchestrate(req)
        except UnknownSource as exc:
            return HTTPStatus.FORBIDDEN, {"error": "unknown_source", "detail": str(exc)}
        except Unauthorized as exc:
            return HTTPStatus.FORBIDDEN, {"error": "unauthorized", "detail": str(exc)}
        except NotFound as exc:
            return HTTPStatus.NOT_FOUND, {"error": "not_found", "detail": str(exc)}
        except (OSError, LocalCloudError) as exc:
            return HTTPStatus.BAD_GATEWAY, {"error": "delivery_failed", "detail": str(exc)}
        return HTTPStatus.OK, {"target": resp.target.to_json(), "request_id": resp.request_id,
                               "delivery": resp.delivery}

    def counters(self, body, query):
        return HTTPStatus.OK, self.cloud.counters.snapshot()


class ActuatorHandler(_JSONHandler):
    routes = {
        ("POST", "/actuator/value"): "value",
        ("GET", "/actuator/state"): "state",
    }

    def value(self, body, query):
        with self.server.lock:
            return HTTPStatus.OK, self.server.node(float(body["value"]), body.get("request_id"))

    def state(self, body, query):
        with self.server.lock:
            st = self.server.node.state
            return HTTPStatus.OK, {
                "active": st.active,
                "activations": [[t, float(v)] for t, v in st.activation_log],
            }


def http_transport(target: ServiceDescriptor, value: float, request_id) -> Optional[dict]:
    """Forward ``value`` to the target's endpoint URL as JSON."""
    return _post_json(target.endpoint, {"value": value, "request_id": request_id})


def _post_json(url: str, payload: dict) -> dict:
    data = json.dumps(payload).encode()
    req = urllib.request.Request(url, data=data, method="POST",
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=TIMEOUT_S) as resp:
        return json.loads(resp.read() or b"{}")


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "_Server":
        self._thread = threading.Thread(target=self.serve_forever, args=(0.05,), daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class FrameworkServer(_Server):
    def __init__(self, host: str = "127.0.0.1", port: int = 0, cloud: Optional[LocalCloud] = None):
        super().__init__((host, port), FrameworkHandler)
        self.cloud = cloud if cloud is not None else LocalCloud(http_transport, clock=EpochClock())


class ActuatorServer(_Server):
    def __init__(self, host: str = "127.0.0.1", port: int = 0, limit=25.0, clock=None):
        super().__init__((host, port), ActuatorHandler)
        self.lock = threading.Lock()
        self.limit = limit
        self.node = ActuatorNode(limit, clock)

    @property
    def endpoint(self) -> str:
        return f"{self.url}/actuator/value"

    def reset(self, clock=None) -> None:
        with self.lock:
            self.node = ActuatorNode(self.limit, clock)


class HttpCloud:
    """Client for a remote framework; mirrors :class:`LocalCloud`'s methods."""

    def __init__(self, base_url: str):
        self.base_url = base_url.rstrip("/")

    def _call(self, method: str, path: str, payload=None):
        url = self.base_url + path
        data = json.dumps(payload).encode() if payload is not None else None
        req = urllib.request.Request(url, data=data, method=method,
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=TIMEOUT_S) as resp:
                return resp.status, json.loads(resp.read() or b"{}")
        except urllib.error.HTTPError as exc:
            try:
                body = json.loads(exc.read() or b"{}")
            except json.JSONDecodeError:
                body = {}
            return exc.code, body

    def register_service(self, desc: ServiceDescriptor) -> str:
        status, body = self._call("POST", "/registry/register", desc.to_json())
        if status == HTTPStatus.CONFLICT:
            raise AlreadyRegistered(desc.service_name)
        _expect(status, body, HTTPStatus.CREATED)
        return body["service_name"]

    def lookup(self, kind: str) -> ServiceDescriptor:
        status, body = self._call("GET", f"/registry/lookup?kind={urllib.parse.quote(kind)}")
        if status == HTTPStatus.NOT_FOUND:
            raise NotFound(kind)
        _expect(status, body, HTTPStatus.OK)
        return ServiceDescriptor.from_json(body)

    def set_rule(self, consumer: str, provider: str, allowed: bool = True) -> None:
        status, body = self._call("POST", "/authorization/rules",
                                  {"consumer": consumer, "provider": provider, "allowed": allowed})
        _expect(status, body, HTTPStatus.CREATED)

    def check_authorization(self, consumer: str, provider: str) -> Decision:
        status, body = self._call("POST", "/authorization/check",
                                  {"consumer": consumer, "provider": provider})
        _expect(status, body, HTTPStatus.OK)
        return Decision.ALLOWED if body["allowed"] else Decision.DENIED

    def orchestrate(self, req: OrchestrationRequest) -> OrchestrationResponse:
        status, body = self._call("POST", "/orchestration/request",
                                  {"source": req.source, "value": float(req.payload),
                                   "request_id": req.request_id})
        if status == HTTPStatus.FORBIDDEN:
            exc = UnknownSource if body.get("error") == "unknown_source" else Unauthorized
            raise exc(body.get("detail", ""))
        if status == HTTPStatus.NOT_FOUND:
            raise NotFound(body.get("detail", ""))
        _expect(status, body, HTTPStatus.OK)
        return OrchestrationResponse(ServiceDescriptor.from_json(body["target"]),
                                     body.get("request_id"), body.get("delivery"))

    def counters(self) -> dict:
        status, body = self._call("GET", "/orchestration/counters")
        _expect(status, body, HTTPStatus.OK)
        return body


def _expect(status, body, wanted) -> None:
    if status != wanted:
        raise ConnectionError(f"unexpected HTTP {status}: {body.get('error', body)}")


def _counter_delta(before: dict, after: dict) -> dict:
    return {k: after[k] - before[k] for k in ("lookups", "authorization_checks", "orchestrations")}


def _onboard(cloud, desc: ServiceDescriptor) -> None:
    try:
        cloud.register_service(desc)
    except AlreadyRegistered:
        # a long-lived framework keeps earlier registrations
        if desc.kind == "actuator" and cloud.lookup("actuator").endpoint != desc.endpoint:
            raise RunAborted("framework already has a different actuator registered") from None


def run_live_experiment(config) -> list:
    """Run the protocol against HTTP services on the wall clock.

    The actuator is served in-process. The framework is reached at
    ``config.framework_url`` or ``$LOOPBENCH_FRAMEWORK_URL``; without either
    an in-process framework is started. On a connectivity failure the runs
    completed so far travel with :class:`RunAborted`.
    """
    from .experiment import _report

    url = config.framework_url or os.environ.get(FRAMEWORK_URL_ENV)
    own_framework = FrameworkServer().start() if not url else None
    actuator = ActuatorServer(limit=config.limit).start()
    reports = []
    try:
        cloud = HttpCloud(url or own_framework.url)
        _onboard(cloud, ServiceDescriptor("sensor-1", "sensor", f"{actuator.url}/sensor"))
        _onboard(cloud, ServiceDescriptor("actuator-1", "actuator", actuator.endpoint))
        cloud.set_rule("sensor-1", "actuator-1", True)
        trace = config.trace()
        for kind, i in config.run_order():
            clock = WallClock(config.time_scale)
            actuator.reset(clock)
            before = cloud.counters()
            device_log = run_loop(config.strategy(kind), trace, Scheduler(clock), cloud,
                                  timing=config.power_model.timing)
            counters = _counter_delta(before, cloud.counters())
            with actuator.lock:
                activations = len(actuator.node.state.activation_log)
            reports.append(_report(config, kind, i, device_log, counters, activations))
    except (OSError, ConnectionError) as exc:
        raise RunAborted(f"live run aborted after {len(reports)} runs: {exc}", reports) from exc
    finally:
        actuator.stop()
        if own_framework is not None:
            own_framework.stop()
    return reports


def serve(role: str, host: str = "127.0.0.1", port: int = 0, limit=25.0) -> None:
    server = FrameworkServer(host, port) if role == "framework" else ActuatorServer(host, port, limit, EpochClock())
    print(f"{role} listening on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
