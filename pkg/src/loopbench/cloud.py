"""Arrowhead-style local cloud: service registry, authorization, orchestration.

All three core systems live in one :class:`LocalCloud` object so that they
are metered as a single framework component. Every orchestration performs a
full registry lookup and authorization check; nothing is cached.
"""

from __future__ import annotations

import enum
import itertools
import threading
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Callable, Optional

from .core import Temperature
from .errors import AlreadyRegistered, NotFound, Unauthorized, UnknownSource

SERVICE_KINDS = ("sensor", "actuator")
COMPLEMENT = {"sensor": "actuator", "actuator": "sensor"}
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def us_to_iso(us: int) -> str:
    return (_EPOCH + timedelta(microseconds=us)).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def iso_to_us(text: str) -> int:
    dt = datetime.strptime(text, "%Y-%m-%dT%H:%M:%S.%fZ").replace(tzinfo=timezone.utc)
    delta = dt - _EPOCH
    return (delta.days * 86_400 + delta.seconds) * 1_000_000 + delta.microseconds


@dataclass(frozen=True)
class ServiceDescriptor:
    service_name: str
    kind: str
    endpoint: str
    registered_at: int = 0  # us

    def __post_init__(self):
        if self.kind not in SERVICE_KINDS:
            raise ValueError(f"service kind must be one of {SERVICE_KINDS}, got {self.kind!r}")
        if not self.service_name:
            raise ValueError("service_name must be non-empty")
        if not self.endpoint:
            raise ValueError("endpoint must be non-empty")

    def to_json(self) -> dict:
        return {
            "service_name": self.service_name,
            "kind": self.kind,
            "endpoint": self.endpoint,
            "registered_at": us_to_iso(self.registered_at),
        }

    @classmethod
    def from_json(cls, data: dict) -> "ServiceDescriptor":
        registered = data.get("registered_at")
        return cls(
            service_name=data["service_name"],
            kind=data["kind"],
            endpoint=data["endpoint"],
            registered_at=iso_to_us(registered) if registered else 0,
        )


@dataclass(frozen=True)
class AuthorizationRule:
    consumer: str
    provider: str
    allowed: bool


class Decision(enum.Enum):
    ALLOWED = "allowed"
    DENIED = "denied"


@dataclass(frozen=True)
class OrchestrationRequest:
    source: str
    payload: Temperature
    request_id: Any

    def __post_init__(self):
        object.__setattr__(self, "payload", Temperature(self.payload))


@dataclass(frozen=True)
class OrchestrationResponse:
    target: ServiceDescriptor
    request_id: Any
    # whatever the target acknowledged on delivery, e.g. {"decision": "activate"}
    delivery: Optional[dict] = None


# Delivers a value to a target endpoint; returns the target's acknowledgement.
Transport = Callable[[ServiceDescriptor, float, Any], Optional[dict]]


def _drop(target, value, request_id):
    return None


@dataclass
class CloudCounters:
    lookups: int = 0
    authorization_checks: int = 0
    orchestrations: int = 0
    forwarded: int = 0
    # per-service request counts, used for energy accounting
    requests: Counter = field(default_factory=Counter)

    def snapshot(self) -> dict:
        return {
            "lookups": self.lookups,
            "authorization_checks": self.authorization_checks,
            "orchestrations": self.orchestrations,
            "forwarded": self.forwarded,
            "requests": dict(sorted(self.requests.items())),
        }


class LocalCloud:
    """Service Registry, Authorization System and Orchestration System.

    Thread-safe: the registry and rule tables sit behind one re-entrant
    lock. The transport call that forwards a value to the provider runs
    outside the lock.
    """

    def __init__(self, transport: Transport = _drop, clock=None):
        self.transport = transport
        self.clock = clock
        self._services: dict[str, ServiceDescriptor] = {}
        self._rules: dict[tuple[str, str], AuthorizationRule] = {}
        self._lock = threading.RLock()
        self._request_ids = itertools.count()
        self.counters = CloudCounters()

    def _now(self) -> int:
        return self.clock.now if self.clock is not None else 0

    # -- Service Registry -------------------------------------------------

    def register_service(self, desc: ServiceDescriptor) -> str:
        with self._lock:
            if desc.service_name in self._services:
                raise AlreadyRegistered(desc.service_name)
            if not desc.registered_at:
                desc = ServiceDescriptor(desc.service_name, desc.kind, desc.endpoint, self._now())
            self._services[desc.service_name] = desc
            return desc.service_name

    def get_service(self, name: str) -> Optional[ServiceDescriptor]:
        with self._lock:
            return self._services.get(name)

    def services(self) -> list[ServiceDescriptor]:
        with self._lock:
            return list(self._services.values())

    def lookup(self, kind: str) -> ServiceDescriptor:
        """Earliest-registered service of ``kind``."""
        with self._lock:
            self.counters.lookups += 1
            for desc in self._services.values():  # dict keeps insertion order
                if desc.kind == kind:
                    return desc
        raise NotFound(f"no registered {kind}")

    # -- Authorization System ---------------------------------------------

    def set_rule(self, consumer: str, provider: str, allowed: bool = True) -> AuthorizationRule:
        rule = AuthorizationRule(consumer, provider, bool(allowed))
        with self._lock:
            self._rules[(consumer, provider)] = rule
        return rule

    def rules(self) -> list[AuthorizationRule]:
        with self._lock:
            return list(self._rules.values())

    def check_authorization(self, consumer: str, provider: str) -> Decision:
        with self._lock:
            self.counters.authorization_checks += 1
            rule = self._rules.get((consumer, provider))
        if rule is not None and rule.allowed:
            return Decision.ALLOWED
        return Decision.DENIED

    # -- Orchestration System ---------------------------------------------

    def orchestrate(self, req: OrchestrationRequest) -> OrchestrationResponse:
        with self._lock:
            source = self._services.get(req.source)
            if source is None:
                raise UnknownSource(req.source)
            self.counters.orchestrations += 1
            self.counters.requests[req.source] += 1
            target = self.lookup(COMPLEMENT[source.kind])
            if self.check_authorization(source.service_name, target.service_name) is not Decision.ALLOWED:
                raise Unauthorized(f"{source.service_name} -> {target.service_name}")
            self.counters.requests[target.service_name] += 1
            self.counters.forwarded += 1
        ack = self.transport(target, float(req.payload), req.request_id)
        return OrchestrationResponse(target, req.request_id, ack)

    def request(self, source: str, value) -> OrchestrationResponse:
        """Build an :class:`OrchestrationRequest` with a fresh id and orchestrate it."""
        return self.orchestrate(OrchestrationRequest(source, value, next(self._request_ids)))


class SimTransport:
    """In-process delivery keyed by endpoint string."""

    def __init__(self):
        self.handlers: dict[str, Callable[[float, Any], Optional[dict]]] = {}

    def bind(self, endpoint: str, handler) -> None:
        self.handlers[endpoint] = handler

    def __call__(self, target: ServiceDescriptor, value: float, request_id) -> Optional[dict]:
        try:
            handler = self.handlers[target.endpoint]
        except KeyError:
            raise NotFound(f"nothing bound at {target.endpoint}") from None
        return handler(value, request_id)
