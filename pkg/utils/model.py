# utils/model.py
"""
Core domain model shared by every component
- X-Requester identity envelope and its canonical wire format
- Typed access requests and their sync/async classification
- Severity-graded check results and the decision rule
- Access tokens, actors, history records, temperature readings
"""

import json
import secrets
import uuid
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum, IntEnum
from typing import Iterable, Mapping, Optional, Sequence, Tuple, Union

from utils.errors import (
    MalformedSyntax,
    MissingCategory,
    MissingField,
    UnknownField,
    ValidationFailure,
)

REQUESTER_HEADER = "X-Requester"

# Wire order of the header keys; canonical serialization keeps it.
REQUESTER_KEYS = (
    "agent",
    "actor",
    "ip_address",
    "mac_address",
    "os_id",
    "os_version",
    "auth_token",
)

# Resources only reachable through ADMIN requests.
ADMIN_RESOURCES = frozenset({"actors", "vulnerabilities", "analyser"})


# --------------------------
# Enumerations
# --------------------------
class RequestKind(str, Enum):
    READ = "READ"
    WRITE = "WRITE"
    ADMIN = "ADMIN"


class Severity(IntEnum):
    LOW = 1
    MODERATE = 2
    HIGH = 3
    CRITICAL = 4


class CheckCategory(str, Enum):
    IDENTITY = "IDENTITY"
    ENVIRONMENT = "ENVIRONMENT"
    USAGE = "USAGE"
    BEHAVIOR = "BEHAVIOR"


CHECK_ORDER = (
    CheckCategory.IDENTITY,
    CheckCategory.ENVIRONMENT,
    CheckCategory.USAGE,
    CheckCategory.BEHAVIOR,
)


class Outcome(str, Enum):
    GRANT = "GRANT"
    REJECT = "REJECT"

    def inverted(self) -> "Outcome":
        return Outcome.REJECT if self is Outcome.GRANT else Outcome.GRANT


class Mode(str, Enum):
    SYNC = "SYNC"
    ASYNC = "ASYNC"


class Role(str, Enum):
    USER = "USER"
    STATIONARY = "STATIONARY"


Right = Tuple[RequestKind, str]


# --------------------------
# X-Requester
# --------------------------
@dataclass(frozen=True)
class RequesterContext:
    agent: str
    actor: str
    ip_address: str
    mac_address: str
    os_id: str
    os_version: str
    auth_token: str

    def __post_init__(self):
        for key in REQUESTER_KEYS:
            if not isinstance(getattr(self, key), str):
                raise MalformedSyntax(f"{key} must be a string")
        if not self.actor:
            raise MissingField("actor")
        if not self.auth_token:
            raise MissingField("auth_token")

    def __repr__(self) -> str:
        return (
            f"RequesterContext(actor={self.actor!r}, ip_address={self.ip_address!r}, "
            f"mac_address={self.mac_address!r}, os_id={self.os_id!r}, "
            f"os_version={self.os_version!r}, auth_token='***')"
        )

    def to_dict(self) -> dict:
        return {key: getattr(self, key) for key in REQUESTER_KEYS}

    def serialize(self) -> str:
        return serialize_requester(self)


def serialize_requester(ctx: RequesterContext) -> str:
    return json.dumps(ctx.to_dict(), separators=(",", ":"), ensure_ascii=False)


def _reject_duplicate_keys(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise MalformedSyntax(f"duplicate key: {key}")
        seen[key] = value
    return seen


def parse_requester(header_text: str) -> RequesterContext:
    """Parse the X-Requester header; exactly the seven string keys are accepted."""
    if not isinstance(header_text, str):
        raise MalformedSyntax("header must be text")
    try:
        data = json.loads(header_text, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as e:
        raise MalformedSyntax(f"invalid header syntax: {e.msg}") from e

    if not isinstance(data, dict):
        raise MalformedSyntax("header must be an object")

    for key in REQUESTER_KEYS:
        if key not in data:
            raise MissingField(key)
    for key in data:
        if key not in REQUESTER_KEYS:
            raise UnknownField(key)
    for key in REQUESTER_KEYS:
        if not isinstance(data[key], str):
            raise MalformedSyntax(f"{key} must be a string")

    return RequesterContext(**{key: data[key] for key in REQUESTER_KEYS})


# --------------------------
# Access requests
# --------------------------
@dataclass(frozen=True)
class AccessRequest:
    request_id: str
    kind: RequestKind
    resource: str
    parameters: Tuple[Tuple[str, str], ...]
    requester: RequesterContext
    received_at: float

    def __post_init__(self):
        if not self.request_id:
            raise ValidationFailure("request_id is required")
        if not self.resource:
            raise ValidationFailure("resource is required")
        keys = [k for k, _ in self.parameters]
        if len(keys) != len(set(keys)):
            raise ValidationFailure("parameter keys must be unique")
        if self.kind is RequestKind.ADMIN and self.resource not in ADMIN_RESOURCES:
            raise ValidationFailure(f"ADMIN requests cannot target {self.resource!r}")

    @classmethod
    def create(
        cls,
        kind: Union[RequestKind, str],
        resource: str,
        parameters: Union[Mapping[str, object], Iterable[Tuple[str, object]], None],
        requester: RequesterContext,
        received_at: float,
        request_id: Optional[str] = None,
    ) -> "AccessRequest":
        if parameters is None:
            pairs = ()
        elif isinstance(parameters, Mapping):
            pairs = tuple((str(k), str(v)) for k, v in parameters.items())
        else:
            pairs = tuple((str(k), str(v)) for k, v in parameters)
        return cls(
            request_id=request_id or new_request_id(),
            kind=RequestKind(kind),
            resource=resource,
            parameters=pairs,
            requester=requester,
            received_at=received_at,
        )

    @property
    def params(self) -> dict:
        return dict(self.parameters)

    def param(self, name: str, default=None):
        return self.params.get(name, default)

    def canonical(self) -> dict:
        return {
            "request_id": self.request_id,
            "kind": self.kind.value,
            "resource": self.resource,
            "parameters": [[k, v] for k, v in self.parameters],
            "requester": self.requester.to_dict(),
            "received_at": self.received_at,
        }

    def to_bytes(self) -> bytes:
        """Canonical payload bytes as forwarded from the PEP to every engine."""
        return json.dumps(self.canonical(), separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def new_request_id() -> str:
    return uuid.uuid4().hex


def classify_kind(kind: RequestKind, resource: str) -> Mode:
    if kind is RequestKind.WRITE and resource not in ADMIN_RESOURCES:
        return Mode.ASYNC
    return Mode.SYNC


def classify(request: AccessRequest) -> Mode:
    """Non-administrative data-saving requests run asynchronously, everything else synchronously."""
    return classify_kind(request.kind, request.resource)


# --------------------------
# Check results & decisions
# --------------------------
@dataclass(frozen=True)
class Failure:
    code: str
    severity: Severity
    message: str

    def to_dict(self) -> dict:
        return {"code": self.code, "severity": self.severity.name, "message": self.message}


@dataclass(frozen=True)
class CheckResult:
    check: CheckCategory
    passed: bool
    failures: Tuple[Failure, ...] = ()

    def __post_init__(self):
        if self.passed != (len(self.failures) == 0):
            raise ValidationFailure("passed must be true exactly when there are no failures")

    @classmethod
    def of(cls, check: CheckCategory, failures: Sequence[Failure] = ()) -> "CheckResult":
        failures = tuple(failures)
        return cls(check=check, passed=not failures, failures=failures)

    @property
    def max_severity(self) -> Optional[Severity]:
        return max((f.severity for f in self.failures), default=None)


@dataclass(frozen=True)
class Decision:
    request_id: str
    outcome: Outcome
    check_results: Tuple[CheckResult, ...]
    engine_id: str
    infrastructure_error: bool = False

    def __post_init__(self):
        if tuple(r.check for r in self.check_results) != CHECK_ORDER:
            raise MissingCategory("a decision carries exactly one result per category, in order")

    @property
    def failures(self) -> Tuple[Failure, ...]:
        return tuple(f for r in self.check_results for f in r.failures)

    @property
    def max_severity(self) -> Optional[Severity]:
        return max((f.severity for f in self.failures), default=None)

    def result_for(self, check: CheckCategory) -> CheckResult:
        return next(r for r in self.check_results if r.check is check)


def decide(failures: Iterable[Failure]) -> Outcome:
    """All critical failures result in rejection; anything less is grantable."""
    if any(f.severity is Severity.CRITICAL for f in failures):
        return Outcome.REJECT
    return Outcome.GRANT


def aggregate_decision(
    results: Sequence[CheckResult],
    engine_id: str,
    request_id: str,
    infrastructure_error: bool = False,
) -> Decision:
    by_category = {}
    for result in results:
        by_category.setdefault(result.check, result)
    missing = [c.value for c in CHECK_ORDER if c not in by_category]
    if missing or len(results) != len(CHECK_ORDER):
        raise MissingCategory(f"expected one result per category, missing {missing}")

    ordered = tuple(by_category[c] for c in CHECK_ORDER)
    outcome = decide(f for r in ordered for f in r.failures)
    return Decision(
        request_id=request_id,
        outcome=outcome,
        check_results=ordered,
        engine_id=engine_id,
        infrastructure_error=infrastructure_error,
    )


# --------------------------
# Access tokens
# --------------------------
@dataclass(frozen=True)
class AccessToken:
    secret: str
    ttl_seconds: int
    rights: Tuple[Right, ...]
    issued_at: float

    def __post_init__(self):
        if not isinstance(self.ttl_seconds, int) or self.ttl_seconds <= 0:
            raise ValidationFailure("ttl_seconds must be a positive integer")
        if not self.secret:
            raise ValidationFailure("secret is required")

    def __repr__(self) -> str:
        return (
            f"AccessToken(secret='{self.secret[:6]}...', ttl_seconds={self.ttl_seconds}, "
            f"rights={[(k.value, r) for k, r in self.rights]})"
        )

    @classmethod
    def issue(cls, kind: RequestKind, resource: str, ttl_seconds: int, now: float) -> "AccessToken":
        return cls(
            secret=secrets.token_urlsafe(32),
            ttl_seconds=ttl_seconds,
            rights=((RequestKind(kind), resource),),
            issued_at=now,
        )

    def expired(self, now: float) -> bool:
        return now - self.issued_at > self.ttl_seconds

    def permits(self, kind: RequestKind, resource: str) -> bool:
        return (RequestKind(kind), resource) in self.rights


# --------------------------
# Actors
# --------------------------
def parse_rights(text: str) -> Tuple[Right, ...]:
    """'READ:temperature;WRITE:temperature' -> ((READ, 'temperature'), (WRITE, 'temperature'))"""
    rights = []
    for chunk in (text or "").replace(",", ";").split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        kind, sep, resource = chunk.partition(":")
        if not sep or not resource.strip():
            raise ValidationFailure(f"malformed right: {chunk!r}")
        try:
            right = (RequestKind(kind.strip().upper()), resource.strip())
        except ValueError as e:
            raise ValidationFailure(f"unknown request kind in right: {chunk!r}") from e
        if right not in rights:
            rights.append(right)
    return tuple(rights)


def format_rights(rights: Iterable[Right]) -> str:
    return ";".join(f"{RequestKind(k).value}:{r}" for k, r in rights)


@dataclass(frozen=True)
class Actor:
    actor_id: str
    role: Role
    access_rights: Tuple[Right, ...]
    api_key_hash: str
    ip_address: str = ""
    mac_address: str = ""
    blocked_until: Optional[float] = None

    def __post_init__(self):
        if not self.actor_id:
            raise ValidationFailure("actor_id is required")
        if self.role is Role.STATIONARY and not (self.ip_address and self.mac_address):
            raise ValidationFailure("stationary actors need an ip and a mac address")
        if self.role is Role.USER and (self.ip_address or self.mac_address):
            raise ValidationFailure("user actors carry no ip or mac address")

    def has_right(self, kind: RequestKind, resource: str) -> bool:
        return (RequestKind(kind), resource) in self.access_rights


# --------------------------
# History & readings
# --------------------------
@dataclass(frozen=True)
class HistoryRecord:
    request_id: str
    actor_id: str
    kind: RequestKind
    resource: str
    outcome: Outcome
    timestamp: float

    def to_canonical(self) -> dict:
        return {
            "request_id": self.request_id,
            "actor_id": self.actor_id,
            "kind": self.kind.value,
            "resource": self.resource,
            "outcome": self.outcome.value,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_canonical(cls, data: Mapping) -> "HistoryRecord":
        return cls(
            request_id=data["request_id"],
            actor_id=data["actor_id"],
            kind=RequestKind(data["kind"]),
            resource=data["resource"],
            outcome=Outcome(data["outcome"]),
            timestamp=float(data["timestamp"]),
        )

    @classmethod
    def from_request(cls, request: AccessRequest, outcome: Outcome, timestamp: float) -> "HistoryRecord":
        return cls(
            request_id=request.request_id,
            actor_id=request.requester.actor,
            kind=request.kind,
            resource=request.resource,
            outcome=outcome,
            timestamp=timestamp,
        )


@dataclass(frozen=True)
class TemperatureReading:
    reading_id: str
    actor_id: str
    value: Decimal
    recorded_at: float = field(default=0.0)

    def to_dict(self) -> dict:
        return {
            "reading_id": self.reading_id,
            "actor_id": self.actor_id,
            "value": str(self.value),
            "recorded_at": self.recorded_at,
        }
