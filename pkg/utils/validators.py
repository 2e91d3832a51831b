# utils/validators.py
"""
Validation components consulted by the Trust Algorithm
- Authentication Service (identity): read-only view of the actor directory
- OS Vulnerability store (environment): known OS vulnerabilities by version range
- Parameter Checker (usage): declarative per-resource parameter rules
- Behavior monitor (behavior): consecutive-rejection rule over request history
"""

import ipaddress
import logging
import re
import threading
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Dict, FrozenSet, List, Mapping, Optional, Protocol, Sequence, Tuple

from utils.auth import verify_api_key
from utils.errors import ValidationFailure
from utils.model import (
    AccessRequest,
    Actor,
    CheckCategory,
    CheckResult,
    Failure,
    HistoryRecord,
    Outcome,
    RequestKind,
    RequesterContext,
    Role,
    Severity,
    parse_rights,
)

logger = logging.getLogger(__name__)


# --------------------------
# Version ranges
# --------------------------
_COMPARATORS = (">=", "<=", "==", "!=", ">", "<")


def _version_key(version: str) -> tuple:
    parts = []
    for segment in version.strip().split("."):
        if segment.isdigit():
            parts.append((0, int(segment), ""))
        else:
            parts.append((1, 0, segment))
    return tuple(parts)


def parse_version_range(text: str) -> Tuple[Tuple[str, str], ...]:
    """
    Accepted forms: '*', '10.0.19041', '5.4.*', '>=1.0,<2.0'.
    Returns the clauses; '*' yields no clause (matches everything).
    """
    if text is None or not str(text).strip():
        raise ValidationFailure("version range is empty")
    text = str(text).strip()
    if text == "*":
        return ()

    clauses = []
    for raw in text.split(","):
        raw = raw.strip()
        if not raw:
            raise ValidationFailure(f"malformed version range: {text!r}")
        op = next((c for c in _COMPARATORS if raw.startswith(c)), None)
        version = raw[len(op):].strip() if op else raw
        if not version or any(ch.isspace() for ch in version):
            raise ValidationFailure(f"malformed version range: {text!r}")
        if version.endswith(".*"):
            if op not in (None, "=="):
                raise ValidationFailure(f"wildcards only allowed without comparator: {raw!r}")
            prefix = version[:-2]
            if not prefix or "*" in prefix:
                raise ValidationFailure(f"malformed wildcard: {raw!r}")
            clauses.append(("prefix", prefix))
            continue
        if "*" in version:
            raise ValidationFailure(f"malformed wildcard: {raw!r}")
        clauses.append((op or "==", version))
    return tuple(clauses)


def version_in_range(version: str, version_range: str) -> bool:
    key = _version_key(version)
    for op, bound in parse_version_range(version_range):
        if op == "prefix":
            prefix = _version_key(bound)
            if key[: len(prefix)] != prefix:
                return False
            continue
        other = _version_key(bound)
        ok = {
            "==": key == other,
            "!=": key != other,
            ">=": key >= other,
            "<=": key <= other,
            ">": key > other,
            "<": key < other,
        }[op]
        if not ok:
            return False
    return True


# --------------------------
# Domain types
# --------------------------
@dataclass(frozen=True)
class Vulnerability:
    os_id: str
    affected_versions: str
    severity: Severity
    description: str

    def __post_init__(self):
        if not self.os_id or not self.os_id.strip():
            raise ValidationFailure("os_id is required")
        if not self.description or not self.description.strip():
            raise ValidationFailure("description is required")
        if not isinstance(self.severity, Severity):
            raise ValidationFailure("severity must be a Severity")
        parse_version_range(self.affected_versions)

    def affects(self, os_id: str, os_version: str) -> bool:
        return os_id == self.os_id and version_in_range(os_version, self.affected_versions)


@dataclass(frozen=True)
class BehaviorPolicy:
    window_size: int = 5
    block_duration: float = 300.0
    trigger: int = 5

    def __post_init__(self):
        if self.window_size <= 0 or self.trigger <= 0:
            raise ValidationFailure("window_size and trigger must be positive")
        if self.trigger > self.window_size:
            raise ValidationFailure("trigger cannot exceed window_size")
        if self.block_duration <= 0:
            raise ValidationFailure("block_duration must be positive")


PARAMETER_TYPES = ("decimal", "integer", "ipv4", "mac", "string", "choice", "version_range", "rights")


@dataclass(frozen=True)
class ParameterRule:
    name: str
    type: str
    required_for: FrozenSet[RequestKind] = frozenset()
    min: Optional[float] = None
    max: Optional[float] = None
    choices: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.type not in PARAMETER_TYPES:
            raise ValidationFailure(f"unknown parameter type {self.type!r} for {self.name}")
        if self.type == "choice" and not self.choices:
            raise ValidationFailure(f"choice parameter {self.name} declares no choices")


# resource -> parameter name -> rule
UsageRules = Mapping[str, Mapping[str, ParameterRule]]


# --------------------------
# Store interfaces
# --------------------------
class HistorySource(Protocol):
    def recent(self, actor_id: str, limit: int) -> List[HistoryRecord]: ...


class AuthenticationService:
    """Read-only access to the actor directory. There is no method to add, modify or delete."""

    def __init__(self, directory):
        self._directory = directory

    def get_actor(self, actor_id: str) -> Optional[Actor]:
        return self._directory.get_actor(actor_id)


class BlockRegistry:
    """Temporary blocks live on the actor record so every engine sees the same state."""

    def __init__(self, directory):
        self._directory = directory
        self._lock = threading.Lock()

    def blocked_until(self, actor_id: str) -> Optional[float]:
        actor = self._directory.get_actor(actor_id)
        return actor.blocked_until if actor else None

    def block(self, actor_id: str, until: float, now: float) -> bool:
        """Starts a block unless one is already running; engines race here on the same rejection."""
        with self._lock:
            current = self.blocked_until(actor_id)
            if current is not None and current > now:
                return False
            return self._directory.set_blocked_until(actor_id, until)


class VulnerabilityStore:
    def __init__(self, database):
        self._db = database

    def add_vulnerability(self, vuln: Vulnerability) -> bool:
        added = self._db.add_vulnerability(vuln)
        if added:
            logger.info("vulnerability registered for %s %s (%s)", vuln.os_id, vuln.affected_versions, vuln.severity.name)
        return added

    def matching(self, os_id: str, os_version: str) -> List[Vulnerability]:
        if not os_id:
            return []
        return [v for v in self._db.find_vulnerabilities(os_id) if v.affects(os_id, os_version)]

    def size(self) -> int:
        return self._db.count_vulnerabilities()


def add_vulnerability(store: VulnerabilityStore, vuln: Vulnerability) -> bool:
    return store.add_vulnerability(vuln)


# --------------------------
# IDENTITY
# --------------------------
def check_identity(ctx: RequesterContext, request: AccessRequest, auth: AuthenticationService) -> CheckResult:
    actor = auth.get_actor(ctx.actor)
    if actor is None:
        return CheckResult.of(
            CheckCategory.IDENTITY,
            [Failure("unknown_actor", Severity.CRITICAL, f"unknown actor {ctx.actor!r}")],
        )
    if not verify_api_key(ctx.auth_token, actor.api_key_hash):
        logger.warning("invalid credentials presented for actor %s", ctx.actor)
        return CheckResult.of(
            CheckCategory.IDENTITY,
            [Failure("invalid_credentials", Severity.CRITICAL, "auth token does not match")],
        )

    failures = []
    if not actor.has_right(request.kind, request.resource):
        failures.append(
            Failure(
                "insufficient_access_rights",
                Severity.CRITICAL,
                f"insufficient access rights for {request.kind.value} {request.resource}",
            )
        )
    if actor.role is Role.STATIONARY:
        mismatched = [
            name
            for name, expected, presented in (
                ("ip", actor.ip_address, ctx.ip_address),
                ("mac", actor.mac_address.lower(), ctx.mac_address.lower()),
            )
            if expected != presented
        ]
        if mismatched:
            failures.append(
                Failure("ip_mac_mismatch", Severity.CRITICAL, f"ip/mac mismatch ({'/'.join(mismatched)})")
            )
    return CheckResult.of(CheckCategory.IDENTITY, failures)


# --------------------------
# ENVIRONMENT
# --------------------------
def check_environment(ctx: RequesterContext, store: VulnerabilityStore) -> CheckResult:
    failures = [
        Failure("os_vulnerability", v.severity, f"{v.os_id} {ctx.os_version}: {v.description}")
        for v in store.matching(ctx.os_id, ctx.os_version)
    ]
    return CheckResult.of(CheckCategory.ENVIRONMENT, failures)


# --------------------------
# USAGE
# --------------------------
_MAC_RE = re.compile(r"^[0-9a-fA-F]{2}(:[0-9a-fA-F]{2}){5}$")


def _syntax(name: str, message: str) -> Failure:
    return Failure("syntax_error", Severity.CRITICAL, f"{name}: {message}")


def _semantic(name: str, message: str) -> Failure:
    return Failure("semantic_error", Severity.HIGH, f"{name}: {message}")


def _check_range(rule: ParameterRule, number) -> Optional[Failure]:
    if rule.min is not None and number < Decimal(str(rule.min)):
        return _semantic(rule.name, f"{number} below plausible minimum {rule.min}")
    if rule.max is not None and number > Decimal(str(rule.max)):
        return _semantic(rule.name, f"{number} above plausible maximum {rule.max}")
    return None


def _check_value(rule: ParameterRule, value: str) -> Optional[Failure]:
    if rule.type == "decimal":
        try:
            number = Decimal(value.strip())
        except (InvalidOperation, AttributeError):
            return _syntax(rule.name, f"{value!r} is not a number")
        if not number.is_finite():
            return _syntax(rule.name, f"{value!r} is not a finite number")
        return _check_range(rule, number)

    if rule.type == "integer":
        if not re.fullmatch(r"[+-]?\d+", value.strip()):
            return _syntax(rule.name, f"{value!r} is not an integer")
        return _check_range(rule, Decimal(int(value)))

    if rule.type == "ipv4":
        try:
            ipaddress.IPv4Address(value)
        except ValueError:
            return _syntax(rule.name, f"{value!r} is not a valid IPv4 address")
        return None

    if rule.type == "mac":
        if not _MAC_RE.match(value):
            return _syntax(rule.name, f"{value!r} is not a valid MAC address")
        return None

    if rule.type == "choice":
        if value not in rule.choices:
            return _syntax(rule.name, f"{value!r} not one of {list(rule.choices)}")
        return None

    if rule.type == "version_range":
        try:
            parse_version_range(value)
        except ValidationFailure as e:
            return _syntax(rule.name, str(e))
        return None

    if rule.type == "rights":
        try:
            parse_rights(value)
        except ValidationFailure as e:
            return _syntax(rule.name, str(e))
        return None

    # string
    if not value.strip() or not value.isprintable():
        return _syntax(rule.name, "must be non-empty printable text")
    if rule.max is not None and len(value) > rule.max:
        return _semantic(rule.name, f"longer than {int(rule.max)} characters")
    return None


class ParameterChecker:
    def __init__(self, rules: UsageRules):
        self.rules: Dict[str, Mapping[str, ParameterRule]] = dict(rules)

    def check(self, request: AccessRequest) -> CheckResult:
        return check_usage(request, self)


def check_usage(request: AccessRequest, checker: ParameterChecker) -> CheckResult:
    rules = checker.rules.get(request.resource)
    if rules is None:
        return CheckResult.of(
            CheckCategory.USAGE,
            [Failure("unvalidatable_request", Severity.CRITICAL, f"no rule set for resource {request.resource!r}")],
        )

    failures = []
    params = request.params
    for name in params:
        if name not in rules:
            failures.append(_syntax(name, "unexpected parameter"))
    for name, rule in rules.items():
        if name not in params:
            if request.kind in rule.required_for:
                failures.append(_syntax(name, "required parameter missing"))
            continue
        failure = _check_value(rule, params[name])
        if failure:
            failures.append(failure)
    return CheckResult.of(CheckCategory.USAGE, failures)


# --------------------------
# BEHAVIOR
# --------------------------
def check_behavior(
    actor_id: str,
    request: AccessRequest,
    policy: BehaviorPolicy,
    history: HistorySource,
    blocks: BlockRegistry,
    now: float,
) -> CheckResult:
    """
    Blocks an actor whose last `trigger` requests were all rejected on the resource
    it targets again. A lifted block is a watermark: only later history counts.
    """
    blocked_until = blocks.blocked_until(actor_id)
    if blocked_until is not None and now < blocked_until:
        return CheckResult.of(
            CheckCategory.BEHAVIOR,
            [Failure("temporarily_blocked", Severity.CRITICAL, f"temporarily blocked until {blocked_until:.0f}")],
        )

    records = history.recent(actor_id, policy.window_size)
    if blocked_until is not None:
        records = [r for r in records if r.timestamp >= blocked_until]
    recent = records[: policy.trigger]

    if len(recent) == policy.trigger and all(
        r.outcome is Outcome.REJECT and r.resource == request.resource for r in recent
    ):
        until = now + policy.block_duration
        if blocks.block(actor_id, until, now):
            logger.warning(
                "actor %s blocked until %.0f after %d rejected requests on %s",
                actor_id, until, policy.trigger, request.resource,
            )
        return CheckResult.of(
            CheckCategory.BEHAVIOR,
            [
                Failure(
                    "temporarily_blocked",
                    Severity.CRITICAL,
                    f"temporarily blocked after {policy.trigger} rejected requests on {request.resource}",
                )
            ],
        )
    return CheckResult.of(CheckCategory.BEHAVIOR)


@dataclass
class ValidationServices:
    """Everything an engine needs to run the Trust Algorithm."""

    auth: AuthenticationService
    vulnerabilities: VulnerabilityStore
    checker: ParameterChecker
    history: HistorySource
    blocks: BlockRegistry
    policy: BehaviorPolicy = field(default_factory=BehaviorPolicy)
