# utils/persistence.py
"""
Persistence Managers (PM): the only path to a resource type
- Token registration by the PA, single-use redemption by the PEP
- TEMP-PM (temperature readings), AUTH-PM (actor directory),
  OSV-PM (vulnerabilities), MAINT-PM (analyser maintenance data)
- Call counter and request audit per PM
"""

import logging
import threading
import uuid
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Tuple

from utils.auth import generate_api_key, hash_api_key
from utils.clock import SystemClock
from utils.errors import (
    ExpiredToken,
    InsufficientRights,
    PMUnreachable,
    UnknownActor,
    UnknownToken,
    ValidationFailure,
)
from utils.model import (
    AccessRequest,
    AccessToken,
    Actor,
    RequestKind,
    Role,
    Severity,
    TemperatureReading,
    parse_rights,
)
from utils.validators import Vulnerability, VulnerabilityStore

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PMAction:
    request_id: str
    kind: RequestKind
    resource: str
    actor_id: str
    parameters: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_request(cls, request: AccessRequest) -> "PMAction":
        return cls(
            request_id=request.request_id,
            kind=request.kind,
            resource=request.resource,
            actor_id=request.requester.actor,
            parameters=request.params,
        )


@dataclass(frozen=True)
class PMRegistration:
    token: AccessToken
    request_id: str


@dataclass(frozen=True)
class AuditEntry:
    request_id: str
    token_request_id: Optional[str]
    kind: RequestKind
    resource: str


class PersistenceManager:
    name = "PM"
    resources: FrozenSet[str] = frozenset()

    def __init__(self, clock=None, token_gated: bool = True):
        self._clock = clock or SystemClock()
        self.token_gated = token_gated
        self.available = True
        self._tokens: Dict[str, PMRegistration] = {}
        self._lock = threading.Lock()
        self.calls = 0
        self.audit: List[AuditEntry] = []

    # --------------------------
    # Token table
    # --------------------------
    def register_token(self, token: AccessToken, request_id: str):
        if not self.available:
            raise PMUnreachable(f"{self.name} is unreachable")
        for _, resource in token.rights:
            if resource not in self.resources:
                raise InsufficientRights(f"{self.name} does not manage {resource!r}")
        with self._lock:
            self._tokens[token.secret] = PMRegistration(token, request_id)
        logger.debug("%s registered token %r for %s", self.name, token, request_id)

    def registered_tokens(self) -> int:
        with self._lock:
            return len(self._tokens)

    def _redeem(self, secret: Optional[str], action: PMAction) -> Optional[PMRegistration]:
        with self._lock:
            registration = self._tokens.get(secret) if secret else None
            if registration is None:
                raise UnknownToken(f"{self.name}: token not registered")
            token = registration.token
            if token.expired(self._clock.now()):
                del self._tokens[secret]
                raise ExpiredToken(f"{self.name}: token expired")
            if not token.permits(action.kind, action.resource):
                raise InsufficientRights(
                    f"{self.name}: token does not permit {action.kind.value} {action.resource}"
                )
            if registration.request_id != action.request_id:
                raise InsufficientRights(f"{self.name}: token was issued for another request")
            del self._tokens[secret]
            return registration

    # --------------------------
    # Execution
    # --------------------------
    def execute(self, token_secret: Optional[str], action: PMAction):
        if not self.available:
            raise PMUnreachable(f"{self.name} is unreachable")
        if action.resource not in self.resources:
            raise InsufficientRights(f"{self.name} does not manage {action.resource!r}")

        registration = self._redeem(token_secret, action) if self.token_gated else None
        with self._lock:
            self.calls += 1
            self.audit.append(
                AuditEntry(
                    request_id=action.request_id,
                    token_request_id=registration.request_id if registration else None,
                    kind=action.kind,
                    resource=action.resource,
                )
            )
        # a redeemed token stays consumed even when the action fails
        return self._perform(action)

    def _perform(self, action: PMAction):
        raise NotImplementedError


# --------------------------
# TEMP-PM
# --------------------------
class TemperaturePM(PersistenceManager):
    name = "TEMP-PM"
    resources = frozenset({"temperature"})

    def __init__(self, database, clock=None, token_gated: bool = True, value_range=(-90, 60)):
        super().__init__(clock, token_gated)
        self._db = database
        self.value_range = value_range

    def _parse_value(self, raw) -> Decimal:
        try:
            value = Decimal(str(raw))
        except InvalidOperation:
            raise ValidationFailure(f"temperature value {raw!r} is not a decimal")
        if not value.is_finite():
            raise ValidationFailure(f"temperature value {raw!r} is not finite")
        low, high = self.value_range
        if (low is not None and value < Decimal(str(low))) or (high is not None and value > Decimal(str(high))):
            raise ValidationFailure(f"temperature value {raw} outside [{low}, {high}]")
        return value

    def _perform(self, action: PMAction):
        if action.kind is RequestKind.WRITE:
            reading = TemperatureReading(
                reading_id=uuid.uuid4().hex,
                actor_id=action.actor_id,
                value=self._parse_value(action.parameters.get("value")),
                recorded_at=self._clock.now(),
            )
            self._db.add_reading(reading)
            return reading
        if action.kind is RequestKind.READ:
            readings = self._db.fetch_readings(action.parameters.get("actor_id"))
            limit = action.parameters.get("limit")
            if limit:
                readings = readings[-int(limit):]
            return readings
        raise InsufficientRights(f"{self.name} does not support {action.kind.value}")


# --------------------------
# AUTH-PM
# --------------------------
class AuthPM(PersistenceManager):
    """Actor directory writes; the Authentication Service only ever reads it."""

    name = "AUTH-PM"
    resources = frozenset({"actors"})

    def __init__(self, database, clock=None, token_gated: bool = True):
        super().__init__(clock, token_gated)
        self._db = database

    def _perform(self, action: PMAction):
        params = action.parameters
        verb = params.get("action")
        actor_id = params.get("actor_id")
        if not actor_id:
            raise ValidationFailure("actor_id is required")

        if verb == "create":
            api_key = params.get("api_key") or generate_api_key()
            actor = Actor(
                actor_id=actor_id,
                role=Role(params.get("role", Role.USER.value)),
                access_rights=parse_rights(params.get("rights", "")),
                api_key_hash=hash_api_key(api_key),
                ip_address=params.get("ip_address", ""),
                mac_address=params.get("mac_address", ""),
            )
            self._db.add_actor(actor)
            logger.info("actor %s created (%s)", actor_id, actor.role.value)
            return {"actor_id": actor_id, "api_key": api_key}

        if verb == "update":
            current = self._db.get_actor(actor_id)
            if current is None:
                raise UnknownActor(actor_id)
            actor = Actor(
                actor_id=actor_id,
                role=Role(params.get("role", current.role.value)),
                access_rights=parse_rights(params["rights"]) if "rights" in params else current.access_rights,
                api_key_hash=hash_api_key(params["api_key"]) if params.get("api_key") else current.api_key_hash,
                ip_address=params.get("ip_address", current.ip_address),
                mac_address=params.get("mac_address", current.mac_address),
                blocked_until=current.blocked_until,
            )
            self._db.update_actor(actor)
            logger.info("actor %s updated", actor_id)
            return {"actor_id": actor_id}

        if verb == "delete":
            self._db.delete_actor(actor_id)
            logger.info("actor %s deleted", actor_id)
            return {"actor_id": actor_id}

        raise ValidationFailure(f"unknown actor action {verb!r}")


# --------------------------
# OSV-PM
# --------------------------
class VulnerabilityPM(PersistenceManager):
    name = "OSV-PM"
    resources = frozenset({"vulnerabilities"})

    def __init__(self, store: VulnerabilityStore, clock=None, token_gated: bool = True):
        super().__init__(clock, token_gated)
        self._store = store

    def _perform(self, action: PMAction):
        p = action.parameters
        vuln = Vulnerability(
            os_id=p.get("os_id", ""),
            affected_versions=p.get("affected_versions", ""),
            severity=Severity[p.get("severity", "LOW")],
            description=p.get("description", ""),
        )
        return {"added": self._store.add_vulnerability(vuln)}


# --------------------------
# MAINT-PM (analyser data)
# --------------------------
class MaintenancePM(PersistenceManager):
    name = "MAINT-PM"
    resources = frozenset({"analyser"})

    def __init__(self, engines: Callable[[], list], history, clock=None, token_gated: bool = True):
        super().__init__(clock, token_gated)
        self._engines = engines
        self._history = history

    def _perform(self, action: PMAction):
        query = action.parameters.get("query")
        if query == "connected_engines":
            return [engine.health() for engine in self._engines()]
        if query == "actor_history":
            actor_id = action.parameters.get("actor_id")
            if not actor_id:
                raise ValidationFailure("actor_history needs an actor_id")
            limit = int(action.parameters.get("limit", 10))
            return [r.to_canonical() for r in self._history.recent(actor_id, limit)]
        raise ValidationFailure(f"unknown analyser query {query!r}")


# --------------------------
# Routing
# --------------------------
class PMRegistry:
    def __init__(self, managers):
        self._by_resource: Dict[str, PersistenceManager] = {}
        for pm in managers:
            for resource in pm.resources:
                self._by_resource[resource] = pm

    def route(self, resource: str) -> PersistenceManager:
        pm = self._by_resource.get(resource)
        if pm is None:
            raise PMUnreachable(f"no persistence manager for {resource!r}")
        return pm

    def managers(self) -> Tuple[PersistenceManager, ...]:
        return tuple(dict.fromkeys(self._by_resource.values()))
