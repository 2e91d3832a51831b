# utils/gateway.py
"""
Client-side components and the Policy Enforcement Point (PEP)
- Client / Analyser: fill the X-Requester header from connection metadata
  and client config; only the credentials come from the requester
- PEP: parses the header, asks the PA for a decision and talks to the PMs
  with the issued token; rejected requests never reach a PM
- Conventional mode: identity + rights check only, no PA, no tokens
"""

import hmac
import json
import logging
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

from utils.admin import ValidationInitiated
from utils.auth import require_credentials
from utils.broker import result_topic
from utils.clock import SystemClock, sleep_ms
from utils.config import ClientProfile
from utils.errors import (
    ConsensusFailed,
    InfrastructureError,
    MalformedSyntax,
    MissingCredentials,
    NoEngines,
    PMRejectedToken,
    RequesterFormatError,
    TokenError,
    Unauthorized,
    ValidationFailure,
    ZTAError,
)
from utils.model import (
    REQUESTER_HEADER,
    REQUESTER_KEYS,
    AccessRequest,
    CheckCategory,
    Failure,
    Mode,
    Outcome,
    RequesterContext,
    RequestKind,
    Severity,
    classify,
    new_request_id,
    parse_requester,
)
from utils.persistence import PMAction
from utils.validators import check_identity

logger = logging.getLogger(__name__)

GRANTED = "granted"
REJECTED = "rejected"
ACCEPTED = "accepted"
ERROR = "error"


@dataclass(frozen=True)
class ConnectionInfo:
    """What the client-side component observes about the requester's connection."""

    ip_address: str
    mac_address: str = ""


@dataclass(frozen=True)
class GatewayResponse:
    request_id: Optional[str]
    status: str
    mode: Optional[Mode] = None
    outcome: Optional[Outcome] = None
    data: Any = None
    failures: Tuple[Failure, ...] = ()
    error: Optional[str] = None

    @property
    def granted(self) -> bool:
        return self.status == GRANTED

    @property
    def rejected(self) -> bool:
        return self.status == REJECTED

    def failure_codes(self) -> Tuple[str, ...]:
        return tuple(f.code for f in self.failures)


def credentials_header(actor: str, auth_token: str, **overrides) -> Dict[str, str]:
    """X-Requester with only the credentials filled out."""
    values = {key: "" for key in REQUESTER_KEYS}
    values.update(overrides, actor=actor or "", auth_token=auth_token or "")
    return {REQUESTER_HEADER: json.dumps(values, separators=(",", ":"))}


# --------------------------
# Conventional gate
# --------------------------
class ConventionalGate:
    """Authenticity and access rights only, as a plain API gateway would check."""

    def __init__(self, auth, latency_ms: float = 0.0):
        self._auth = auth
        self._latency_ms = latency_ms

    def check(self, ctx: RequesterContext, request: AccessRequest):
        sleep_ms(self._latency_ms)
        return check_identity(ctx, request, self._auth)


# --------------------------
# PEP
# --------------------------
class PolicyEnforcementPoint:
    def __init__(
        self,
        pms,
        network_secret: str,
        admin=None,
        broker=None,
        conventional: Optional[ConventionalGate] = None,
        clock=None,
        hop_latency_ms: float = 0.0,
        writer_workers: int = 8,
        completed_limit: int = 10000,
    ):
        if admin is None and conventional is None:
            raise ValueError("a PEP needs either a policy administrator or a conventional gate")
        self._pms = pms
        self._secret = network_secret
        self._admin = admin
        self._broker = broker
        self._conventional = conventional
        self._clock = clock or SystemClock()
        self._hop_ms = hop_latency_ms
        self._writer = ThreadPoolExecutor(max_workers=writer_workers, thread_name_prefix="pep-write")
        self._writes = set()
        self._lock = threading.Lock()
        self._done = threading.Condition(self._lock)
        self.completed_limit = completed_limit
        self._completed: "OrderedDict[str, GatewayResponse]" = OrderedDict()
        self._subscriptions: Dict[str, Any] = {}
        self.handled = 0

    # --------------------------
    # Entry
    # --------------------------
    def handle(
        self,
        header_text: str,
        kind,
        resource: str,
        parameters: Optional[Mapping[str, Any]],
        network_secret: str,
    ) -> GatewayResponse:
        if not hmac.compare_digest(str(network_secret or ""), self._secret):
            raise Unauthorized("the PEP only accepts requests from the client-side components")
        with self._lock:
            self.handled += 1
        sleep_ms(self._hop_ms)

        try:
            ctx = parse_requester(header_text)
            request = AccessRequest.create(
                kind, resource, parameters, ctx, received_at=self._clock.monotonic(),
                request_id=new_request_id(),
            )
        except (RequesterFormatError, ValidationFailure, ValueError) as e:
            logger.warning("malformed request rejected: %s", e)
            return GatewayResponse(None, ERROR, error=f"{type(e).__name__}: {e}")

        if self._conventional is not None:
            return self._handle_conventional(ctx, request)
        if classify(request) is Mode.ASYNC:
            return self._handle_async(ctx, request)
        return self._handle_sync(ctx, request)

    # --------------------------
    # PM access
    # --------------------------
    def _execute(self, request: AccessRequest, token_secret: Optional[str], mode: Mode) -> GatewayResponse:
        sleep_ms(self._hop_ms)
        try:
            pm = self._pms.route(request.resource)
            data = pm.execute(token_secret, PMAction.from_request(request))
        except TokenError as e:
            logger.error("PM refused the token for %s: %s", request.request_id, e)
            return GatewayResponse(
                request.request_id, ERROR, mode, Outcome.GRANT, error=f"{PMRejectedToken.__name__}: {e}"
            )
        except (ZTAError, ValueError, KeyError, ArithmeticError) as e:
            logger.warning("PM action for %s failed: %s", request.request_id, e)
            return GatewayResponse(request.request_id, ERROR, mode, Outcome.GRANT, error=f"{type(e).__name__}: {e}")
        return GatewayResponse(request.request_id, GRANTED, mode, Outcome.GRANT, data=data)

    @staticmethod
    def _rejection(request_id: str, mode: Mode, failures, error: Optional[str] = None) -> GatewayResponse:
        return GatewayResponse(request_id, REJECTED, mode, Outcome.REJECT, failures=tuple(failures), error=error)

    # --------------------------
    # Conventional
    # --------------------------
    def _handle_conventional(self, ctx: RequesterContext, request: AccessRequest) -> GatewayResponse:
        try:
            result = self._conventional.check(ctx, request)
        except InfrastructureError as e:
            failure = Failure("infrastructure_failure", Severity.CRITICAL, f"{CheckCategory.IDENTITY.value}: {e}")
            return self._rejection(request.request_id, Mode.SYNC, [failure])
        if not result.passed:
            return self._rejection(request.request_id, Mode.SYNC, result.failures)
        return self._execute(request, None, Mode.SYNC)

    # --------------------------
    # SYNC
    # --------------------------
    def _handle_sync(self, ctx: RequesterContext, request: AccessRequest) -> GatewayResponse:
        sleep_ms(self._hop_ms)
        try:
            result = self._admin.coordinate(ctx, request)
        except ConsensusFailed as e:
            failure = Failure(type(e).__name__, Severity.CRITICAL, str(e))
            return self._rejection(request.request_id, Mode.SYNC, [failure], error=type(e).__name__)
        except NoEngines as e:
            return GatewayResponse(request.request_id, ERROR, Mode.SYNC, error=f"NoEngines: {e}")

        if result.outcome is Outcome.REJECT:
            return self._rejection(request.request_id, Mode.SYNC, result.failures)
        response = self._execute(request, result.token.secret, Mode.SYNC)
        if response.granted and result.failures:
            response = GatewayResponse(
                response.request_id, response.status, response.mode, response.outcome,
                data=response.data, failures=result.failures,
            )
        return response

    # --------------------------
    # ASYNC
    # --------------------------
    def _handle_async(self, ctx: RequesterContext, request: AccessRequest) -> GatewayResponse:
        topic = result_topic(request.request_id)

        def on_result(message):
            self._on_async_result(request, message.payload)

        # subscribe before dispatch so the result cannot be missed
        self._broker.subscribe(topic, on_result)
        with self._lock:
            self._subscriptions[request.request_id] = on_result
        sleep_ms(self._hop_ms)
        try:
            ack = self._admin.coordinate(ctx, request)
        except NoEngines as e:
            self._unsubscribe(request.request_id)
            return GatewayResponse(request.request_id, ERROR, Mode.ASYNC, error=f"NoEngines: {e}")
        if not isinstance(ack, ValidationInitiated):
            raise ValidationFailure(f"expected an initiation ack for {request.request_id}")
        return GatewayResponse(request.request_id, ACCEPTED, Mode.ASYNC)

    def _unsubscribe(self, request_id: str):
        with self._lock:
            callback = self._subscriptions.pop(request_id, None)
        if callback is not None:
            self._broker.unsubscribe(result_topic(request_id), callback)

    def _on_async_result(self, request: AccessRequest, result):
        with self._lock:
            if request.request_id in self._completed or request.request_id not in self._subscriptions:
                return
        self._unsubscribe(request.request_id)
        future = self._writer.submit(self._complete_async, request, result)
        with self._lock:
            self._writes.add(future)
        future.add_done_callback(self._write_done)

    def _write_done(self, future):
        with self._lock:
            self._writes.discard(future)

    def _complete_async(self, request: AccessRequest, result):
        if result.outcome is Outcome.GRANT:
            response = self._execute(request, result.token.secret, Mode.ASYNC)
        else:
            response = self._rejection(request.request_id, Mode.ASYNC, result.failures)
        with self._done:
            self._completed[request.request_id] = response
            while len(self._completed) > self.completed_limit:
                dropped, _ = self._completed.popitem(last=False)
                logger.warning("final response for %s dropped before anyone collected it", dropped)
            self._done.notify_all()
        return response

    def async_result(self, request_id: str, timeout: Optional[float] = None) -> Optional[GatewayResponse]:
        """Final response of an asynchronous request once its validation has been enforced.

        The response is handed out once; a second call returns None.
        """
        with self._done:
            self._done.wait_for(lambda: request_id in self._completed, timeout=timeout)
            return self._completed.pop(request_id, None)

    def open_requests(self) -> int:
        """Asynchronous requests still tracked: awaiting a result, being enforced or uncollected."""
        with self._lock:
            return len(self._subscriptions) + len(self._writes) + len(self._completed)

    def quiesce(self):
        while True:
            with self._lock:
                writes = list(self._writes)
            if not writes:
                return
            wait(writes)

    def close(self):
        self.quiesce()
        self._writer.shutdown(wait=True)


# --------------------------
# Client-side components
# --------------------------
class ClientComponent:
    """Shared header enrichment of the Client and the Analyser."""

    def __init__(self, pep: PolicyEnforcementPoint, connection: ConnectionInfo, profile: ClientProfile, network_secret: str):
        self._pep = pep
        self.connection = connection
        self.profile = profile
        self._network_secret = network_secret

    def _observed(self, actor: str, auth_token: str) -> RequesterContext:
        return RequesterContext(
            agent=self.profile.agent,
            actor=actor,
            ip_address=self.connection.ip_address,
            mac_address=self.connection.mac_address,
            os_id=self.profile.os_id,
            os_version=self.profile.os_version,
            auth_token=auth_token,
        )

    def enrich(self, headers: Mapping[str, str]) -> RequesterContext:
        header_text = headers.get(REQUESTER_HEADER)
        if not header_text:
            raise MissingCredentials(f"{REQUESTER_HEADER} header is missing")
        try:
            presented = json.loads(header_text)
        except json.JSONDecodeError as e:
            raise MalformedSyntax(f"invalid header syntax: {e.msg}") from e
        if not isinstance(presented, dict):
            raise MalformedSyntax("header must be an object")

        actor, auth_token = require_credentials(presented.get("actor"), presented.get("auth_token"))
        ctx = self._observed(str(actor), str(auth_token))
        observed = ctx.to_dict()
        spoofed = [
            key for key in REQUESTER_KEYS
            if key not in ("actor", "auth_token") and presented.get(key) and presented[key] != observed[key]
        ]
        if spoofed:
            logger.warning("actor %s tried to set %s; overwritten with observed values", actor, ", ".join(spoofed))
        return ctx

    def enrich_and_forward(self, headers: Mapping[str, str], kind, resource: str, parameters=None) -> GatewayResponse:
        ctx = self.enrich(headers)
        return self._pep.handle(ctx.serialize(), kind, resource, parameters, self._network_secret)


class Client(ClientComponent):
    def send(self, actor: str, api_key: str, kind, resource: str, parameters=None) -> GatewayResponse:
        return self.enrich_and_forward(credentials_header(actor, api_key), kind, resource, parameters)

    def write_temperature(self, actor: str, api_key: str, value) -> GatewayResponse:
        return self.send(actor, api_key, RequestKind.WRITE, "temperature", {"value": str(value)})

    def read_temperature(self, actor: str, api_key: str, of_actor: Optional[str] = None, limit=None) -> GatewayResponse:
        params = {}
        if of_actor:
            params["actor_id"] = of_actor
        if limit:
            params["limit"] = str(limit)
        return self.send(actor, api_key, RequestKind.READ, "temperature", params)


class Analyser(ClientComponent):
    """Maintenance surface: actor management, vulnerabilities, engine and history views."""

    def __init__(self, pep, connection, profile, network_secret):
        super().__init__(pep, connection, profile, network_secret)
        self._credentials: Optional[Tuple[str, str]] = None

    def login(self, actor: str, api_key: str) -> list:
        self._credentials = require_credentials(actor, api_key)
        try:
            return self.connected_engines()
        except Unauthorized:
            self._credentials = None
            raise

    def _admin(self, resource: str, parameters: Mapping[str, Any]):
        if self._credentials is None:
            raise Unauthorized("log in with administrator credentials first")
        actor, api_key = self._credentials
        response = self.enrich_and_forward(
            credentials_header(actor, api_key), RequestKind.ADMIN, resource,
            {k: str(v) for k, v in parameters.items() if v is not None},
        )
        if response.rejected:
            raise Unauthorized(f"{resource} request rejected", response.failures)
        if response.status == ERROR:
            raise ValidationFailure(response.error or "request failed")
        return response.data

    def connected_engines(self) -> list:
        return self._admin("analyser", {"query": "connected_engines"})

    def actor_history(self, actor_id: str, limit: int = 10) -> list:
        return self._admin("analyser", {"query": "actor_history", "actor_id": actor_id, "limit": limit})

    def create_actor(self, actor_id: str, role: str, rights: str, api_key: str,
                     ip_address: Optional[str] = None, mac_address: Optional[str] = None) -> dict:
        return self._admin(
            "actors",
            {"action": "create", "actor_id": actor_id, "role": role, "rights": rights,
             "api_key": api_key, "ip_address": ip_address, "mac_address": mac_address},
        )

    def update_actor(self, actor_id: str, **changes) -> dict:
        return self._admin("actors", {"action": "update", "actor_id": actor_id, **changes})

    def delete_actor(self, actor_id: str) -> dict:
        return self._admin("actors", {"action": "delete", "actor_id": actor_id})

    def add_vulnerability(self, os_id: str, affected_versions: str, severity: str, description: str) -> dict:
        return self._admin(
            "vulnerabilities",
            {"os_id": os_id, "affected_versions": affected_versions, "severity": severity,
             "description": description},
        )
