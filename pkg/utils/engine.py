# utils/engine.py
"""
Policy Engine (PE)
- Runs the Trust Algorithm: IDENTITY -> ENVIRONMENT -> USAGE -> BEHAVIOR, always all four
- Backing-store outages become CRITICAL infrastructure failures, never a pass
- Compromised mode (fault injection) inverts the honest outcome only
"""

import hashlib
import logging
import threading
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

from utils.clock import SystemClock, sleep_ms
from utils.errors import Forbidden, InfrastructureError
from utils.model import (
    CHECK_ORDER,
    AccessRequest,
    CheckCategory,
    CheckResult,
    Decision,
    Failure,
    RequesterContext,
    Severity,
    aggregate_decision,
)
from utils.validators import (
    ValidationServices,
    check_behavior,
    check_environment,
    check_identity,
    check_usage,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineConfig:
    engine_id: str
    compromised: bool = False
    check_latency_ms: Mapping[CheckCategory, float] = field(default_factory=dict)

    @classmethod
    def uniform(cls, engine_id: str, latency_ms: float = 0.0, compromised: bool = False) -> "EngineConfig":
        return cls(engine_id, compromised, {c: latency_ms for c in CHECK_ORDER} if latency_ms else {})


class PolicyEngine:
    def __init__(
        self,
        config: EngineConfig,
        services: ValidationServices,
        clock=None,
        allow_fault_injection: bool = False,
    ):
        if config.compromised and not allow_fault_injection:
            raise Forbidden("compromised engines can only be created by the test harness")
        self.config = config
        self._services = services
        self._clock = clock or SystemClock()
        self._allow_fault_injection = allow_fault_injection
        self._compromised = config.compromised
        self._lock = threading.Lock()
        self.validations = 0
        self.received_payloads = deque(maxlen=1024)

    @property
    def engine_id(self) -> str:
        return self.config.engine_id

    @property
    def compromised(self) -> bool:
        return self._compromised

    def set_compromised(self, flag: bool):
        if not self._allow_fault_injection:
            raise Forbidden("fault injection is disabled for this engine")
        self._compromised = bool(flag)
        logger.warning("engine %s compromised=%s", self.engine_id, self._compromised)

    def health(self) -> dict:
        return {"engine_id": self.engine_id, "status": "up", "validations": self.validations}

    # --------------------------
    # Trust Algorithm
    # --------------------------
    def _run_check(self, category: CheckCategory, ctx: RequesterContext, request: AccessRequest) -> CheckResult:
        s = self._services
        if category is CheckCategory.IDENTITY:
            return check_identity(ctx, request, s.auth)
        if category is CheckCategory.ENVIRONMENT:
            return check_environment(ctx, s.vulnerabilities)
        if category is CheckCategory.USAGE:
            return check_usage(request, s.checker)
        return check_behavior(ctx.actor, request, s.policy, s.history, s.blocks, self._clock.now())

    def validate(self, ctx: RequesterContext, request: AccessRequest) -> Decision:
        self.received_payloads.append(
            (request.request_id, hashlib.sha256(request.to_bytes()).hexdigest())
        )
        results = []
        infrastructure_error = False
        for category in CHECK_ORDER:
            sleep_ms(self.config.check_latency_ms.get(category, 0.0))
            try:
                result = self._run_check(category, ctx, request)
            except InfrastructureError as e:
                logger.warning("engine %s: %s check unavailable: %s", self.engine_id, category.value, e)
                infrastructure_error = True
                result = CheckResult.of(
                    category,
                    [Failure("infrastructure_failure", Severity.CRITICAL, f"{category.value}: {e}")],
                )
            logger.debug("engine %s %s %s passed=%s", self.engine_id, request.request_id, category.value, result.passed)
            results.append(result)

        decision = aggregate_decision(results, self.engine_id, request.request_id, infrastructure_error)
        with self._lock:
            self.validations += 1
        if self._compromised:
            return replace(decision, outcome=decision.outcome.inverted())
        return decision


def build_engines(
    count: int,
    services: ValidationServices,
    clock=None,
    latency_ms: float = 0.0,
    allow_fault_injection: bool = False,
    compromised: Optional[set] = None,
):
    compromised = compromised or set()
    return [
        PolicyEngine(
            EngineConfig.uniform(f"pe{i}", latency_ms, compromised=f"pe{i}" in compromised),
            services,
            clock=clock,
            allow_fault_injection=allow_fault_injection,
        )
        for i in range(1, count + 1)
    ]
