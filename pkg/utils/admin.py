# utils/admin.py
"""
Policy Administrator (PA)
- Fans every validation out to all engines, majority vote with early termination
- Issues single-request access tokens, registered at the target PM first
- SYNC rounds answer the PEP directly; ASYNC rounds publish on the broker
- Every decided round is handed to the request logger
"""

import logging
import threading
from collections import Counter
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from utils.broker import result_topic
from utils.clock import SystemClock
from utils.errors import (
    BrokerUnavailable,
    ConsensusFailed,
    NoEngines,
    PMUnreachable,
    ValidationFailure,
    ValidationTimeout,
)
from utils.model import (
    AccessRequest,
    AccessToken,
    Decision,
    Failure,
    HistoryRecord,
    Mode,
    Outcome,
    RequesterContext,
    Severity,
    classify,
)

logger = logging.getLogger(__name__)


# --------------------------
# Consensus round
# --------------------------
class RoundStatus(str, Enum):
    OPEN = "OPEN"
    DECIDED = "DECIDED"
    FAILED = "FAILED"


def majority_threshold(engine_count: int) -> int:
    return engine_count // 2 + 1


def tally(outcomes: Iterable[Outcome], engine_count: int) -> Optional[Outcome]:
    """Outcome holding a strict majority of the configured engine count, if any."""
    counts = Counter(outcomes)
    threshold = majority_threshold(engine_count)
    for outcome, votes in counts.items():
        if votes >= threshold:
            return outcome
    return None


@dataclass
class ConsensusRound:
    request_id: str
    engine_count: int
    votes: Counter = field(default_factory=Counter)
    decisions: List[Decision] = field(default_factory=list)
    abstentions: int = 0
    timeouts: int = 0
    status: RoundStatus = RoundStatus.OPEN
    decided_outcome: Optional[Outcome] = None

    def __post_init__(self):
        if self.engine_count < 1:
            raise NoEngines("a consensus round needs at least one engine")
        self._lock = threading.Lock()

    @property
    def threshold(self) -> int:
        return majority_threshold(self.engine_count)

    @property
    def received(self) -> int:
        return sum(self.votes.values()) + self.abstentions

    def add_vote(self, decision: Decision) -> RoundStatus:
        with self._lock:
            if self.status is not RoundStatus.OPEN:
                return self.status
            if self.received >= self.engine_count:
                raise ValidationFailure("more votes than engines")
            self.votes[decision.outcome] += 1
            self.decisions.append(decision)
            if self.votes[decision.outcome] >= self.threshold:
                self.status = RoundStatus.DECIDED
                self.decided_outcome = decision.outcome
            return self.status

    def abstain(self, timed_out: bool = False) -> RoundStatus:
        with self._lock:
            if self.status is RoundStatus.OPEN and self.received < self.engine_count:
                self.abstentions += 1
                if timed_out:
                    self.timeouts += 1
            return self.status

    def close(self) -> RoundStatus:
        with self._lock:
            if self.status is RoundStatus.OPEN:
                self.status = RoundStatus.FAILED
            return self.status

    def merged_failures(self) -> Tuple[Failure, ...]:
        """Union of the failures reported by the engines that voted for the decided outcome."""
        merged = []
        for decision in self.decisions:
            if decision.outcome is self.decided_outcome:
                for failure in decision.failures:
                    if failure not in merged:
                        merged.append(failure)
        return tuple(merged)


# --------------------------
# Round results
# --------------------------
@dataclass(frozen=True)
class ValidationOutcome:
    request_id: str
    outcome: Outcome
    failures: Tuple[Failure, ...]
    mode: Mode
    token: Optional[AccessToken] = None
    infrastructure_error: bool = False

    def __post_init__(self):
        if (self.token is not None) != (self.outcome is Outcome.GRANT):
            raise ValidationFailure("a token is present exactly when access is granted")


@dataclass(frozen=True)
class ValidationInitiated:
    request_id: str
    topic: str
    mode: Mode = Mode.ASYNC


# --------------------------
# Policy Administrator
# --------------------------
class PolicyAdministrator:
    def __init__(self, engines: Sequence, pms, broker, request_logger, settings, clock=None):
        self._engines = list(engines)
        self._pms = pms
        self._broker = broker
        self._request_logger = request_logger
        self._settings = settings
        self._clock = clock or SystemClock()
        self._timeout = settings.consensus.engine_timeout_seconds
        self._slots = ThreadPoolExecutor(
            max_workers=settings.consensus.validation_slots, thread_name_prefix="pe-slot"
        )
        self._async = ThreadPoolExecutor(
            max_workers=settings.consensus.async_workers, thread_name_prefix="pa-async"
        )
        self._inflight = set()
        self._inflight_lock = threading.Lock()
        self.metrics = Counter()
        self._metrics_lock = threading.Lock()

    def _bump(self, key: str):
        with self._metrics_lock:
            self.metrics[key] += 1

    @property
    def engines(self) -> List:
        return list(self._engines)

    def engine_ids(self) -> List[str]:
        return [e.engine_id for e in self._engines]

    # --------------------------
    # Entry point from the PEP
    # --------------------------
    def coordinate(self, ctx: RequesterContext, request: AccessRequest):
        if not self._engines:
            raise NoEngines("no policy engines registered")
        mode = classify(request)
        if mode is Mode.SYNC:
            return self.validate(ctx, request, Mode.SYNC)

        future = self._async.submit(self._complete_async, ctx, request)
        with self._inflight_lock:
            self._inflight.add(future)
        future.add_done_callback(self._forget)
        return ValidationInitiated(request.request_id, result_topic(request.request_id))

    def _forget(self, future):
        with self._inflight_lock:
            self._inflight.discard(future)

    def run_round(self, ctx: RequesterContext, request: AccessRequest) -> ConsensusRound:
        rnd = ConsensusRound(request.request_id, len(self._engines))
        pending = {self._slots.submit(engine.validate, ctx, request) for engine in self._engines}
        deadline = self._clock.monotonic() + self._timeout

        while pending and rnd.status is RoundStatus.OPEN:
            remaining = max(0.0, deadline - self._clock.monotonic())
            done, pending = wait(pending, timeout=remaining, return_when=FIRST_COMPLETED)
            if not done:
                break
            for future in done:
                try:
                    rnd.add_vote(future.result())
                except Exception as e:
                    logger.error("engine crashed during %s: %s", request.request_id, e)
                    rnd.abstain()

        timed_out = rnd.status is RoundStatus.OPEN
        for future in pending:
            future.cancel()
            if timed_out:
                rnd.abstain(timed_out=True)
        if timed_out and pending:
            logger.warning("%d engines missed the deadline for %s", len(pending), request.request_id)
        rnd.close()
        return rnd

    def validate(self, ctx: RequesterContext, request: AccessRequest, mode: Mode) -> ValidationOutcome:
        rnd = self.run_round(ctx, request)
        if rnd.status is RoundStatus.FAILED:
            self._bump("rounds_failed")
            votes = {o.value: n for o, n in rnd.votes.items()}
            error = ValidationTimeout if rnd.timeouts else ConsensusFailed
            raise error(request.request_id, votes, rnd.abstentions)

        self._bump("rounds_decided")
        outcome = rnd.decided_outcome
        failures = rnd.merged_failures()
        infrastructure_error = any(
            d.infrastructure_error for d in rnd.decisions if d.outcome is outcome
        )
        token = None
        if outcome is Outcome.GRANT:
            try:
                token = self.issue_token(request, outcome)
            except PMUnreachable as e:
                logger.error("grant for %s aborted: %s", request.request_id, e)
                outcome = Outcome.REJECT
                infrastructure_error = True
                failures = failures + (Failure("pm_unreachable", Severity.CRITICAL, str(e)),)

        logger.info("round %s decided %s (%s)", request.request_id, outcome.value, mode.value)
        self.record_to_ledger(request, outcome)
        return ValidationOutcome(
            request_id=request.request_id,
            outcome=outcome,
            failures=failures,
            mode=mode,
            token=token,
            infrastructure_error=infrastructure_error,
        )

    def _complete_async(self, ctx: RequesterContext, request: AccessRequest):
        try:
            result = self.validate(ctx, request, Mode.ASYNC)
        except ConsensusFailed as e:
            result = ValidationOutcome(
                request_id=request.request_id,
                outcome=Outcome.REJECT,
                failures=(Failure(type(e).__name__, Severity.CRITICAL, str(e)),),
                mode=Mode.ASYNC,
            )
        try:
            self.publish_async_result(result)
        except BrokerUnavailable as e:
            logger.error("async result for %s not delivered: %s", request.request_id, e)
        return result

    # --------------------------
    # Tokens
    # --------------------------
    def issue_token(self, request: AccessRequest, outcome: Outcome) -> AccessToken:
        if outcome is not Outcome.GRANT:
            raise ValidationFailure("tokens are only issued for granted requests")
        pm = self._pms.route(request.resource)
        token = AccessToken.issue(
            request.kind, request.resource, self._settings.tokens.ttl_seconds, self._clock.now()
        )
        pm.register_token(token, request.request_id)
        self._bump("tokens_issued")
        return token

    # --------------------------
    # Broker & ledger
    # --------------------------
    def publish_async_result(self, result: ValidationOutcome):
        if result.mode is not Mode.ASYNC:
            raise ValidationFailure("only asynchronous results are published")
        try:
            self._broker.publish(result_topic(result.request_id), result)
        except BrokerUnavailable:
            self._bump("broker_failures")
            raise
        self._bump("published")

    def record_to_ledger(self, request: AccessRequest, outcome: Outcome):
        if self._request_logger is None:
            return
        self._request_logger.submit(HistoryRecord.from_request(request, outcome, self._clock.now()))

    # --------------------------
    # Lifecycle
    # --------------------------
    def quiesce(self):
        while True:
            with self._inflight_lock:
                futures = list(self._inflight)
            if not futures:
                return
            wait(futures)

    def summary(self) -> Dict[str, int]:
        out = dict(self.metrics)
        if self._request_logger is not None:
            out["records_submitted"] = self._request_logger.submitted
            out["records_dropped"] = self._request_logger.dropped
        return out

    def close(self):
        self.quiesce()
        self._async.shutdown(wait=True)
        self._slots.shutdown(wait=True, cancel_futures=True)
