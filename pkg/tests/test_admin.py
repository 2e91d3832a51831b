import itertools
import threading
from dataclasses import replace

import pytest

from conftest import StubEngine, make_ctx, make_request
from utils.admin import (
    ConsensusRound,
    PolicyAdministrator,
    RoundStatus,
    ValidationInitiated,
    ValidationOutcome,
    majority_threshold,
    tally,
)
from utils.broker import MessageBroker, result_topic
from utils.errors import ConsensusFailed, NoEngines, ValidationFailure, ValidationTimeout
from utils.history import RequestLogger, TableHistory
from utils.model import Mode, Outcome, RequestKind
from utils.persistence import PMRegistry, TemperaturePM


@pytest.fixture
def pms(db, clock):
    return PMRegistry([TemperaturePM(db, clock)])


def _engines(n, compromised=(), honest_reject=False):
    return [
        StubEngine(f"pe{i}", reject=honest_reject != (i in compromised))
        for i in range(1, n + 1)
    ]


def _oracle(n, k, honest):
    threshold = n // 2 + 1
    if n - k >= threshold:
        return honest
    if k >= threshold:
        return honest.inverted()
    return None


@pytest.mark.parametrize("n,expected", [(1, 1), (2, 2), (3, 2), (4, 3), (7, 4), (12, 7)])
def test_majority_threshold(n, expected):
    assert majority_threshold(n) == expected


def test_tally_counts_against_configured_engines():
    assert tally([Outcome.GRANT, Outcome.GRANT], 3) is Outcome.GRANT
    # two votes arrived, but 5 engines were configured
    assert tally([Outcome.GRANT, Outcome.GRANT], 5) is None


# --------------------------
# Consensus safety
# --------------------------
@pytest.mark.parametrize("n", [1, 3, 5, 7, 12])
@pytest.mark.parametrize("honest", [Outcome.GRANT, Outcome.REJECT])
def test_consensus_safety_over_every_vote_pattern(n, honest):
    request = make_request()
    ctx = make_ctx()
    honest_vote = StubEngine("h", reject=honest is Outcome.REJECT).validate(ctx, request)
    bad_vote = StubEngine("b", reject=honest is Outcome.GRANT).validate(ctx, request)

    for k in range(n + 1):
        expected = _oracle(n, k, honest)
        for positions in itertools.combinations(range(n), k):
            rnd = ConsensusRound(request.request_id, n)
            for i in range(n):
                rnd.add_vote(bad_vote if i in positions else honest_vote)
            rnd.close()
            if expected is None:
                assert rnd.status is RoundStatus.FAILED
            else:
                assert rnd.status is RoundStatus.DECIDED
                assert rnd.decided_outcome is expected


@pytest.mark.parametrize("n,k", [(3, 1), (3, 2), (5, 2), (5, 3), (12, 5), (12, 6), (12, 7)])
def test_administrator_rounds_follow_the_oracle(n, k, pms, settings, clock):
    pa = PolicyAdministrator(_engines(n, compromised=set(range(1, k + 1))), pms, None, None, settings, clock)
    try:
        expected = _oracle(n, k, Outcome.GRANT)
        request = make_request()
        if expected is None:
            with pytest.raises(ConsensusFailed):
                pa.validate(make_ctx(), request, Mode.SYNC)
        else:
            assert pa.validate(make_ctx(), request, Mode.SYNC).outcome is expected
    finally:
        pa.close()


def test_round_ignores_votes_after_decision():
    request = make_request()
    vote = StubEngine("pe1").validate(make_ctx(), request)
    rnd = ConsensusRound(request.request_id, 3)
    rnd.add_vote(vote)
    assert rnd.add_vote(vote) is RoundStatus.DECIDED
    assert rnd.add_vote(vote) is RoundStatus.DECIDED
    assert rnd.received == 2


def test_round_rejects_more_votes_than_engines():
    request = make_request()
    grant = StubEngine("g").validate(make_ctx(), request)
    reject = StubEngine("r", reject=True).validate(make_ctx(), request)
    rnd = ConsensusRound(request.request_id, 2)
    rnd.add_vote(grant)
    rnd.add_vote(reject)
    with pytest.raises(ValidationFailure):
        rnd.add_vote(grant)


def test_round_needs_engines():
    with pytest.raises(NoEngines):
        ConsensusRound("r1", 0)


# --------------------------
# Administrator
# --------------------------
def test_grant_issues_token_registered_at_pm(pms, settings, clock):
    pa = PolicyAdministrator(_engines(3), pms, None, None, settings, clock)
    request = make_request()
    result = pa.validate(make_ctx(), request, Mode.SYNC)
    pa.close()
    assert result.outcome is Outcome.GRANT
    assert result.token.ttl_seconds == settings.tokens.ttl_seconds
    assert pms.route("temperature").registered_tokens() == 1
    assert pa.summary()["tokens_issued"] == 1


def test_reject_has_no_token_and_merges_failures(pms, settings, clock):
    pa = PolicyAdministrator(_engines(3, honest_reject=True), pms, None, None, settings, clock)
    result = pa.validate(make_ctx(), make_request(), Mode.SYNC)
    pa.close()
    assert result.outcome is Outcome.REJECT and result.token is None
    assert [f.code for f in result.failures] == ["insufficient_access_rights"]
    assert pms.route("temperature").registered_tokens() == 0


def test_unreachable_pm_turns_grant_into_reject(pms, settings, clock):
    pms.route("temperature").available = False
    pa = PolicyAdministrator(_engines(3), pms, None, None, settings, clock)
    result = pa.validate(make_ctx(), make_request(), Mode.SYNC)
    pa.close()
    assert result.outcome is Outcome.REJECT
    assert result.infrastructure_error
    assert result.failures[-1].code == "pm_unreachable"


def test_slow_engines_time_out(pms, settings, clock):
    settings = replace(settings, consensus=replace(settings.consensus, engine_timeout_seconds=0.1))
    engines = [StubEngine("pe1"), StubEngine("pe2", delay=0.5), StubEngine("pe3", delay=0.5)]
    pa = PolicyAdministrator(engines, pms, None, None, settings, clock)
    with pytest.raises(ValidationTimeout) as err:
        pa.validate(make_ctx(), make_request(), Mode.SYNC)
    pa.close()
    assert err.value.abstentions == 2
    assert pa.summary()["rounds_failed"] == 1


def test_no_engines(pms, settings, clock):
    pa = PolicyAdministrator([], pms, None, None, settings, clock)
    with pytest.raises(NoEngines):
        pa.coordinate(make_ctx(), make_request())
    pa.close()


def test_async_round_publishes_result(pms, settings, clock):
    broker = MessageBroker()
    pa = PolicyAdministrator(_engines(3), pms, broker, None, settings, clock)
    request = make_request(RequestKind.WRITE, params={"value": "20.0"})
    received = []
    done = threading.Event()
    broker.subscribe(result_topic(request.request_id), lambda m: (received.append(m.payload), done.set()))

    ack = pa.coordinate(make_ctx(), request)
    assert isinstance(ack, ValidationInitiated)
    assert ack.topic == result_topic(request.request_id)
    assert done.wait(5)
    pa.close()
    broker.close()
    assert received[0].mode is Mode.ASYNC
    assert received[0].outcome is Outcome.GRANT


def test_decided_rounds_are_logged(pms, settings, clock, db):
    logger = RequestLogger(TableHistory(db), synchronous=True)
    pa = PolicyAdministrator(_engines(3, honest_reject=True), pms, None, logger, settings, clock)
    request = make_request()
    pa.validate(make_ctx(), request, Mode.SYNC)
    pa.close()
    history = db.recent_history("alice", 5)
    assert [(r.request_id, r.outcome) for r in history] == [(request.request_id, Outcome.REJECT)]
    assert pa.summary()["records_submitted"] == 1


def test_outcome_token_invariant():
    with pytest.raises(ValidationFailure):
        ValidationOutcome("r1", Outcome.GRANT, (), Mode.SYNC)
