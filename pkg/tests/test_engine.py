import hashlib

import pytest

from conftest import make_ctx, make_request
from utils.auth import hash_api_key
from utils.engine import EngineConfig, PolicyEngine, build_engines
from utils.errors import Forbidden
from utils.model import CHECK_ORDER, Actor, CheckCategory, Outcome, RequestKind, Role, Severity
from utils.validators import Vulnerability


@pytest.fixture
def reader(db):
    db.add_actor(Actor("reader", Role.USER, ((RequestKind.READ, "temperature"),), hash_api_key("rk")))
    return make_ctx("reader", "rk")


def test_grant_carries_all_four_results(services, reader, clock):
    engine = PolicyEngine(EngineConfig("pe1"), services, clock)
    decision = engine.validate(reader, make_request(ctx=reader))
    assert decision.outcome is Outcome.GRANT
    assert [r.check for r in decision.check_results] == list(CHECK_ORDER)
    assert engine.health() == {"engine_id": "pe1", "status": "up", "validations": 1}


def test_rejected_request_still_runs_every_check(services, clock):
    ctx = make_ctx("nobody", "x", os_id="android", os_version="8.1")
    services.vulnerabilities.add_vulnerability(Vulnerability("android", "8.*", Severity.HIGH, "rce"))
    decision = PolicyEngine(EngineConfig("pe1"), services, clock).validate(
        ctx, make_request(params={"limit": "abc"}, ctx=ctx)
    )
    assert decision.outcome is Outcome.REJECT
    failing = {r.check for r in decision.check_results if not r.passed}
    assert failing == {CheckCategory.IDENTITY, CheckCategory.ENVIRONMENT, CheckCategory.USAGE}


def test_store_outage_is_a_critical_failure(services, reader, db, clock):
    db.set_available("vulnerabilities", False)
    decision = PolicyEngine(EngineConfig("pe1"), services, clock).validate(reader, make_request(ctx=reader))
    assert decision.outcome is Outcome.REJECT
    assert decision.infrastructure_error
    env = decision.result_for(CheckCategory.ENVIRONMENT)
    assert env.failures[0].code == "infrastructure_failure"


def test_history_outage_rejects(services, reader, db, clock):
    db.set_available("request_history", False)
    decision = PolicyEngine(EngineConfig("pe1"), services, clock).validate(reader, make_request(ctx=reader))
    assert decision.outcome is Outcome.REJECT
    assert decision.result_for(CheckCategory.BEHAVIOR).failures[0].code == "infrastructure_failure"


def test_compromised_engine_inverts_only_the_outcome(services, reader, clock):
    honest = PolicyEngine(EngineConfig("pe1"), services, clock)
    bad = PolicyEngine(EngineConfig("pe2", compromised=True), services, clock, allow_fault_injection=True)
    request = make_request(ctx=reader)
    a, b = honest.validate(reader, request), bad.validate(reader, request)
    assert b.outcome is a.outcome.inverted()
    assert b.check_results == a.check_results


def test_fault_injection_needs_permission(services, clock):
    with pytest.raises(Forbidden):
        PolicyEngine(EngineConfig("pe1", compromised=True), services, clock)
    engine = PolicyEngine(EngineConfig("pe1"), services, clock)
    with pytest.raises(Forbidden):
        engine.set_compromised(True)


def test_engines_receive_identical_payloads(services, reader, clock):
    engines = build_engines(3, services, clock)
    assert [e.engine_id for e in engines] == ["pe1", "pe2", "pe3"]
    request = make_request(ctx=reader)
    for engine in engines:
        engine.validate(reader, request)
    expected = (request.request_id, hashlib.sha256(request.to_bytes()).hexdigest())
    assert all(e.received_payloads[-1] == expected for e in engines)


def test_uniform_latency_config():
    config = EngineConfig.uniform("pe1", 20.0)
    assert set(config.check_latency_ms.values()) == {20.0}
    assert EngineConfig.uniform("pe1").check_latency_ms == {}


def test_replicas_decide_identically(services, reader, clock):
    services.vulnerabilities.add_vulnerability(Vulnerability("android", "8.*", Severity.HIGH, "rce"))
    engines = build_engines(12, services, clock)
    android = make_ctx("reader", "rk", os_id="android", os_version="8.1")
    stranger = make_ctx("nobody", "x")
    requests = [
        (reader, make_request(ctx=reader)),
        (reader, make_request(params={"limit": "abc"}, ctx=reader)),
        (reader, make_request(RequestKind.WRITE, params={"value": "20.0"}, ctx=reader)),
        (android, make_request(ctx=android)),
        (stranger, make_request(ctx=stranger)),
    ]
    for ctx, request in requests:
        decisions = [engine.validate(ctx, request) for engine in engines]
        assert len({(d.outcome, d.check_results) for d in decisions}) == 1
        assert [d.engine_id for d in decisions] == [e.engine_id for e in engines]
