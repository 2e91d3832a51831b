import json
import time

import pytest

from utils.errors import MissingCredentials, Unauthorized
from utils.gateway import ACCEPTED, ERROR, GRANTED, REJECTED, ConnectionInfo, credentials_header
from utils.harness import Variant, deploy, new_sensor, new_user
from utils.model import REQUESTER_HEADER, Mode, Outcome, RequestKind


@pytest.fixture
def zta(settings, clock):
    with deploy(Variant.NO_BC, settings=settings, clock=clock, prefill_data=False) as d:
        yield d


@pytest.fixture
def analyser(zta):
    return zta.analyser()


# --------------------------
# Client-side enrichment
# --------------------------
def test_client_overwrites_spoofed_metadata(zta):
    client = zta.client(ConnectionInfo("10.9.9.9", "02:00:00:00:00:99"))
    headers = credentials_header("alice", "k", ip_address="1.2.3.4", os_id="spoofOS")
    ctx = client.enrich(headers)
    assert (ctx.ip_address, ctx.mac_address) == ("10.9.9.9", "02:00:00:00:00:99")
    assert ctx.os_id == zta.settings.client.os_id
    assert (ctx.actor, ctx.auth_token) == ("alice", "k")


def test_client_requires_credentials(zta):
    client = zta.client()
    with pytest.raises(MissingCredentials):
        client.send("", "k", RequestKind.READ, "temperature")
    with pytest.raises(MissingCredentials):
        client.enrich({})
    assert zta.pep.handled == 0


def test_pep_only_accepts_client_components(zta):
    header = credentials_header("alice", "k")[REQUESTER_HEADER]
    with pytest.raises(Unauthorized):
        zta.pep.handle(header, RequestKind.READ, "temperature", None, "guessed-secret")


def test_malformed_header_is_an_error_response(zta):
    secret = zta.settings.bootstrap.network_secret
    response = zta.pep.handle(json.dumps({"actor": "a"}), RequestKind.READ, "temperature", None, secret)
    assert response.status == ERROR
    assert response.error.startswith("MissingField")


# --------------------------
# SYNC / ASYNC
# --------------------------
def test_sync_read_is_granted_with_data(zta, analyser):
    sensor = new_sensor(zta, analyser)
    response = sensor.client.read_temperature(sensor.actor_id, sensor.api_key, of_actor=sensor.actor_id)
    assert response.status == GRANTED
    assert response.mode is Mode.SYNC
    assert response.data == []


def test_async_write_is_acknowledged_then_enforced(zta, analyser):
    sensor = new_sensor(zta, analyser)
    ack = sensor.client.write_temperature(sensor.actor_id, sensor.api_key, "21.5")
    assert ack.status == ACCEPTED and ack.mode is Mode.ASYNC and ack.outcome is None
    zta.quiesce()
    final = zta.pep.async_result(ack.request_id, timeout=1)
    assert final.granted and final.mode is Mode.ASYNC
    assert [str(r.value) for r in zta.db.fetch_readings(sensor.actor_id)] == ["21.5"]


def test_rejected_async_write_never_reaches_the_pm(zta, analyser):
    user = new_user(zta, analyser)
    ack = user.client.write_temperature(user.actor_id, user.api_key, "21.5")
    zta.quiesce()
    final = zta.pep.async_result(ack.request_id, timeout=1)
    assert final.status == REJECTED
    assert "insufficient_access_rights" in final.failure_codes()
    assert zta.pms.route("temperature").calls == 0


def test_async_ack_does_not_wait_for_validation(settings, clock):
    slow = settings.with_harness(check_latency_ms=125.0)
    with deploy(Variant.NO_BC, settings=slow, clock=clock, prefill_data=False) as d:
        sensor = new_sensor(d, d.analyser())
        t0 = time.perf_counter()
        ack = sensor.client.write_temperature(sensor.actor_id, sensor.api_key, "20.0")
        elapsed = time.perf_counter() - t0
        assert ack.status == ACCEPTED
        assert elapsed < 0.1
        d.quiesce()
        assert d.pep.async_result(ack.request_id, timeout=1).granted

        t0 = time.perf_counter()
        read = sensor.client.read_temperature(sensor.actor_id, sensor.api_key)
        assert read.granted
        # four checks at 125 ms each
        assert time.perf_counter() - t0 >= 0.5


def test_unreachable_pm_rejects_sync_request(zta, analyser):
    reader = new_user(zta, analyser)
    zta.pms.route("temperature").available = False
    response = reader.client.read_temperature(reader.actor_id, reader.api_key)
    assert response.status == REJECTED
    assert response.failure_codes()[-1] == "pm_unreachable"


# --------------------------
# Behavior chain
# --------------------------
@pytest.mark.parametrize("variant", [Variant.NO_BC, Variant.ZTA_BC])
def test_repeated_rejections_block_the_actor(settings, clock, variant):
    with deploy(variant, settings=settings, clock=clock, prefill_data=False) as d:
        user = new_user(d, d.analyser(), rights="")
        responses = []
        for _ in range(6):
            responses.append(user.client.read_temperature(user.actor_id, user.api_key))
            d.quiesce()
        clock.advance(301)
        after = user.client.read_temperature(user.actor_id, user.api_key)

    assert all(r.outcome is Outcome.REJECT for r in responses)
    assert all("temporarily_blocked" not in r.failure_codes() for r in responses[:5])
    assert "temporarily_blocked" in responses[5].failure_codes()
    assert after.rejected
    assert "temporarily_blocked" not in after.failure_codes()


# --------------------------
# Conventional
# --------------------------
def test_conventional_gateway_checks_rights_only(settings, clock):
    with deploy(Variant.CONVENTIONAL, settings=settings, clock=clock, prefill_data=False) as d:
        analyser = d.analyser()
        sensor = new_sensor(d, analyser)
        user = new_user(d, analyser, rights="")

        write = sensor.client.write_temperature(sensor.actor_id, sensor.api_key, "19.5")
        assert write.status == GRANTED and write.mode is Mode.SYNC
        denied = user.client.read_temperature(user.actor_id, user.api_key)
        assert denied.status == REJECTED
        assert d.pms.route("temperature").registered_tokens() == 0


def test_conventional_write_of_garbage_is_an_error(settings, clock):
    with deploy(Variant.CONVENTIONAL, settings=settings, clock=clock, prefill_data=False) as d:
        sensor = new_sensor(d, d.analyser())
        response = sensor.client.write_temperature(sensor.actor_id, sensor.api_key, "abc")
        assert response.status == ERROR
        assert response.error.startswith("ValidationFailure")
        assert d.db.fetch_readings(sensor.actor_id) == []
        assert d.pms.route("temperature").registered_tokens() == 0


# --------------------------
# Plausibility and bookkeeping
# --------------------------
def test_out_of_range_write_is_not_stored(zta, analyser):
    sensor = new_sensor(zta, analyser)
    ack = sensor.client.write_temperature(sensor.actor_id, sensor.api_key, "999")
    assert ack.status == ACCEPTED
    zta.quiesce()
    final = zta.pep.async_result(ack.request_id, timeout=1)
    assert final.status == ERROR
    assert "outside" in final.error
    assert zta.db.fetch_readings(sensor.actor_id) == []
    assert zta.pms.route("temperature").registered_tokens() == 0


def test_async_bookkeeping_is_released(zta, analyser):
    sensor = new_sensor(zta, analyser)
    acks = [sensor.client.write_temperature(sensor.actor_id, sensor.api_key, f"20.{i}") for i in range(10)]
    zta.quiesce()
    assert all(zta.pep.async_result(a.request_id, timeout=1).granted for a in acks)
    assert zta.pep.async_result(acks[0].request_id, timeout=0) is None
    assert zta.pep.open_requests() == 0
    assert zta.broker.open_topics() == 0
    assert zta.broker.retained_topics() == []


def test_sync_requests_use_no_broker(zta, analyser):
    reader = new_user(zta, analyser)
    published = zta.broker.published
    for _ in range(5):
        assert reader.client.read_temperature(reader.actor_id, reader.api_key).granted
    zta.quiesce()
    assert zta.broker.published == published
