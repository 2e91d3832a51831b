import itertools
import json
import random

import pytest

from conftest import make_ctx, make_request
from utils.errors import MalformedSyntax, MissingCategory, MissingField, UnknownField, ValidationFailure
from utils.model import (
    CHECK_ORDER,
    REQUESTER_KEYS,
    AccessRequest,
    AccessToken,
    Actor,
    CheckCategory,
    CheckResult,
    Failure,
    Mode,
    Outcome,
    RequesterContext,
    RequestKind,
    Role,
    Severity,
    aggregate_decision,
    classify,
    decide,
    format_rights,
    parse_requester,
    parse_rights,
)


def _header(**overrides):
    values = make_ctx().to_dict()
    values.update(overrides)
    return json.dumps(values)


# --------------------------
# X-Requester
# --------------------------
def test_header_roundtrip_keeps_key_order():
    ctx = make_ctx(ip="10.0.0.5", mac="02:00:00:00:00:01")
    text = ctx.serialize()
    assert list(json.loads(text)) == list(REQUESTER_KEYS)
    assert parse_requester(text) == ctx


def test_header_missing_key():
    values = make_ctx().to_dict()
    del values["os_id"]
    with pytest.raises(MissingField):
        parse_requester(json.dumps(values))


def test_header_unknown_key():
    with pytest.raises(UnknownField):
        parse_requester(_header(tenant="acme"))


@pytest.mark.parametrize("text", ["{not json", "[]", '{"agent": 1}'])
def test_header_malformed(text):
    with pytest.raises((MalformedSyntax, MissingField)):
        parse_requester(text)


def test_header_duplicate_key_is_malformed():
    text = '{"agent":"a","agent":"b"}'
    with pytest.raises(MalformedSyntax):
        parse_requester(text)


def test_header_empty_credentials():
    with pytest.raises(MissingField):
        parse_requester(_header(auth_token=""))


def test_repr_masks_secret():
    assert "alice-key" not in repr(make_ctx())


# --------------------------
# Requests
# --------------------------
@pytest.mark.parametrize(
    "kind,resource,mode",
    [
        (RequestKind.WRITE, "temperature", Mode.ASYNC),
        (RequestKind.READ, "temperature", Mode.SYNC),
        (RequestKind.ADMIN, "actors", Mode.SYNC),
        (RequestKind.ADMIN, "analyser", Mode.SYNC),
    ],
)
def test_classify(kind, resource, mode):
    assert classify(make_request(kind, resource)) is mode


def test_admin_only_on_admin_resources():
    with pytest.raises(ValidationFailure):
        make_request(RequestKind.ADMIN, "temperature")


def test_duplicate_parameter_keys():
    with pytest.raises(ValidationFailure):
        AccessRequest.create(RequestKind.READ, "temperature", [("a", 1), ("a", 2)], make_ctx(), 0.0)


def test_canonical_bytes_are_stable():
    r = make_request(params={"limit": 3}, request_id="r1")
    assert r.to_bytes() == make_request(params={"limit": "3"}, request_id="r1").to_bytes()


# --------------------------
# Decisions
# --------------------------
def test_critical_failure_rejects():
    assert decide([Failure("x", Severity.HIGH, "")]) is Outcome.GRANT
    assert decide([Failure("x", Severity.CRITICAL, "")]) is Outcome.REJECT
    assert decide([]) is Outcome.GRANT


def test_decision_needs_all_categories():
    results = [CheckResult.of(c) for c in CHECK_ORDER[:3]]
    with pytest.raises(MissingCategory):
        aggregate_decision(results, "pe1", "r1")


def test_decision_keeps_every_result_even_when_rejected():
    results = [
        CheckResult.of(CheckCategory.IDENTITY, [Failure("unknown_actor", Severity.CRITICAL, "")]),
        CheckResult.of(CheckCategory.ENVIRONMENT),
        CheckResult.of(CheckCategory.USAGE, [Failure("semantic_error", Severity.HIGH, "")]),
        CheckResult.of(CheckCategory.BEHAVIOR),
    ]
    decision = aggregate_decision(list(reversed(results)), "pe1", "r1")
    assert decision.outcome is Outcome.REJECT
    assert [r.check for r in decision.check_results] == list(CHECK_ORDER)
    assert decision.max_severity is Severity.CRITICAL
    assert decision.result_for(CheckCategory.USAGE).failures[0].code == "semantic_error"


def test_check_result_passed_matches_failures():
    with pytest.raises(ValidationFailure):
        CheckResult(CheckCategory.USAGE, True, (Failure("x", Severity.LOW, ""),))


# --------------------------
# Tokens & actors
# --------------------------
def test_token_ttl_and_scope():
    token = AccessToken.issue(RequestKind.WRITE, "temperature", 60, now=100.0)
    assert not token.expired(160.0)
    assert token.expired(160.5)
    assert token.permits(RequestKind.WRITE, "temperature")
    assert not token.permits(RequestKind.READ, "temperature")
    assert token.secret[:6] in repr(token) and token.secret not in repr(token)


@pytest.mark.parametrize("ttl", [0, -1, 1.5])
def test_token_ttl_must_be_positive_integer(ttl):
    with pytest.raises(ValidationFailure):
        AccessToken("s", ttl, (), 0.0)


def test_rights_parsing():
    rights = parse_rights("read:temperature; WRITE:temperature,READ:temperature")
    assert rights == ((RequestKind.READ, "temperature"), (RequestKind.WRITE, "temperature"))
    assert parse_rights(format_rights(rights)) == rights
    assert parse_rights("") == ()
    with pytest.raises(ValidationFailure):
        parse_rights("FLY:temperature")


def test_stationary_actor_needs_binding():
    with pytest.raises(ValidationFailure):
        Actor("s1", Role.STATIONARY, (), "h")
    with pytest.raises(ValidationFailure):
        Actor("u1", Role.USER, (), "h", ip_address="10.0.0.1")


# --------------------------
# Properties
# --------------------------
def _random_text(rng, allow_empty=True):
    alphabet = 'abcXYZ019 .:-_"\\/{}[],é中\U0001f600\t\n'
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(0 if allow_empty else 1, 12)))


def test_random_headers_roundtrip():
    rng = random.Random(5)
    for _ in range(100):
        values = {key: _random_text(rng) for key in REQUESTER_KEYS}
        values["actor"] = _random_text(rng, allow_empty=False)
        values["auth_token"] = _random_text(rng, allow_empty=False)
        ctx = RequesterContext(**values)
        assert parse_requester(ctx.serialize()) == ctx


def test_decision_over_every_severity_combination():
    options = (None,) + tuple(Severity)
    for combo in itertools.product(options, repeat=len(CHECK_ORDER)):
        results = [
            CheckResult.of(check, [Failure("f", severity, "")] if severity else [])
            for check, severity in zip(CHECK_ORDER, combo)
        ]
        decision = aggregate_decision(results, "pe1", "r1")
        present = [s for s in combo if s is not None]
        expected = Outcome.REJECT if Severity.CRITICAL in present else Outcome.GRANT
        assert decision.outcome is expected
        assert decision.max_severity == max(present, default=None)
        assert tuple(r.check for r in decision.check_results) == CHECK_ORDER


def test_tokens_are_unique():
    secrets = {AccessToken.issue(RequestKind.READ, "temperature", 60, 0.0).secret for _ in range(10_000)}
    assert len(secrets) == 10_000
