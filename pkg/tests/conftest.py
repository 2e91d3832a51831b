import time

import pytest

from utils.clock import ManualClock
from utils.config import load_settings
from utils.database import Database
from utils.model import (
    CHECK_ORDER,
    AccessRequest,
    CheckCategory,
    CheckResult,
    Failure,
    RequesterContext,
    RequestKind,
    Severity,
    aggregate_decision,
)
from utils.validators import (
    AuthenticationService,
    BlockRegistry,
    ParameterChecker,
    ValidationServices,
    VulnerabilityStore,
)
from utils.history import TableHistory


@pytest.fixture
def clock():
    return ManualClock()


@pytest.fixture
def settings():
    """Shipped configuration with the artificial latency switched off and small test counts."""
    return load_settings().with_harness(
        check_latency_ms=0.0,
        hop_latency_ms=0.0,
        runs=2,
        tc1_requests=5,
        tc2_writes=6,
        tc3_writes=8,
        tc4_reads=8,
        tc4_seed_readings=3,
        tc5_threads=4,
        tc5_requests_per_thread=3,
        prefill_actors=4,
        prefill_readings=8,
    )


@pytest.fixture
def db():
    database = Database(":memory:")
    yield database
    database.close()


@pytest.fixture
def services(db, settings):
    return ValidationServices(
        auth=AuthenticationService(db),
        vulnerabilities=VulnerabilityStore(db),
        checker=ParameterChecker(settings.usage_rules),
        history=TableHistory(db),
        blocks=BlockRegistry(db),
        policy=settings.behavior,
    )


def make_ctx(actor="alice", auth_token="alice-key", ip="", mac="", os_id="ubuntu", os_version="22.04"):
    return RequesterContext(
        agent="edge-client/1.0",
        actor=actor,
        ip_address=ip,
        mac_address=mac,
        os_id=os_id,
        os_version=os_version,
        auth_token=auth_token,
    )


def make_request(kind=RequestKind.READ, resource="temperature", params=None, ctx=None, request_id=None):
    return AccessRequest.create(kind, resource, params or {}, ctx or make_ctx(), 0.0, request_id=request_id)


class StubEngine:
    """Engine double that votes a fixed way without touching any store."""

    def __init__(self, engine_id, reject=False, delay=0.0):
        self.engine_id = engine_id
        self.reject = reject
        self.delay = delay

    def validate(self, ctx, request):
        if self.delay:
            time.sleep(self.delay)
        failures = [Failure("insufficient_access_rights", Severity.CRITICAL, "stub")] if self.reject else []
        results = [
            CheckResult.of(c, failures if c is CheckCategory.IDENTITY else []) for c in CHECK_ORDER
        ]
        return aggregate_decision(results, self.engine_id, request.request_id)

    def health(self):
        return {"engine_id": self.engine_id, "status": "up", "validations": 0}


@pytest.fixture
def ctx():
    return make_ctx()
