# utils/harness.py
"""
Benchmark harness
- Five system variants (conventional, ZTA without / with ledger, x1 / x4 engines)
- deploy(): one in-process deployment at a time, bootstrapped and pre-filled
- run_in_process(): the same entry points inside a separate local process
- TC1..TC5 with their own measurement windows, five back-to-back runs each
- Fault injection (compromised engines) and engine-count sweeps
"""

import logging
import multiprocessing
import threading
import time
import uuid
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from utils.admin import PolicyAdministrator
from utils.broker import MessageBroker
from utils.clock import SystemClock
from utils.config import Settings, load_settings
from utils.database import Database
from utils.engine import build_engines
from utils.errors import (
    DeploymentConflict,
    StartupTimeout,
    TestSetupFailure,
    UnknownEngine,
    ZTAError,
)
from utils.gateway import ACCEPTED, Analyser, Client, ConnectionInfo, ConventionalGate, PolicyEnforcementPoint
from utils.history import LedgerHistory, NoHistory, RequestLogger, TableHistory
from utils.ledger import READER, SUBMITTER, Ledger, generate_identities
from utils.model import Outcome, Role
from utils.persistence import AuthPM, MaintenancePM, PMRegistry, TemperaturePM, VulnerabilityPM
from utils.sample_data import create_default_admin, insert_startup_vulnerabilities, prefill
from utils.validators import (
    AuthenticationService,
    BlockRegistry,
    ParameterChecker,
    ValidationServices,
    VulnerabilityStore,
)

logger = logging.getLogger(__name__)

HISTORY_LEDGER = "ledger"
HISTORY_TABLE = "table"
HISTORY_NONE = "none"


# --------------------------
# Variants
# --------------------------
class Variant(str, Enum):
    CONVENTIONAL = "CONVENTIONAL"
    NO_BC = "NO_BC"
    NO_BC_X4 = "NO_BC_X4"
    ZTA_BC = "ZTA_BC"
    ZTA_BC_X4 = "ZTA_BC_X4"


@dataclass(frozen=True)
class VariantConfig:
    name: Variant
    engine_count: int
    ledger_enabled: bool
    history_backend: str

    def __post_init__(self):
        if self.name is Variant.CONVENTIONAL:
            if self.engine_count != 0 or self.ledger_enabled or self.history_backend != HISTORY_NONE:
                raise ValueError("the conventional variant has no engines, ledger or history")
            return
        if self.engine_count < 1:
            raise ValueError(f"{self.name.value} needs at least one engine")
        expected = HISTORY_LEDGER if self.name.value.startswith("ZTA_BC") else HISTORY_TABLE
        if self.history_backend != expected or self.ledger_enabled != (expected == HISTORY_LEDGER):
            raise ValueError(f"{self.name.value} keeps history in the {expected} backend")

    @property
    def conventional(self) -> bool:
        return self.engine_count == 0

    @property
    def label(self) -> str:
        if self.engine_count == VARIANTS[self.name].engine_count:
            return self.name.value
        return f"{self.name.value}[{self.engine_count}]"


VARIANTS: Dict[Variant, VariantConfig] = {
    Variant.CONVENTIONAL: VariantConfig(Variant.CONVENTIONAL, 0, False, HISTORY_NONE),
    Variant.NO_BC: VariantConfig(Variant.NO_BC, 3, False, HISTORY_TABLE),
    Variant.NO_BC_X4: VariantConfig(Variant.NO_BC_X4, 12, False, HISTORY_TABLE),
    Variant.ZTA_BC: VariantConfig(Variant.ZTA_BC, 3, True, HISTORY_LEDGER),
    Variant.ZTA_BC_X4: VariantConfig(Variant.ZTA_BC_X4, 12, True, HISTORY_LEDGER),
}


def variant_config(name, engine_count: Optional[int] = None) -> VariantConfig:
    base = VARIANTS[Variant(name)]
    if engine_count is None or engine_count == base.engine_count:
        return base
    return VariantConfig(base.name, engine_count, base.ledger_enabled, base.history_backend)


# --------------------------
# Running deployment
# --------------------------
_active_lock = threading.Lock()
_active: Optional["Deployment"] = None


@dataclass
class Deployment:
    variant: VariantConfig
    settings: Settings
    clock: Any
    db: Database
    pms: PMRegistry
    pep: PolicyEnforcementPoint
    engines: List = field(default_factory=list)
    admin: Optional[PolicyAdministrator] = None
    broker: Optional[MessageBroker] = None
    ledger: Optional[Ledger] = None
    request_logger: Optional[RequestLogger] = None
    simulated_actors: Any = None
    closed: bool = False

    # --------------------------
    # Client-side components
    # --------------------------
    def client(self, connection: Optional[ConnectionInfo] = None, profile=None) -> Client:
        return Client(
            self.pep,
            connection or random_connection(),
            profile or self.settings.client,
            self.settings.bootstrap.network_secret,
        )

    def analyser(self, connection: Optional[ConnectionInfo] = None, login: bool = True) -> Analyser:
        analyser = Analyser(
            self.pep,
            connection or random_connection(),
            self.settings.client,
            self.settings.bootstrap.network_secret,
        )
        if login:
            analyser.login(self.settings.bootstrap.admin_actor_id, self.settings.bootstrap.admin_api_key)
        return analyser

    # --------------------------
    # Engines
    # --------------------------
    def engine(self, engine_id: str):
        for engine in self.engines:
            if engine.engine_id == engine_id:
                return engine
        raise UnknownEngine(engine_id)

    def inject_fault(self, engine_id: str, compromised: bool = True):
        self.engine(engine_id).set_compromised(compromised)

    # --------------------------
    # Lifecycle
    # --------------------------
    def quiesce(self):
        """Wait for async rounds, broker deliveries, PM writes, ledger logging and replication."""
        if self.admin is not None:
            self.admin.quiesce()
        if self.broker is not None:
            self.broker.drain()
        self.pep.quiesce()
        if self.request_logger is not None:
            self.request_logger.flush()
        if self.ledger is not None:
            self.ledger.quiesce()

    def health(self) -> dict:
        return {
            "variant": self.variant.label,
            "engines": [e.health() for e in self.engines],
            "peers": self.ledger.chain_digests() if self.ledger else {},
            "actors": len(self.db.fetch_actors()),
            "vulnerabilities": self.db.count_vulnerabilities(),
            "pa": self.admin.summary() if self.admin else {},
        }

    def close(self):
        global _active
        if self.closed:
            return
        try:
            self.quiesce()
        finally:
            self.pep.close()
            if self.admin is not None:
                self.admin.close()
            if self.broker is not None:
                self.broker.close()
            if self.request_logger is not None:
                self.request_logger.close()
            if self.ledger is not None:
                self.ledger.close()
            self.db.close()
            self.closed = True
            with _active_lock:
                if _active is self:
                    _active = None
            logger.info("deployment %s stopped", self.variant.label)


def random_connection(stationary: bool = True) -> ConnectionInfo:
    raw = uuid.uuid4().bytes
    ip = f"10.{raw[0]}.{raw[1]}.{max(1, raw[2] % 254)}"
    mac = ":".join(f"{b:02x}" for b in (0x02,) + tuple(raw[3:8]))
    return ConnectionInfo(ip, mac if stationary else "")


def _value_range(settings: Settings):
    rule = settings.usage_rules.get("temperature", {}).get("value")
    return (rule.min, rule.max) if rule else (None, None)


def _build(variant: VariantConfig, settings: Settings, clock, db_path: str, allow_fault_injection: bool) -> Deployment:
    h = settings.harness
    db = Database(db_path)
    vulnerabilities = VulnerabilityStore(db)
    auth = AuthenticationService(db)

    ledger = None
    log_backend = None
    if variant.ledger_enabled:
        ledger = Ledger(settings.ledger, generate_identities(settings.ledger.submitter, settings.ledger.peers), clock)
        monitor = LedgerHistory(ledger, ledger.credential_for(settings.ledger.submitter, READER))
        log_backend = LedgerHistory(ledger, ledger.credential_for(settings.ledger.submitter, SUBMITTER))
    elif variant.history_backend == HISTORY_TABLE:
        monitor = log_backend = TableHistory(db)
    else:
        monitor = NoHistory()

    services = ValidationServices(
        auth=auth,
        vulnerabilities=vulnerabilities,
        checker=ParameterChecker(settings.usage_rules),
        history=monitor,
        blocks=BlockRegistry(db),
        policy=settings.behavior,
    )
    engines = build_engines(
        variant.engine_count, services, clock, h.check_latency_ms, allow_fault_injection=allow_fault_injection
    )
    gated = not variant.conventional
    pms = PMRegistry([
        TemperaturePM(db, clock, gated, _value_range(settings)),
        AuthPM(db, clock, gated),
        VulnerabilityPM(vulnerabilities, clock, gated),
        MaintenancePM(lambda: engines, monitor, clock, gated),
    ])

    broker = admin = request_logger = gate = None
    if variant.conventional:
        gate = ConventionalGate(auth, h.check_latency_ms)
    else:
        request_logger = RequestLogger(
            log_backend, settings.ledger.log_retries, settings.ledger.log_backoff_seconds
        )
        broker = MessageBroker()
        admin = PolicyAdministrator(engines, pms, broker, request_logger, settings, clock)

    pep = PolicyEnforcementPoint(
        pms,
        settings.bootstrap.network_secret,
        admin=admin,
        broker=broker,
        conventional=gate,
        clock=clock,
        hop_latency_ms=h.hop_latency_ms,
    )
    return Deployment(
        variant=variant,
        settings=settings,
        clock=clock,
        db=db,
        pms=pms,
        pep=pep,
        engines=engines,
        admin=admin,
        broker=broker,
        ledger=ledger,
        request_logger=request_logger,
    )


def start(
    variant,
    settings: Optional[Settings] = None,
    clock=None,
    db_path: str = ":memory:",
    prefill_data: bool = True,
    allow_fault_injection: bool = True,
) -> Deployment:
    global _active
    if not isinstance(variant, VariantConfig):
        variant = variant_config(variant)
    settings = settings or load_settings()
    clock = clock or SystemClock()

    with _active_lock:
        if _active is not None:
            raise DeploymentConflict(f"{_active.variant.label} is still deployed")
        started = time.monotonic()
        deployment = _build(variant, settings, clock, db_path, allow_fault_injection)
        _active = deployment

    try:
        boot = settings.bootstrap
        create_default_admin(deployment.db, boot.admin_actor_id, boot.admin_api_key)
        insert_startup_vulnerabilities(VulnerabilityStore(deployment.db), boot.vulnerabilities)
        if prefill_data:
            h = settings.harness
            deployment.simulated_actors = prefill(
                deployment.db, h.prefill_actors, h.prefill_readings, h.seed, clock.now()
            )
        unhealthy = [e.engine_id for e in deployment.engines if e.health()["status"] != "up"]
        elapsed = time.monotonic() - started
        if unhealthy or elapsed > settings.harness.startup_timeout_seconds:
            raise StartupTimeout(
                f"{variant.label} not ready after {elapsed:.1f}s (unhealthy engines: {unhealthy})"
            )
    except Exception:
        deployment.close()
        raise
    logger.info("deployment %s ready (%d engines)", variant.label, len(deployment.engines))
    return deployment


@contextmanager
def deploy(variant, **kwargs):
    deployment = start(variant, **kwargs)
    try:
        yield deployment
    finally:
        deployment.close()


def inject_fault(deployment: Deployment, engine_id: str, compromised: bool = True):
    deployment.inject_fault(engine_id, compromised)


# --------------------------
# Test cases
# --------------------------
class TestCase(str, Enum):
    __test__ = False

    TC1 = "TC1"
    TC2 = "TC2"
    TC3 = "TC3"
    TC4 = "TC4"
    TC5 = "TC5"


@dataclass(frozen=True)
class RunResult:
    elapsed: float
    outcomes: Tuple[str, ...]
    data: Tuple = ()


@dataclass(frozen=True)
class TestCaseReport:
    __test__ = False

    variant: str
    test_case: TestCase
    run_times: Tuple[float, ...]
    outcomes: Tuple[Tuple[str, ...], ...] = ()
    final_data: Tuple = ()

    @property
    def average(self) -> float:
        return float(np.mean(self.run_times)) if self.run_times else 0.0

    def to_row(self) -> dict:
        row = {"variant": self.variant, "test_case": self.test_case.value}
        for i, t in enumerate(self.run_times, start=1):
            row[f"run{i}"] = t
        row["average"] = self.average
        return row


@dataclass
class Participant:
    actor_id: str
    api_key: str
    client: Client


def _value(i: int) -> Decimal:
    return Decimal("18.0") + Decimal(i % 100) / 10


def _new_actor(deployment: Deployment, analyser: Analyser, prefix: str, role: Role, rights: str) -> Participant:
    actor_id = f"{prefix}-{uuid.uuid4().hex[:10]}"
    api_key = uuid.uuid4().hex
    connection = random_connection(stationary=role is Role.STATIONARY)
    try:
        analyser.create_actor(
            actor_id,
            role.value,
            rights,
            api_key,
            ip_address=connection.ip_address if role is Role.STATIONARY else None,
            mac_address=connection.mac_address if role is Role.STATIONARY else None,
        )
    except ZTAError as e:
        raise TestSetupFailure(f"could not create {actor_id}: {e}") from e
    return Participant(actor_id, api_key, deployment.client(connection))


def new_sensor(deployment: Deployment, analyser: Analyser, prefix: str = "sensor") -> Participant:
    return _new_actor(deployment, analyser, prefix, Role.STATIONARY, "WRITE:temperature;READ:temperature")


def new_user(deployment: Deployment, analyser: Analyser, prefix: str = "user", rights: str = "READ:temperature") -> Participant:
    return _new_actor(deployment, analyser, prefix, Role.USER, rights)


def final_outcome(deployment: Deployment, response) -> str:
    if response.status == ACCEPTED:
        response = deployment.pep.async_result(response.request_id, timeout=0)
        if response is None:
            return "PENDING"
    if response.outcome is None:
        return "ERROR"
    return response.outcome.value


def _values(response) -> Tuple[str, ...]:
    if not response.granted or not response.data:
        return ()
    return tuple(sorted(str(r.value) for r in response.data))


def _tc1(d: Deployment, timer) -> RunResult:
    n = d.settings.harness.tc1_requests
    user = new_user(d, d.analyser(), "tc1-user", rights="")
    t0 = timer()
    responses = [user.client.read_temperature(user.actor_id, user.api_key) for _ in range(n)]
    elapsed = timer() - t0
    d.quiesce()
    return RunResult(elapsed, tuple(final_outcome(d, r) for r in responses))


def _write_then_read(d: Deployment, timer, writes: int) -> RunResult:
    analyser = d.analyser()
    sensor = new_sensor(d, analyser, "sensor")
    reader = new_user(d, analyser, "reader")
    t0 = timer()
    responses = [sensor.client.write_temperature(sensor.actor_id, sensor.api_key, _value(i)) for i in range(writes)]
    elapsed = timer() - t0
    d.quiesce()
    read = reader.client.read_temperature(reader.actor_id, reader.api_key, of_actor=sensor.actor_id)
    outcomes = tuple(final_outcome(d, r) for r in responses) + (final_outcome(d, read),)
    return RunResult(elapsed, outcomes, _values(read))


def _tc2(d: Deployment, timer) -> RunResult:
    return _write_then_read(d, timer, d.settings.harness.tc2_writes)


def _tc3(d: Deployment, timer) -> RunResult:
    return _write_then_read(d, timer, d.settings.harness.tc3_writes)


def _tc4(d: Deployment, timer) -> RunResult:
    h = d.settings.harness
    analyser = d.analyser()
    sensor = new_sensor(d, analyser, "sensor")
    reader = new_user(d, analyser, "reader")
    for i in range(h.tc4_seed_readings):
        sensor.client.write_temperature(sensor.actor_id, sensor.api_key, _value(i))
    d.quiesce()

    t0 = timer()
    responses = [
        reader.client.read_temperature(reader.actor_id, reader.api_key, of_actor=sensor.actor_id)
        for _ in range(h.tc4_reads)
    ]
    elapsed = timer() - t0
    d.quiesce()
    return RunResult(elapsed, tuple(final_outcome(d, r) for r in responses), _values(responses[-1]) if responses else ())


def _tc5(d: Deployment, timer) -> RunResult:
    h = d.settings.harness

    def worker(sensor: Participant):
        out = []
        for i in range(h.tc5_requests_per_thread):
            out.append(sensor.client.write_temperature(sensor.actor_id, sensor.api_key, _value(i)))
            out.append(sensor.client.read_temperature(sensor.actor_id, sensor.api_key, of_actor=sensor.actor_id))
        return out

    t0 = timer()
    analyser = d.analyser()
    sensors = [new_sensor(d, analyser, f"tc5-sensor{i}") for i in range(h.tc5_threads)]
    with ThreadPoolExecutor(max_workers=h.tc5_threads, thread_name_prefix="tc5") as pool:
        results = list(pool.map(worker, sensors))
    d.quiesce()
    elapsed = timer() - t0

    outcomes = tuple(final_outcome(d, r) for responses in results for r in responses)
    stored = tuple(
        tuple(sorted(str(r.value) for r in d.db.fetch_readings(s.actor_id))) for s in sensors
    )
    return RunResult(elapsed, outcomes, stored)


_RUNNERS: Dict[TestCase, Callable[[Deployment, Callable[[], float]], RunResult]] = {
    TestCase.TC1: _tc1,
    TestCase.TC2: _tc2,
    TestCase.TC3: _tc3,
    TestCase.TC4: _tc4,
    TestCase.TC5: _tc5,
}


def run_test_case(deployment: Deployment, tc, runs: Optional[int] = None, timer=time.perf_counter) -> TestCaseReport:
    """Executes a test case `runs` times back to back on the same deployment."""
    tc = TestCase(tc)
    runs = runs or deployment.settings.harness.runs
    results = []
    for run in range(runs):
        result = _RUNNERS[tc](deployment, timer)
        logger.info("%s %s run %d: %.3fs", deployment.variant.label, tc.value, run + 1, result.elapsed)
        results.append(result)
    return TestCaseReport(
        variant=deployment.variant.label,
        test_case=tc,
        run_times=tuple(r.elapsed for r in results),
        outcomes=tuple(r.outcomes for r in results),
        final_data=tuple(r.data for r in results),
    )


# --------------------------
# Benchmarks
# --------------------------
def benchmark(
    variant,
    test_cases: Iterable = tuple(TestCase),
    settings: Optional[Settings] = None,
    runs: Optional[int] = None,
    engine_count: Optional[int] = None,
) -> List[TestCaseReport]:
    """Reset, init, execute five times, average: once per test case, on a fresh deployment each time."""
    settings = settings or load_settings()
    config = variant if isinstance(variant, VariantConfig) else variant_config(variant, engine_count)
    reports = []
    for tc in test_cases:
        with deploy(config, settings=settings) as deployment:
            reports.append(run_test_case(deployment, tc, runs))
    return reports


def benchmark_all(
    settings: Optional[Settings] = None,
    test_cases: Iterable = tuple(TestCase),
    runs: Optional[int] = None,
    variants: Sequence = tuple(Variant),
) -> List[TestCaseReport]:
    test_cases = tuple(test_cases)
    reports = []
    for variant in variants:
        reports.extend(benchmark(variant, test_cases, settings, runs))
    return reports


def engine_sweep(
    settings: Optional[Settings] = None,
    counts: Optional[Sequence[int]] = None,
    tc=TestCase.TC4,
    runs: Optional[int] = None,
    variant=Variant.ZTA_BC,
) -> List[TestCaseReport]:
    settings = settings or load_settings()
    counts = counts or settings.harness.engine_counts
    reports = []
    for count in counts:
        reports.extend(benchmark(variant, (tc,), settings, runs, engine_count=count))
    return reports


# --------------------------
# Fault injection
# --------------------------
def run_fault_trial(deployment: Deployment, compromised: Sequence[str], requests: int = 100) -> Dict[str, int]:
    """Sends grantable reads with the given engines inverted; counts decided outcomes."""
    # readers exist before the fault and each stays below the behavior trigger
    per_reader = max(1, deployment.settings.behavior.trigger - 1)
    analyser = deployment.analyser()
    readers = [new_user(deployment, analyser, "fault-reader") for _ in range(-(-requests // per_reader))]
    deployment.quiesce()

    for engine_id in compromised:
        deployment.inject_fault(engine_id, True)
    try:
        counts = {Outcome.GRANT.value: 0, Outcome.REJECT.value: 0}
        for i in range(requests):
            reader = readers[i // per_reader]
            response = reader.client.read_temperature(reader.actor_id, reader.api_key, limit=1)
            outcome = final_outcome(deployment, response)
            counts[outcome] = counts.get(outcome, 0) + 1
        return counts
    finally:
        for engine_id in compromised:
            deployment.inject_fault(engine_id, False)


def fault_trial(
    variant,
    engine_ids: Sequence[str],
    requests: int = 100,
    settings: Optional[Settings] = None,
    compromise: bool = True,
) -> Tuple[Dict[str, int], int]:
    """Fresh deployment, fault trial, teardown. Without `compromise` the named engines stay honest."""
    with deploy(variant, settings=settings or load_settings()) as deployment:
        for engine_id in engine_ids:
            deployment.engine(engine_id)
        counts = run_fault_trial(deployment, list(engine_ids) if compromise else [], requests)
        return counts, len(deployment.engines)


# --------------------------
# Separate-process deployment
# --------------------------
def deployment_health(variant, settings: Optional[Settings] = None) -> dict:
    with deploy(variant, settings=settings or load_settings()) as deployment:
        return deployment.health()


def run_in_process(fn: Callable, *args, **kwargs):
    """Runs a module-level harness entry point in a fresh local process and returns its result.

    The deployment it builds (PEP, PA, engines, PMs, ledger) lives and dies in that
    process; only settings go in and picklable reports come back.
    """
    context = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=1, mp_context=context) as pool:
        logger.info("running %s in a separate process", getattr(fn, "__name__", fn))
        return pool.submit(fn, *args, **kwargs).result()
