# utils/config.py
"""
Deployment configuration
- Frozen dataclasses with working defaults for every knob
- load_settings() overlays a JSON file (explicit path, ZTA_CONFIG, or config/zta.json)
- Parameter rule sets for the usage check are declared per resource
"""

import json
import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

from utils.errors import ConfigurationError, ValidationFailure
from utils.model import RequestKind, Severity
from utils.validators import BehaviorPolicy, ParameterRule, UsageRules, Vulnerability

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config" / "zta.json"
CONFIG_ENV = "ZTA_CONFIG"
# bootstrap secrets that may come from the environment instead of the file
SECRET_ENV = {"ZTA_NETWORK_SECRET": "network_secret", "ZTA_ADMIN_API_KEY": "admin_api_key"}


# --------------------------
# Sections
# --------------------------
@dataclass(frozen=True)
class TokenSettings:
    ttl_seconds: int = 60


@dataclass(frozen=True)
class ConsensusSettings:
    engine_timeout_seconds: float = 10.0
    validation_slots: int = 3
    async_workers: int = 16


@dataclass(frozen=True)
class LedgerSettings:
    digest: str = "sha256"
    batch_size: int = 1
    propagation_delay_seconds: float = 0.0
    peers: Tuple[str, ...] = ("peer1", "peer2", "peer3")
    submitter: str = "peer1"
    log_retries: int = 3
    log_backoff_seconds: float = 0.05


@dataclass(frozen=True)
class ClientProfile:
    """What the Client component reports about the machine it runs on."""

    agent: str = "edge-client/1.0"
    os_id: str = "ubuntu"
    os_version: str = "22.04"


@dataclass(frozen=True)
class BootstrapSettings:
    admin_actor_id: str = "admin"
    admin_api_key: str = "admin-bootstrap-key"
    network_secret: str = "edge-network-secret"
    vulnerabilities: Tuple[Vulnerability, ...] = ()


@dataclass(frozen=True)
class HarnessSettings:
    check_latency_ms: float = 20.0
    hop_latency_ms: float = 1.0
    runs: int = 5
    tc1_requests: int = 5
    tc2_writes: int = 20
    tc3_writes: int = 100
    tc4_reads: int = 100
    tc4_seed_readings: int = 5
    tc5_threads: int = 4
    tc5_requests_per_thread: int = 10
    engine_counts: Tuple[int, ...] = (3, 6, 12)
    prefill_actors: int = 8
    prefill_readings: int = 40
    seed: int = 7
    startup_timeout_seconds: float = 10.0


def default_usage_rules() -> Dict[str, Dict[str, ParameterRule]]:
    write = frozenset({RequestKind.WRITE})
    admin = frozenset({RequestKind.ADMIN})
    return {
        "temperature": {
            "value": ParameterRule("value", "decimal", required_for=write, min=-90, max=60),
            "actor_id": ParameterRule("actor_id", "string", max=64),
            "limit": ParameterRule("limit", "integer", min=1, max=100000),
        },
        "actors": {
            "action": ParameterRule("action", "choice", required_for=admin, choices=("create", "update", "delete")),
            "actor_id": ParameterRule("actor_id", "string", required_for=admin, max=64),
            "role": ParameterRule("role", "choice", choices=("USER", "STATIONARY")),
            "ip_address": ParameterRule("ip_address", "ipv4"),
            "mac_address": ParameterRule("mac_address", "mac"),
            "rights": ParameterRule("rights", "rights"),
            "api_key": ParameterRule("api_key", "string", max=256),
        },
        "vulnerabilities": {
            "os_id": ParameterRule("os_id", "string", required_for=admin, max=64),
            "affected_versions": ParameterRule("affected_versions", "version_range", required_for=admin),
            "severity": ParameterRule(
                "severity", "choice", required_for=admin, choices=tuple(s.name for s in Severity)
            ),
            "description": ParameterRule("description", "string", required_for=admin, max=512),
        },
        "analyser": {
            "query": ParameterRule(
                "query", "choice", required_for=admin, choices=("connected_engines", "actor_history")
            ),
            "actor_id": ParameterRule("actor_id", "string", max=64),
            "limit": ParameterRule("limit", "integer", min=1, max=10000),
        },
    }


@dataclass(frozen=True)
class Settings:
    tokens: TokenSettings = field(default_factory=TokenSettings)
    consensus: ConsensusSettings = field(default_factory=ConsensusSettings)
    ledger: LedgerSettings = field(default_factory=LedgerSettings)
    behavior: BehaviorPolicy = field(default_factory=BehaviorPolicy)
    usage_rules: Mapping[str, Mapping[str, ParameterRule]] = field(default_factory=default_usage_rules)
    client: ClientProfile = field(default_factory=ClientProfile)
    bootstrap: BootstrapSettings = field(default_factory=BootstrapSettings)
    harness: HarnessSettings = field(default_factory=HarnessSettings)

    def with_harness(self, **changes) -> "Settings":
        return replace(self, harness=replace(self.harness, **changes))


# --------------------------
# JSON loading
# --------------------------
def _section(cls, data: Optional[Mapping], name: str):
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"section {name!r} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigurationError(f"unknown keys in {name!r}: {sorted(unknown)}")
    values = {}
    for key, value in data.items():
        values[key] = tuple(value) if isinstance(value, list) else value
    try:
        return cls(**values)
    except (TypeError, ValidationFailure) as e:
        raise ConfigurationError(f"invalid {name!r} section: {e}") from e


def _parse_rules(data: Mapping) -> Dict[str, Dict[str, ParameterRule]]:
    rules = {}
    for resource, params in data.items():
        rules[resource] = {}
        for name, spec in params.items():
            try:
                rules[resource][name] = ParameterRule(
                    name=name,
                    type=spec["type"],
                    required_for=frozenset(RequestKind(k) for k in spec.get("required_for", [])),
                    min=spec.get("min"),
                    max=spec.get("max"),
                    choices=tuple(spec.get("choices", [])),
                )
            except (KeyError, ValueError, ValidationFailure) as e:
                raise ConfigurationError(f"bad parameter rule {resource}.{name}: {e}") from e
    return rules


def _parse_vulnerabilities(items) -> Tuple[Vulnerability, ...]:
    out = []
    for item in items or []:
        try:
            out.append(
                Vulnerability(
                    os_id=item["os_id"],
                    affected_versions=item["affected_versions"],
                    severity=Severity[item["severity"]],
                    description=item["description"],
                )
            )
        except (KeyError, ValidationFailure) as e:
            raise ConfigurationError(f"bad startup vulnerability {item!r}: {e}") from e
    return tuple(out)


def settings_from_dict(data: Mapping) -> Settings:
    data = dict(data)
    bootstrap = dict(data.get("bootstrap") or {})
    vulns = _parse_vulnerabilities(bootstrap.pop("vulnerabilities", None))
    usage = data.get("usage_rules")
    return Settings(
        tokens=_section(TokenSettings, data.get("tokens"), "tokens"),
        consensus=_section(ConsensusSettings, data.get("consensus"), "consensus"),
        ledger=_section(LedgerSettings, data.get("ledger"), "ledger"),
        behavior=_section(BehaviorPolicy, data.get("behavior"), "behavior"),
        usage_rules=_parse_rules(usage) if usage else default_usage_rules(),
        client=_section(ClientProfile, data.get("client"), "client"),
        bootstrap=replace(_section(BootstrapSettings, bootstrap, "bootstrap"), vulnerabilities=vulns),
        harness=_section(HarnessSettings, data.get("harness"), "harness"),
    )


def _secrets_from_env(settings: Settings) -> Settings:
    changes = {key: os.environ[var] for var, key in SECRET_ENV.items() if os.environ.get(var)}
    if not changes:
        return settings
    logger.info("bootstrap %s taken from the environment", ", ".join(sorted(changes)))
    return replace(settings, bootstrap=replace(settings.bootstrap, **changes))


def load_settings(path=None) -> Settings:
    return _secrets_from_env(_load_file(path))


def _load_file(path=None) -> Settings:
    path = path or os.environ.get(CONFIG_ENV) or DEFAULT_CONFIG_PATH
    path = Path(path)
    if not path.exists():
        logger.info("no config file at %s, using defaults", path)
        return Settings()
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    logger.debug("loaded settings from %s", path)
    return settings_from_dict(data)
