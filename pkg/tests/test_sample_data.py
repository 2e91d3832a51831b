import pandas as pd

from utils.auth import verify_api_key
from utils.model import RequestKind, Role
from utils.sample_data import (
    create_default_admin,
    generate_actors,
    generate_readings,
    insert_startup_vulnerabilities,
    prefill,
)
from utils.config import load_settings
from utils.validators import VulnerabilityStore


def test_generated_actors_are_reproducible():
    a, b = generate_actors(6, seed=3), generate_actors(6, seed=3)
    pd.testing.assert_frame_equal(a, b)
    assert a["actor_id"].is_unique
    sensors = a[a["role"] == Role.STATIONARY.value]
    assert len(sensors) == 3
    assert (sensors["ip_address"] != "").all()


def test_readings_only_for_sensors():
    actors = generate_actors(4)
    readings = generate_readings(actors, 10)
    sensors = set(actors.loc[actors["role"] == Role.STATIONARY.value, "actor_id"])
    assert set(readings["actor_id"]) <= sensors
    assert len(readings) == 10
    assert generate_readings(actors[actors["role"] == Role.USER.value], 10).empty


def test_default_admin_is_created_once(db):
    assert create_default_admin(db, "admin", "secret")
    assert not create_default_admin(db, "admin", "other")
    admin = db.get_actor("admin")
    assert verify_api_key("secret", admin.api_key_hash)
    assert admin.has_right(RequestKind.ADMIN, "actors")


def test_startup_vulnerabilities_are_deduplicated(db):
    store = VulnerabilityStore(db)
    vulns = load_settings().bootstrap.vulnerabilities
    assert insert_startup_vulnerabilities(store, vulns) == 4
    assert insert_startup_vulnerabilities(store, vulns) == 0


def test_prefill_is_idempotent_for_actors(db):
    prefill(db, 4, 8)
    prefill(db, 4, 0)
    assert len(db.fetch_actors()) == 4
    assert len(db.fetch_readings()) == 8
