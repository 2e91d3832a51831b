# utils/sample_data.py
"""
Startup data for a fresh deployment
- Bootstrap administrator (created once, directly in the actor store)
- Hardcoded startup vulnerabilities
- Simulated users / stationary sensors and their readings (Faker, seeded)
"""

import logging
import random
import uuid
from decimal import Decimal

import pandas as pd
from faker import Faker

from utils.auth import hash_api_key
from utils.errors import DuplicateActor
from utils.model import Actor, RequestKind, Role, TemperatureReading, format_rights, parse_rights

logger = logging.getLogger(__name__)

ADMIN_RIGHTS = (
    (RequestKind.ADMIN, "actors"),
    (RequestKind.ADMIN, "vulnerabilities"),
    (RequestKind.ADMIN, "analyser"),
)
SENSOR_RIGHTS = ((RequestKind.WRITE, "temperature"), (RequestKind.READ, "temperature"))
READER_RIGHTS = ((RequestKind.READ, "temperature"),)


# -------------------------
# Bootstrap
# -------------------------
def create_default_admin(database, actor_id, api_key):
    if database.get_actor(actor_id) is not None:
        return False
    database.add_actor(
        Actor(
            actor_id=actor_id,
            role=Role.USER,
            access_rights=ADMIN_RIGHTS,
            api_key_hash=hash_api_key(api_key),
        )
    )
    logger.info("bootstrap administrator %s created", actor_id)
    return True


def insert_startup_vulnerabilities(store, vulnerabilities):
    return sum(1 for v in vulnerabilities if store.add_vulnerability(v))


# -------------------------
# Simulated actors & readings
# -------------------------
def generate_actors(n=8, seed=7):
    fake = Faker()
    fake.seed_instance(seed)
    rng = random.Random(seed)

    actors = []
    for i in range(n):
        stationary = i % 2 == 0
        actors.append({
            "actor_id": f"{'sensor' if stationary else 'user'}-{fake.unique.user_name()}",
            "role": Role.STATIONARY.value if stationary else Role.USER.value,
            "access_rights": format_rights(SENSOR_RIGHTS if stationary else READER_RIGHTS),
            "api_key": fake.password(length=24, special_chars=False),
            "ip_address": fake.ipv4_private() if stationary else "",
            "mac_address": fake.mac_address() if stationary else "",
            "location": fake.city(),
            "baseline": round(rng.uniform(-5, 30), 1),
        })
    return pd.DataFrame(actors)


def generate_readings(actors, n=40, seed=7, start=0.0):
    rng = random.Random(seed)
    sensors = actors[actors["role"] == Role.STATIONARY.value]
    if sensors.empty or n <= 0:
        return pd.DataFrame(columns=["reading_id", "actor_id", "value", "recorded_at"])

    rows = []
    for i in range(n):
        sensor = sensors.iloc[i % len(sensors)]
        value = Decimal(str(round(sensor["baseline"] + rng.gauss(0, 1.5), 1)))
        rows.append({
            "reading_id": uuid.UUID(int=rng.getrandbits(128)).hex,
            "actor_id": sensor["actor_id"],
            "value": value,
            "recorded_at": start + i * 60.0,
        })
    return pd.DataFrame(rows)


def prefill(database, n_actors=8, n_readings=40, seed=7, start=0.0):
    """Pre-fill a deployment before any test runs; returns the simulated actors (with clear API keys)."""
    actors = generate_actors(n_actors, seed)
    for _, row in actors.iterrows():
        try:
            database.add_actor(
                Actor(
                    actor_id=row["actor_id"],
                    role=Role(row["role"]),
                    access_rights=parse_rights(row["access_rights"]),
                    api_key_hash=hash_api_key(row["api_key"]),
                    ip_address=row["ip_address"],
                    mac_address=row["mac_address"],
                )
            )
        except DuplicateActor:
            logger.debug("simulated actor %s already present", row["actor_id"])

    readings = generate_readings(actors, n_readings, seed, start)
    for _, row in readings.iterrows():
        database.add_reading(
            TemperatureReading(row["reading_id"], row["actor_id"], row["value"], row["recorded_at"])
        )
    logger.info("pre-filled %d actors and %d readings", len(actors), len(readings))
    return actors
