# utils/database.py
"""
Database utilities for the Edge Zero Trust framework
- SQLite backend, one connection per deployment (file or :memory:)
- Tables: actors (AS-DB), vulnerabilities (OSV-DB),
  temperature_readings (TEMP-DB), request_history (plain history table)
- Listing helpers return pandas DataFrames for reports
- Any table can be switched off to simulate an unavailable store
"""

import logging
import sqlite3
import threading
from decimal import Decimal
from typing import List, Optional

import pandas as pd

from utils.errors import DuplicateActor, DuplicateTransaction, StoreUnavailable, UnknownActor
from utils.model import (
    Actor,
    HistoryRecord,
    Outcome,
    RequestKind,
    Role,
    Severity,
    TemperatureReading,
    format_rights,
    parse_rights,
)
from utils.validators import Vulnerability

logger = logging.getLogger(__name__)

TABLES = ("actors", "vulnerabilities", "temperature_readings", "request_history")


# --------------------------
# DB Connection
# --------------------------
def connect_db(path: str = ":memory:"):
    return sqlite3.connect(path, check_same_thread=False)


# --------------------------
# Initialize All Tables
# --------------------------
def initialize_all_tables(conn):
    cur = conn.cursor()

    cur.execute("""
    CREATE TABLE IF NOT EXISTS actors (
        actor_id TEXT PRIMARY KEY,
        role TEXT NOT NULL,
        access_rights TEXT NOT NULL DEFAULT '',
        api_key_hash TEXT NOT NULL,
        ip_address TEXT NOT NULL DEFAULT '',
        mac_address TEXT NOT NULL DEFAULT '',
        blocked_until REAL
    )
    """)

    cur.execute("""
    CREATE TABLE IF NOT EXISTS vulnerabilities (
        vuln_id INTEGER PRIMARY KEY AUTOINCREMENT,
        os_id TEXT NOT NULL,
        affected_versions TEXT NOT NULL,
        severity TEXT NOT NULL,
        description TEXT NOT NULL,
        UNIQUE (os_id, affected_versions, description)
    )
    """)

    cur.execute("""
    CREATE TABLE IF NOT EXISTS temperature_readings (
        seq INTEGER PRIMARY KEY AUTOINCREMENT,
        reading_id TEXT UNIQUE NOT NULL,
        actor_id TEXT NOT NULL,
        value TEXT NOT NULL,
        recorded_at REAL NOT NULL
    )
    """)

    cur.execute("""
    CREATE TABLE IF NOT EXISTS request_history (
        seq INTEGER PRIMARY KEY AUTOINCREMENT,
        request_id TEXT UNIQUE NOT NULL,
        actor_id TEXT NOT NULL,
        kind TEXT NOT NULL,
        resource TEXT NOT NULL,
        outcome TEXT NOT NULL,
        timestamp REAL NOT NULL
    )
    """)

    cur.execute("CREATE INDEX IF NOT EXISTS idx_readings_actor ON temperature_readings (actor_id)")
    cur.execute("CREATE INDEX IF NOT EXISTS idx_history_actor ON request_history (actor_id)")

    conn.commit()


def _row_to_actor(row) -> Actor:
    return Actor(
        actor_id=row["actor_id"],
        role=Role(row["role"]),
        access_rights=parse_rights(row["access_rights"]),
        api_key_hash=row["api_key_hash"],
        ip_address=row["ip_address"],
        mac_address=row["mac_address"],
        blocked_until=row["blocked_until"],
    )


class Database:
    """Shared SQLite connection guarded by a lock; writes are serialized."""

    def __init__(self, path: str = ":memory:"):
        self.path = path
        self._conn = connect_db(path)
        self._conn.row_factory = sqlite3.Row
        self._lock = threading.RLock()
        self._offline = set()
        initialize_all_tables(self._conn)

    # --------------------------
    # Availability
    # --------------------------
    def set_available(self, table: str, available: bool):
        if table not in TABLES:
            raise ValueError(f"unknown table {table!r}")
        with self._lock:
            if available:
                self._offline.discard(table)
            else:
                self._offline.add(table)
        logger.warning("table %s is now %s", table, "available" if available else "UNAVAILABLE")

    def _guard(self, table: str):
        if table in self._offline:
            raise StoreUnavailable(f"{table} store is unavailable")

    def close(self):
        with self._lock:
            self._conn.close()

    # --------------------------
    # ACTORS (AS-DB)
    # --------------------------
    def add_actor(self, actor: Actor):
        with self._lock:
            self._guard("actors")
            try:
                self._conn.execute(
                    """
                    INSERT INTO actors
                    (actor_id, role, access_rights, api_key_hash, ip_address, mac_address, blocked_until)
                    VALUES (?, ?, ?, ?, ?, ?, ?)
                    """,
                    (
                        actor.actor_id,
                        actor.role.value,
                        format_rights(actor.access_rights),
                        actor.api_key_hash,
                        actor.ip_address,
                        actor.mac_address,
                        actor.blocked_until,
                    ),
                )
                self._conn.commit()
            except sqlite3.IntegrityError as e:
                self._conn.rollback()
                raise DuplicateActor(actor.actor_id) from e

    def get_actor(self, actor_id: str) -> Optional[Actor]:
        with self._lock:
            self._guard("actors")
            row = self._conn.execute(
                "SELECT * FROM actors WHERE actor_id=?", (actor_id,)
            ).fetchone()
        return _row_to_actor(row) if row else None

    def update_actor(self, actor: Actor):
        with self._lock:
            self._guard("actors")
            cur = self._conn.execute(
                """
                UPDATE actors SET role=?, access_rights=?, api_key_hash=?,
                    ip_address=?, mac_address=?, blocked_until=?
                WHERE actor_id=?
                """,
                (
                    actor.role.value,
                    format_rights(actor.access_rights),
                    actor.api_key_hash,
                    actor.ip_address,
                    actor.mac_address,
                    actor.blocked_until,
                    actor.actor_id,
                ),
            )
            self._conn.commit()
        if cur.rowcount == 0:
            raise UnknownActor(actor.actor_id)

    def delete_actor(self, actor_id: str):
        with self._lock:
            self._guard("actors")
            cur = self._conn.execute("DELETE FROM actors WHERE actor_id=?", (actor_id,))
            self._conn.commit()
        if cur.rowcount == 0:
            raise UnknownActor(actor_id)

    def set_blocked_until(self, actor_id: str, until: Optional[float]) -> bool:
        with self._lock:
            self._guard("actors")
            cur = self._conn.execute(
                "UPDATE actors SET blocked_until=? WHERE actor_id=?", (until, actor_id)
            )
            self._conn.commit()
        return cur.rowcount > 0

    def fetch_actors(self) -> pd.DataFrame:
        with self._lock:
            try:
                df = pd.read_sql(
                    "SELECT actor_id, role, access_rights, ip_address, mac_address, blocked_until FROM actors",
                    self._conn,
                )
            except Exception:
                df = pd.DataFrame()
        return df

    # --------------------------
    # VULNERABILITIES (OSV-DB)
    # --------------------------
    def add_vulnerability(self, vuln: Vulnerability) -> bool:
        with self._lock:
            self._guard("vulnerabilities")
            cur = self._conn.execute(
                """
                INSERT OR IGNORE INTO vulnerabilities (os_id, affected_versions, severity, description)
                VALUES (?, ?, ?, ?)
                """,
                (vuln.os_id, vuln.affected_versions, vuln.severity.name, vuln.description),
            )
            self._conn.commit()
        return cur.rowcount > 0

    def find_vulnerabilities(self, os_id: str) -> List[Vulnerability]:
        with self._lock:
            self._guard("vulnerabilities")
            rows = self._conn.execute(
                "SELECT * FROM vulnerabilities WHERE os_id=? ORDER BY vuln_id", (os_id,)
            ).fetchall()
        return [
            Vulnerability(
                os_id=row["os_id"],
                affected_versions=row["affected_versions"],
                severity=Severity[row["severity"]],
                description=row["description"],
            )
            for row in rows
        ]

    def count_vulnerabilities(self) -> int:
        with self._lock:
            self._guard("vulnerabilities")
            return self._conn.execute("SELECT COUNT(*) FROM vulnerabilities").fetchone()[0]

    # --------------------------
    # TEMPERATURE READINGS (TEMP-DB)
    # --------------------------
    def add_reading(self, reading: TemperatureReading):
        with self._lock:
            self._guard("temperature_readings")
            self._conn.execute(
                "INSERT INTO temperature_readings (reading_id, actor_id, value, recorded_at) VALUES (?,?,?,?)",
                (reading.reading_id, reading.actor_id, str(reading.value), reading.recorded_at),
            )
            self._conn.commit()

    def fetch_readings(self, actor_id: Optional[str] = None) -> List[TemperatureReading]:
        with self._lock:
            self._guard("temperature_readings")
            if actor_id:
                rows = self._conn.execute(
                    "SELECT * FROM temperature_readings WHERE actor_id=? ORDER BY seq", (actor_id,)
                ).fetchall()
            else:
                rows = self._conn.execute(
                    "SELECT * FROM temperature_readings ORDER BY seq"
                ).fetchall()
        return [
            TemperatureReading(
                reading_id=row["reading_id"],
                actor_id=row["actor_id"],
                value=Decimal(row["value"]),
                recorded_at=row["recorded_at"],
            )
            for row in rows
        ]

    # --------------------------
    # REQUEST HISTORY (plain table, no blockchain)
    # --------------------------
    def add_history(self, record: HistoryRecord):
        with self._lock:
            self._guard("request_history")
            try:
                self._conn.execute(
                    """
                    INSERT INTO request_history (request_id, actor_id, kind, resource, outcome, timestamp)
                    VALUES (?,?,?,?,?,?)
                    """,
                    (
                        record.request_id,
                        record.actor_id,
                        record.kind.value,
                        record.resource,
                        record.outcome.value,
                        record.timestamp,
                    ),
                )
                self._conn.commit()
            except sqlite3.IntegrityError as e:
                self._conn.rollback()
                raise DuplicateTransaction(record.request_id) from e

    def recent_history(self, actor_id: str, limit: int) -> List[HistoryRecord]:
        with self._lock:
            self._guard("request_history")
            rows = self._conn.execute(
                "SELECT * FROM request_history WHERE actor_id=? ORDER BY seq DESC LIMIT ?",
                (actor_id, int(limit)),
            ).fetchall()
        return [
            HistoryRecord(
                request_id=row["request_id"],
                actor_id=row["actor_id"],
                kind=RequestKind(row["kind"]),
                resource=row["resource"],
                outcome=Outcome(row["outcome"]),
                timestamp=row["timestamp"],
            )
            for row in rows
        ]
