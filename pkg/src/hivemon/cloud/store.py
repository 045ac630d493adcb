"""SQLite-backed storage for readings, node metadata and alerts."""

from __future__ import annotations

import sqlite3
import threading
from dataclasses import dataclass
from typing import Iterable

from ..model import EnrichedReading, SensorReading, hive_id_of
from .alerts import AlertEvent, Parameter
from ..model import Tier

SCHEMA = """
CREATE TABLE IF NOT EXISTS sensor_readings (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    node_id TEXT NOT NULL,
    timestamp_utc INTEGER NOT NULL,
    timestamp_local INTEGER NOT NULL,
    temperature REAL NOT NULL,
    humidity REAL NOT NULL,
    light INTEGER NOT NULL,
    latitude REAL NOT NULL,
    longitude REAL NOT NULL,
    altitude REAL NOT NULL,
    gateway_id TEXT NOT NULL,
    rssi_dbm REAL NOT NULL,
    UNIQUE (node_id, timestamp_utc)
);
CREATE INDEX IF NOT EXISTS idx_readings_ts ON sensor_readings (timestamp_utc);
CREATE TABLE IF NOT EXISTS nodes (
    node_id TEXT PRIMARY KEY,
    hive_id TEXT NOT NULL,
    placement TEXT,
    first_seen INTEGER NOT NULL,
    last_seen INTEGER NOT NULL,
    latitude REAL,
    longitude REAL
);
CREATE TABLE IF NOT EXISTS alerts (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    node_id TEXT NOT NULL,
    parameter TEXT NOT NULL,
    tier TEXT NOT NULL,
    value REAL NOT NULL,
    threshold_violated REAL,
    first_sample_ts INTEGER NOT NULL,
    confirm_sample_ts INTEGER NOT NULL,
    acknowledged INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS users (
    subject TEXT PRIMARY KEY,
    created INTEGER NOT NULL
);
"""

_READING_COLS = (
    "id, node_id, timestamp_utc, timestamp_local, temperature, humidity, light, "
    "latitude, longitude, altitude, gateway_id, rssi_dbm"
)


@dataclass(frozen=True)
class StoredReading:
    row_id: int
    enriched: EnrichedReading

    @property
    def node_id(self) -> str:
        return self.enriched.node_id

    @property
    def timestamp_utc(self) -> int:
        return self.enriched.timestamp_utc

    def to_dict(self) -> dict:
        out = {"id": self.row_id}
        out.update(self.enriched.to_dict())
        return out


def _row_to_stored(row) -> StoredReading:
    (row_id, node_id, ts_utc, ts_local, temp, hum, light, lat, lon, alt, gw, rssi) = row
    reading = SensorReading(node_id, temp, hum, light, lat, lon, alt, ts_local)
    return StoredReading(row_id, EnrichedReading(reading, ts_utc, gw, rssi))


def _row_to_alert(row) -> AlertEvent:
    (aid, node_id, parameter, tier, value, bound, first, confirm, ack) = row
    return AlertEvent(node_id, Parameter(parameter), Tier[tier.upper()], value, bound, first, confirm,
                      bool(ack), aid)


class Store:
    """One connection guarded by a lock; each call is its own transaction."""

    def __init__(self, path: str = ":memory:"):
        self._db = sqlite3.connect(path, check_same_thread=False, isolation_level=None)
        self._lock = threading.RLock()
        self._db.executescript(SCHEMA)

    def close(self) -> None:
        with self._lock:
            self._db.close()

    # -- readings ---------------------------------------------------------

    def insert_reading(self, e: EnrichedReading) -> StoredReading | None:
        """Insert, returning None when (node_id, timestamp_utc) already exists."""
        r = e.reading
        with self._lock:
            cur = self._db.execute(
                "INSERT OR IGNORE INTO sensor_readings (node_id, timestamp_utc, timestamp_local, temperature,"
                " humidity, light, latitude, longitude, altitude, gateway_id, rssi_dbm)"
                " VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (r.node_id, e.timestamp_utc, r.timestamp_local, r.temperature, r.humidity, r.light,
                 r.latitude, r.longitude, r.altitude, e.gateway_id, e.rssi_dbm),
            )
            if cur.rowcount == 0:
                return None
            self._db.execute(
                "INSERT INTO nodes (node_id, hive_id, first_seen, last_seen, latitude, longitude)"
                " VALUES (?, ?, ?, ?, ?, ?)"
                " ON CONFLICT(node_id) DO UPDATE SET"
                "  last_seen = MAX(last_seen, excluded.last_seen),"
                "  latitude = excluded.latitude, longitude = excluded.longitude",
                (r.node_id, hive_id_of(r.node_id), e.timestamp_utc, e.timestamp_utc, r.latitude, r.longitude),
            )
            return StoredReading(cur.lastrowid, e)

    def set_placement(self, node_id: str, placement: str, now: int = 0) -> None:
        with self._lock:
            self._db.execute(
                "INSERT INTO nodes (node_id, hive_id, placement, first_seen, last_seen) VALUES (?, ?, ?, ?, ?)"
                " ON CONFLICT(node_id) DO UPDATE SET placement = excluded.placement",
                (node_id, hive_id_of(node_id), placement, now, now),
            )

    def readings(self, node_id: str, start: int, end: int) -> list[StoredReading]:
        with self._lock:
            rows = self._db.execute(
                f"SELECT {_READING_COLS} FROM sensor_readings"
                " WHERE node_id = ? AND timestamp_utc BETWEEN ? AND ? ORDER BY timestamp_utc, id",
                (node_id, start, end),
            ).fetchall()
        return [_row_to_stored(r) for r in rows]

    def latest(self, node_id: str) -> StoredReading | None:
        with self._lock:
            row = self._db.execute(
                f"SELECT {_READING_COLS} FROM sensor_readings WHERE node_id = ?"
                " ORDER BY timestamp_utc DESC, id DESC LIMIT 1",
                (node_id,),
            ).fetchone()
        return _row_to_stored(row) if row else None

    def readings_before(self, cutoff: int) -> list[StoredReading]:
        with self._lock:
            rows = self._db.execute(
                f"SELECT {_READING_COLS} FROM sensor_readings WHERE timestamp_utc < ? ORDER BY node_id, timestamp_utc",
                (cutoff,),
            ).fetchall()
        return [_row_to_stored(r) for r in rows]

    def delete_readings(self, row_ids: Iterable[int]) -> int:
        ids = list(row_ids)
        with self._lock:
            self._db.execute("BEGIN")
            try:
                self._db.executemany("DELETE FROM sensor_readings WHERE id = ?", [(i,) for i in ids])
                self._db.execute("COMMIT")
            except Exception:
                self._db.execute("ROLLBACK")
                raise
        return len(ids)

    def count_readings(self, node_id: str | None = None) -> int:
        with self._lock:
            if node_id is None:
                return self._db.execute("SELECT COUNT(*) FROM sensor_readings").fetchone()[0]
            return self._db.execute(
                "SELECT COUNT(*) FROM sensor_readings WHERE node_id = ?", (node_id,)
            ).fetchone()[0]

    def all_readings(self) -> list[StoredReading]:
        with self._lock:
            rows = self._db.execute(
                f"SELECT {_READING_COLS} FROM sensor_readings ORDER BY timestamp_utc, node_id"
            ).fetchall()
        return [_row_to_stored(r) for r in rows]

    # -- nodes --------------------------------------------------------------

    def nodes(self) -> list[dict]:
        with self._lock:
            rows = self._db.execute(
                "SELECT node_id, hive_id, placement, first_seen, last_seen, latitude, longitude"
                " FROM nodes ORDER BY node_id"
            ).fetchall()
        keys = ("node_id", "hive_id", "placement", "first_seen", "last_seen", "latitude", "longitude")
        return [dict(zip(keys, r)) for r in rows]

    def node(self, node_id: str) -> dict | None:
        return next((n for n in self.nodes() if n["node_id"] == node_id), None)

    # -- alerts ---------------------------------------------------------------

    def insert_alert(self, a: AlertEvent) -> int:
        with self._lock:
            cur = self._db.execute(
                "INSERT INTO alerts (node_id, parameter, tier, value, threshold_violated, first_sample_ts,"
                " confirm_sample_ts, acknowledged) VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                (a.node_id, a.parameter.value, a.tier.name.lower(), a.value, a.threshold_violated,
                 a.first_sample_ts, a.confirm_sample_ts, int(a.acknowledged)),
            )
            return cur.lastrowid

    def escalate_alert(self, alert_id: int, tier: Tier, value: float, bound: float | None) -> None:
        with self._lock:
            self._db.execute(
                "UPDATE alerts SET tier = ?, value = ?, threshold_violated = ? WHERE id = ?",
                (tier.name.lower(), value, bound, alert_id),
            )

    def acknowledge_alert(self, alert_id: int) -> None:
        with self._lock:
            self._db.execute("UPDATE alerts SET acknowledged = 1 WHERE id = ?", (alert_id,))

    def alerts(self, node_id: str | None = None) -> list[AlertEvent]:
        sql = ("SELECT id, node_id, parameter, tier, value, threshold_violated, first_sample_ts,"
               " confirm_sample_ts, acknowledged FROM alerts")
        args: tuple = ()
        if node_id is not None:
            sql += " WHERE node_id = ?"
            args = (node_id,)
        with self._lock:
            rows = self._db.execute(sql + " ORDER BY id", args).fetchall()
        return [_row_to_alert(r) for r in rows]
