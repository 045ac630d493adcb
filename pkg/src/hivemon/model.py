"""Domain types shared across the pipeline and the worker-node JSON payload codec.

The payload is the bit-stable contract between simulated nodes, the gateway
and the cloud tier.  Field order and numeric precision are fixed so that the
encoded size is deterministic for a given reading.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field

__all__ = [
    "PAYLOAD_FIELDS",
    "PAYLOAD_SCHEMA_VERSION",
    "PayloadError",
    "MalformedJson",
    "MissingField",
    "OutOfRange",
    "SensorReading",
    "EnrichedReading",
    "Placement",
    "NodeRole",
    "Tier",
    "Thresholds",
    "encode_payload",
    "decode_payload",
    "encode_enriched",
    "decode_enriched",
    "hive_id_of",
]

PAYLOAD_SCHEMA_VERSION = 1

# (name, decimals or None for integers/strings); order is the wire order.
PAYLOAD_FIELDS: tuple[tuple[str, int | None], ...] = (
    ("node_id", None),
    ("temperature", 1),
    ("humidity", 1),
    ("light", None),
    ("latitude", 6),
    ("longitude", 6),
    ("altitude", 1),
    ("timestamp_local", None),
)

NODE_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]{0,31}$")

# Representable ranges.  These bound the encoded width; sensor-plausibility
# windows (e.g. the DHT22 range) are enforced by the gateway, not here.
TEMPERATURE_LIMIT = 999.9
ALTITUDE_RANGE = (-1000.0, 10000.0)
TIMESTAMP_MAX = 2**63 - 1


class PayloadError(ValueError):
    """Base class for payload rejection causes."""

    cause = "payload_error"


class MalformedJson(PayloadError):
    cause = "malformed_json"


class MissingField(PayloadError):
    cause = "missing_field"

    def __init__(self, name: str):
        super().__init__(f"missing field {name!r}")
        self.field = name


class OutOfRange(PayloadError):
    cause = "out_of_range"

    def __init__(self, name: str, value: object = None):
        super().__init__(f"field {name!r} out of range: {value!r}")
        self.field = name
        self.value = value


def _round(value: float, decimals: int) -> float:
    out = round(float(value), decimals)
    # avoid "-0.0" on the wire
    return 0.0 if out == 0 else out


def _check_range(name: str, value: float, lo: float, hi: float) -> None:
    if not (math.isfinite(value) and lo <= value <= hi):
        raise OutOfRange(name, value)


@dataclass(frozen=True)
class SensorReading:
    """One worker-node sample.

    Decimal fields are normalised to their wire precision on construction,
    so ``decode_payload(encode_payload(r)) == r`` holds exactly.
    """

    node_id: str
    temperature: float
    humidity: float
    light: int
    latitude: float
    longitude: float
    altitude: float
    timestamp_local: int

    def __post_init__(self) -> None:
        if not isinstance(self.node_id, str) or not NODE_ID_RE.match(self.node_id):
            raise OutOfRange("node_id", self.node_id)
        for name, decimals in PAYLOAD_FIELDS:
            value = getattr(self, name)
            if decimals is None:
                continue
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise OutOfRange(name, value)
            object.__setattr__(self, name, _round(value, decimals))
        if isinstance(self.light, bool) or not isinstance(self.light, int):
            raise OutOfRange("light", self.light)
        if isinstance(self.timestamp_local, bool) or not isinstance(self.timestamp_local, int):
            raise OutOfRange("timestamp_local", self.timestamp_local)
        _check_range("temperature", self.temperature, -TEMPERATURE_LIMIT, TEMPERATURE_LIMIT)
        _check_range("humidity", self.humidity, 0.0, 100.0)
        _check_range("light", self.light, 0, 100)
        _check_range("latitude", self.latitude, -90.0, 90.0)
        _check_range("longitude", self.longitude, -180.0, 180.0)
        _check_range("altitude", self.altitude, *ALTITUDE_RANGE)
        _check_range("timestamp_local", self.timestamp_local, 0, TIMESTAMP_MAX)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name, _ in PAYLOAD_FIELDS}


@dataclass(frozen=True)
class EnrichedReading:
    reading: SensorReading
    timestamp_utc: int
    gateway_id: str
    rssi_dbm: float

    @property
    def node_id(self) -> str:
        return self.reading.node_id

    def to_dict(self) -> dict:
        out = self.reading.to_dict()
        out.update(
            timestamp_utc=self.timestamp_utc,
            gateway_id=self.gateway_id,
            rssi_dbm=round(self.rssi_dbm, 1),
        )
        return out


class Placement(enum.Enum):
    INTERNAL = "internal"
    EXTERNAL = "external"


@dataclass(frozen=True)
class NodeRole:
    placement: Placement = Placement.EXTERNAL
    obstructions: int = 0

    def __post_init__(self) -> None:
        if self.obstructions < 0:
            raise ValueError("obstructions must be >= 0")
        if self.placement is Placement.INTERNAL and self.obstructions < 1:
            raise ValueError("internal placement requires at least one obstruction")


class Tier(enum.IntEnum):
    NORMAL = 0
    WARNING = 1
    CRITICAL = 2


Interval = tuple[float, float]


@dataclass(frozen=True)
class Thresholds:
    """Three-tier alert thresholds.  Percent light scale throughout."""

    temp_normal: Interval = (32.0, 36.0)
    temp_warning_low: Interval = (30.0, 32.0)
    temp_warning_high: Interval = (36.0, 38.0)
    humidity_normal: Interval = (50.0, 70.0)
    humidity_warning_low: Interval = (45.0, 50.0)
    humidity_warning_high: Interval = (70.0, 75.0)
    night_light_max: float = 50.0
    day_light_min: float = 10.0
    night_window: tuple[int, int] = (18, 6)
    debounce_samples: int = 2

    def __post_init__(self) -> None:
        for lo_w, normal, hi_w, name in (
            (self.temp_warning_low, self.temp_normal, self.temp_warning_high, "temp"),
            (self.humidity_warning_low, self.humidity_normal, self.humidity_warning_high, "humidity"),
        ):
            for iv in (lo_w, normal, hi_w):
                if iv[0] > iv[1]:
                    raise ValueError(f"{name}: empty interval {iv}")
            if lo_w[1] != normal[0] or hi_w[0] != normal[1]:
                raise ValueError(f"{name}: warning bands must adjoin the normal band")
        if self.debounce_samples < 2:
            raise ValueError("debounce_samples must be >= 2")
        start, end = self.night_window
        if not (0 <= start < 24 and 0 <= end < 24):
            raise ValueError("night_window hours must be in [0, 24)")

    def is_night(self, local_hour: float) -> bool:
        start, end = self.night_window
        if start <= end:
            return start <= local_hour < end
        return local_hour >= start or local_hour < end


def _format(value, decimals: int | None) -> str:
    if decimals is None:
        return json.dumps(value)
    return f"{value:.{decimals}f}"


def encode_payload(reading: SensorReading) -> bytes:
    parts = [f'"{name}": {_format(getattr(reading, name), dec)}' for name, dec in PAYLOAD_FIELDS]
    parts.append(f'"schema_version": {PAYLOAD_SCHEMA_VERSION}')
    return ("{" + ", ".join(parts) + "}").encode("utf-8")


def _load_object(data: bytes | str) -> dict:
    try:
        if isinstance(data, (bytes, bytearray, memoryview)):
            data = bytes(data).decode("utf-8")
        obj = json.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError, RecursionError) as exc:
        raise MalformedJson(str(exc)) from None
    if not isinstance(obj, dict):
        raise MalformedJson("payload is not a JSON object")
    return obj


def _reading_from(obj: dict) -> SensorReading:
    values = {}
    for name, decimals in PAYLOAD_FIELDS:
        if name not in obj:
            raise MissingField(name)
        value = obj[name]
        if name == "node_id":
            ok = isinstance(value, str)
        elif decimals is None:
            ok = isinstance(value, int) and not isinstance(value, bool)
        else:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if not ok:
            raise MalformedJson(f"field {name!r} has type {type(value).__name__}")
        values[name] = value
    return SensorReading(**values)


def decode_payload(data: bytes | str) -> SensorReading:
    """Parse a worker payload.  Unknown keys are ignored.

    Raises MalformedJson, MissingField or OutOfRange.
    """
    return _reading_from(_load_object(data))


def encode_enriched(enriched: EnrichedReading) -> bytes:
    return json.dumps(enriched.to_dict(), separators=(",", ":")).encode("utf-8")


def decode_enriched(data: bytes | str) -> EnrichedReading:
    obj = _load_object(data)
    reading = _reading_from(obj)
    for name in ("timestamp_utc", "gateway_id", "rssi_dbm"):
        if name not in obj:
            raise MissingField(name)
    ts, gw, rssi = obj["timestamp_utc"], obj["gateway_id"], obj["rssi_dbm"]
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise MalformedJson("timestamp_utc must be an integer")
    if not isinstance(gw, str):
        raise MalformedJson("gateway_id must be a string")
    if isinstance(rssi, bool) or not isinstance(rssi, (int, float)) or not math.isfinite(rssi):
        raise MalformedJson("rssi_dbm must be a finite number")
    return EnrichedReading(reading, ts, gw, float(rssi))


def hive_id_of(node_id: str) -> str:
    """Hive identifier used in MQTT topics: the node id up to the first '-'."""
    return node_id.split("-", 1)[0]
