import itertools
import json
from importlib import resources

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from referencing import Registry, Resource

from hivemon.model import (
    PAYLOAD_FIELDS,
    EnrichedReading,
    MalformedJson,
    MissingField,
    NodeRole,
    OutOfRange,
    Placement,
    SensorReading,
    Thresholds,
    decode_enriched,
    decode_payload,
    encode_enriched,
    encode_payload,
    hive_id_of,
)

from support import REPRESENTATIVE, random_reading, readings


def _schema(name):
    return json.loads((resources.files("hivemon") / "schemas" / name).read_text())


def _validate(obj, name):
    payload = _schema("payload.schema.json")
    registry = Registry().with_resource("hivemon/payload.schema.json", Resource.from_contents(payload))
    jsonschema.Draft202012Validator(_schema(name), registry=registry).validate(obj)


def test_representative_payload_is_stable():
    data = encode_payload(REPRESENTATIVE)
    assert len(data) == 196
    assert data.startswith(b'{"node_id": "hive1-int-a", "temperature": 33.2, "humidity": 62.0, "light": 0, ')
    assert list(json.loads(data)) == [name for name, _ in PAYLOAD_FIELDS] + ["schema_version"]


@settings(max_examples=500)
@given(readings)
def test_round_trip_and_size(reading):
    data = encode_payload(reading)
    assert decode_payload(data) == reading
    assert 150 <= len(data) <= 240
    _validate(json.loads(data), "payload.schema.json")


def test_size_extrema_by_enumeration():
    candidates = {
        "node_id": ["a", "n" * 32],
        "temperature": [0.0, 5.5, -999.9, 999.9],
        "humidity": [0.0, 100.0],
        "light": [0, 100],
        "latitude": [0.0, -90.0],
        "longitude": [0.0, -180.0],
        "altitude": [0.0, -1000.0, 10000.0],
        "timestamp_local": [0, 2**63 - 1],
    }
    names = [name for name, _ in PAYLOAD_FIELDS]
    sizes = [
        len(encode_payload(SensorReading(**dict(zip(names, combo)))))
        for combo in itertools.product(*(candidates[n] for n in names))
    ]
    lo, hi = min(sizes), max(sizes)
    # frozen from the enumeration; any encoder formatting change moves these
    assert (lo, hi) == (170, 235)
    assert 150 <= lo and hi <= 240
    rng = np.random.default_rng(0)
    for _ in range(2000):
        assert lo <= len(encode_payload(random_reading(rng))) <= hi


def test_decimal_fields_are_normalised():
    r = SensorReading("n1", 33.24999, -0.04, 5, 40.41559999, -86.8947004, 190.04, 7)
    assert (r.temperature, r.humidity, r.latitude, r.longitude, r.altitude) == (33.2, 0.0, 40.4156, -86.8947, 190.0)
    assert b"-0.0" not in encode_payload(r)


@pytest.mark.parametrize(
    "field, value",
    [("humidity", 312.0), ("humidity", -1.0), ("light", 101), ("latitude", 91.0), ("longitude", -181.0),
     ("temperature", float("nan")), ("timestamp_local", -1), ("node_id", ""), ("node_id", "x" * 33),
     ("light", True), ("temperature", "hot")],
)
def test_invariants_enforced(field, value):
    with pytest.raises(OutOfRange) as info:
        SensorReading(**{**REPRESENTATIVE.__dict__, field: value})
    assert info.value.field == field


def test_decode_errors_are_distinct():
    good = json.loads(encode_payload(REPRESENTATIVE))
    with pytest.raises(OutOfRange) as info:
        decode_payload(json.dumps({**good, "humidity": 312.0}))
    assert info.value.field == "humidity" and info.value.cause == "out_of_range"
    with pytest.raises(MalformedJson):
        decode_payload(encode_payload(REPRESENTATIVE)[:-7])
    with pytest.raises(MalformedJson):
        decode_payload(b"\xff\xfe")
    with pytest.raises(MalformedJson):
        decode_payload(b"[1, 2]")
    with pytest.raises(MalformedJson):
        decode_payload(json.dumps({**good, "light": 3.5}))
    missing = dict(good)
    del missing["altitude"]
    with pytest.raises(MissingField) as info:
        decode_payload(json.dumps(missing))
    assert info.value.field == "altitude" and info.value.cause == "missing_field"


def test_unknown_fields_tolerated():
    obj = {**json.loads(encode_payload(REPRESENTATIVE)), "co2_ppm": 410, "schema_version": 2}
    assert decode_payload(json.dumps(obj)) == REPRESENTATIVE


def test_enriched_round_trip_and_schema():
    e = EnrichedReading(REPRESENTATIVE, 1722800003, "master-1", -81.25)
    data = encode_enriched(e)
    _validate(json.loads(data), "enriched.schema.json")
    back = decode_enriched(data)
    assert back.reading == REPRESENTATIVE and back.timestamp_utc == 1722800003 and back.rssi_dbm == -81.2
    with pytest.raises(MissingField):
        decode_enriched(encode_payload(REPRESENTATIVE))


def test_thresholds_defaults_and_validation():
    t = Thresholds()
    assert t.temp_normal == (32.0, 36.0) and t.humidity_warning_high == (70.0, 75.0)
    assert t.is_night(22) and t.is_night(3) and not t.is_night(12) and t.is_night(18) and not t.is_night(6)
    with pytest.raises(ValueError):
        Thresholds(temp_warning_low=(30.0, 31.0))
    with pytest.raises(ValueError):
        Thresholds(debounce_samples=1)


def test_node_role_and_hive_id():
    with pytest.raises(ValueError):
        NodeRole(Placement.INTERNAL, 0)
    assert NodeRole(Placement.INTERNAL, 2).obstructions == 2
    assert hive_id_of("hive1-int-a") == "hive1"
    assert hive_id_of("solo") == "solo"
