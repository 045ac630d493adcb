"""Shared generators and independent oracles for the test suite."""

from __future__ import annotations

import string

import numpy as np
from hypothesis import strategies as st

from hivemon.broker import codec
from hivemon.broker.codec import Packet, PacketType
from hivemon.model import SensorReading, Tier

REPRESENTATIVE = SensorReading(
    node_id="hive1-int-a",
    temperature=33.2,
    humidity=62.0,
    light=0,
    latitude=40.4156,
    longitude=-86.8947,
    altitude=190.0,
    timestamp_local=1722800000,
)

NODE_ALPHABET = string.ascii_letters + string.digits + "_.-"


# -- readings ----------------------------------------------------------------------

def random_node_id(rng: np.random.Generator) -> str:
    first = rng.choice(list(string.ascii_letters + string.digits))
    rest = rng.choice(list(NODE_ALPHABET), size=int(rng.integers(0, 32)))
    return first + "".join(rest)


def random_reading(rng: np.random.Generator) -> SensorReading:
    return SensorReading(
        node_id=random_node_id(rng),
        temperature=float(rng.uniform(-999.9, 999.9)),
        humidity=float(rng.uniform(0, 100)),
        light=int(rng.integers(0, 101)),
        latitude=float(rng.uniform(-90, 90)),
        longitude=float(rng.uniform(-180, 180)),
        altitude=float(rng.uniform(-1000, 10000)),
        timestamp_local=int(rng.integers(0, 2**63 - 1, dtype=np.int64)),
    )


node_ids = st.from_regex(r"\A[A-Za-z0-9][A-Za-z0-9_.-]{0,31}\Z")
readings = st.builds(
    SensorReading,
    node_id=node_ids,
    temperature=st.floats(-999.9, 999.9),
    humidity=st.floats(0, 100),
    light=st.integers(0, 100),
    latitude=st.floats(-90, 90),
    longitude=st.floats(-180, 180),
    altitude=st.floats(-1000, 10000),
    timestamp_local=st.integers(0, 2**63 - 1),
)


# -- MQTT packets -----------------------------------------------------------------------

def _level(rng, wild=False) -> str:
    if wild and rng.random() < 0.25:
        return "+"
    n = int(rng.integers(0, 6))
    return "".join(rng.choice(list("abcxyz019_$é"), size=n))


def random_topic(rng) -> str:
    topic = "/".join(_level(rng) for _ in range(int(rng.integers(1, 5))))
    return topic or "t"


def random_filter(rng) -> str:
    levels = [_level(rng, wild=True) for _ in range(int(rng.integers(1, 5)))]
    if rng.random() < 0.2:
        levels.append("#")
    return "/".join(levels) or "#"


def random_packet(rng: np.random.Generator) -> Packet:
    kind = rng.choice(["connect", "connack", "publish0", "publish1", "puback", "subscribe", "suback", "bare"])
    pid = int(rng.integers(1, 0x10000))
    if kind == "connect":
        user = None if rng.random() < 0.5 else "u" * int(rng.integers(0, 8))
        pw = None if user is None or rng.random() < 0.5 else bytes(rng.integers(0, 256, size=int(rng.integers(0, 8))).tolist())
        return codec.connect("c" * int(rng.integers(0, 23)), int(rng.integers(0, 0x10000)), bool(rng.random() < 0.5),
                             user, pw)
    if kind == "connack":
        return Packet(PacketType.CONNACK, session_present=bool(rng.random() < 0.5), return_code=int(rng.integers(0, 6)))
    if kind.startswith("publish"):
        size = int(rng.choice([0, 1, 127, 200, 16_000, 20_000])) if rng.random() < 0.3 else int(rng.integers(0, 300))
        payload = bytes(rng.integers(0, 256, size=size, dtype=np.uint8).tolist())
        if kind == "publish0":
            return codec.publish(random_topic(rng), payload, qos=0, retain=bool(rng.random() < 0.5))
        return codec.publish(random_topic(rng), payload, qos=1, packet_id=pid, dup=bool(rng.random() < 0.5),
                             retain=bool(rng.random() < 0.5))
    if kind == "puback":
        return codec.puback(pid)
    if kind == "subscribe":
        subs = tuple((random_filter(rng), int(rng.integers(0, 3))) for _ in range(int(rng.integers(1, 4))))
        return codec.subscribe(pid, *subs)
    if kind == "suback":
        codes = tuple(int(rng.choice([0, 1, 2, 0x80])) for _ in range(int(rng.integers(1, 4))))
        return Packet(PacketType.SUBACK, packet_id=pid, granted=codes)
    return Packet(PacketType(int(rng.choice([12, 13, 14]))))


def brute_force_match(topic_filter: str, topic: str) -> bool:
    """Recursive wildcard matcher written independently of the broker's loop."""
    if topic.startswith("$") and topic_filter.split("/")[0] in ("+", "#"):
        return False

    def rec(f: list[str], t: list[str]) -> bool:
        if not f:
            return not t
        if f[0] == "#":
            return True
        if not t:
            return False
        return (f[0] == "+" or f[0] == t[0]) and rec(f[1:], t[1:])

    return rec(topic_filter.split("/"), topic.split("/"))


# -- alert oracle -------------------------------------------------------------------------

def alert_oracle(tiers: list[Tier], k: int = 2) -> list[tuple[int, Tier]]:
    """Expected (sample index, tier) emissions for one (node, parameter) stream.

    Every maximal run of non-normal samples at least ``k`` long raises exactly
    one alert, at the run's k-th sample, with the worst tier among those k.
    """
    out, i, n = [], 0, len(tiers)
    while i < n:
        if tiers[i] is Tier.NORMAL:
            i += 1
            continue
        j = i
        while j < n and tiers[j] is not Tier.NORMAL:
            j += 1
        if j - i >= k:
            out.append((i + k - 1, max(tiers[i:i + k])))
        i = j
    return out
