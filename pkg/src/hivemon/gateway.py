"""LoRa to MQTT bridge.

Each received frame is decoded, range- and timestamp-checked, stamped with the
gateway's NTP time and published with QoS 1 on ``wagglenet/hive/<hive>/data``.
While the broker is unreachable, messages wait in a bounded FIFO cache that a
periodic retry timer flushes.
"""

from __future__ import annotations

import math
from collections import Counter, OrderedDict, deque
from dataclasses import dataclass, replace
from typing import Protocol

import numpy as np

from .broker import codec
from .broker.codec import Packet, PacketType
from .model import (
    EnrichedReading,
    OutOfRange,
    PayloadError,
    SensorReading,
    decode_payload,
    encode_enriched,
    hive_id_of,
)

TOPIC_TEMPLATE = "wagglenet/hive/{hive_id}/data"
SUBSCRIPTION_FILTER = "wagglenet/hive/+/data"


class BrokerLink(Protocol):
    def send(self, packet: Packet) -> None: ...  # raises ConnectionError when unreachable

    def next_packet_id(self) -> int: ...


@dataclass(frozen=True)
class GatewayConfig:
    gateway_id: str = "master-1"
    retry_interval_s: float = 30.0
    cache_capacity: int = 50
    processing_s: float = 0.05
    temperature_window: tuple[float, float] = (-40.0, 80.0)  # DHT22 operating range
    humidity_window: tuple[float, float] = (0.0, 100.0)
    timestamp_window_s: float = 86_400.0

    def __post_init__(self) -> None:
        if self.cache_capacity < 1 or self.retry_interval_s <= 0 or self.processing_s < 0:
            raise ValueError("invalid gateway configuration")


class NtpClock:
    """Gateway time source: true time plus a fixed offset and bounded uniform jitter."""

    def __init__(self, offset_s: float = 0.0, jitter_s: float = 0.0, rng: np.random.Generator | None = None):
        if jitter_s < 0:
            raise ValueError("jitter_s must be >= 0")
        if jitter_s and rng is None:
            raise ValueError("jitter requires a random source")
        self.offset_s = offset_s
        self.jitter_s = jitter_s
        self.rng = rng

    def utc(self, true_epoch: float) -> int:
        jitter = self.rng.uniform(-self.jitter_s, self.jitter_s) if self.jitter_s else 0.0
        return int(math.floor(true_epoch + self.offset_s + jitter))


@dataclass(frozen=True)
class Rejection:
    cause: str
    field: str | None = None
    detail: str = ""


class TimestampInsane(PayloadError):
    cause = "timestamp_insane"


@dataclass
class _InFlight:
    enriched: EnrichedReading
    packet: Packet
    sent_at: float


def topic_for(node_id: str) -> str:
    return TOPIC_TEMPLATE.format(hive_id=hive_id_of(node_id))


class Gateway:
    def __init__(self, config: GatewayConfig = GatewayConfig(), clock: NtpClock | None = None):
        self.config = config
        self.clock = clock or NtpClock()
        self.cache: deque[EnrichedReading] = deque()
        self.inflight: OrderedDict[int, _InFlight] = OrderedDict()
        self.rejections: Counter[str] = Counter()
        self.accepted = 0
        self.published = 0
        self.republished = 0
        self.acked = 0
        self.overflow = 0
        self.evicted: list[EnrichedReading] = []

    @property
    def gateway_id(self) -> str:
        return self.config.gateway_id

    # -- reception --------------------------------------------------------

    def on_lora_receive(self, data: bytes, rssi_dbm: float, now: float) -> EnrichedReading | Rejection:
        """Validate one LoRa frame received at epoch time ``now``.

        Exactly one outcome per frame: an enriched reading, or a rejection
        whose cause has been counted.
        """
        try:
            reading = decode_payload(data)
            utc = self.clock.utc(now)
            self._validate(reading, utc)
        except PayloadError as exc:
            field = getattr(exc, "field", None)
            self.rejections[exc.cause] += 1
            if field:
                self.rejections[f"{exc.cause}:{field}"] += 1
            return Rejection(exc.cause, field, str(exc))
        self.accepted += 1
        return EnrichedReading(reading, utc, self.gateway_id, float(rssi_dbm))

    def _validate(self, reading: SensorReading, utc: int) -> None:
        lo, hi = self.config.temperature_window
        if not lo <= reading.temperature <= hi:
            raise OutOfRange("temperature", reading.temperature)
        lo, hi = self.config.humidity_window
        if not lo <= reading.humidity <= hi:
            raise OutOfRange("humidity", reading.humidity)
        if abs(reading.timestamp_local - utc) > self.config.timestamp_window_s:
            raise TimestampInsane(f"local timestamp {reading.timestamp_local} vs gateway {utc}")

    # -- publishing -------------------------------------------------------

    def _send(self, enriched: EnrichedReading, link: BrokerLink, now: float) -> None:
        pid = link.next_packet_id()
        packet = codec.publish(topic_for(enriched.node_id), encode_enriched(enriched), qos=1, packet_id=pid)
        link.send(packet)
        self.inflight[pid] = _InFlight(enriched, packet, now)
        self.published += 1

    def _enqueue(self, enriched: EnrichedReading) -> None:
        if len(self.cache) >= self.config.cache_capacity:
            self.evicted.append(self.cache.popleft())
            self.overflow += 1
        self.cache.append(enriched)

    def publish(self, enriched: EnrichedReading, link: BrokerLink, now: float) -> str:
        """Send now if possible, else buffer.  Returns ``"sent"`` or ``"cached"``.

        Nothing overtakes the cache: while it holds messages, new ones queue
        behind them until the retry timer flushes.
        """
        if self.cache:
            self._enqueue(enriched)
            return "cached"
        try:
            self._send(enriched, link, now)
        except ConnectionError:
            self._enqueue(enriched)
            return "cached"
        return "sent"

    def on_packet(self, packet: Packet) -> None:
        if packet.type is PacketType.PUBACK and self.inflight.pop(packet.packet_id, None) is not None:
            self.acked += 1

    @property
    def needs_retry(self) -> bool:
        return bool(self.cache or self.inflight)

    def retry_tick(self, link: BrokerLink, now: float) -> int:
        """Resend overdue unacknowledged messages, then flush the cache in order.

        Returns the number of packets put on the link.
        """
        sent = 0
        try:
            for pid, flight in list(self.inflight.items()):
                if now - flight.sent_at >= self.config.retry_interval_s:
                    flight.packet = replace(flight.packet, dup=True)
                    link.send(flight.packet)
                    flight.sent_at = now
                    self.republished += 1
                    sent += 1
            while self.cache:
                self._send(self.cache[0], link, now)
                self.cache.popleft()
                sent += 1
        except ConnectionError:
            pass
        return sent
