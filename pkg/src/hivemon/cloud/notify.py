"""Pluggable notification sinks for alert dispatch."""

from __future__ import annotations

import json
import urllib.request
from dataclasses import dataclass, field
from typing import Protocol

from .alerts import AlertEvent


class Sink(Protocol):
    name: str

    def deliver(self, message: dict) -> None: ...  # raises on failure


@dataclass
class MemorySink:
    """Records messages in memory; optionally fails the first ``fail_times`` deliveries."""

    name: str = "memory"
    fail_times: int = 0
    messages: list[dict] = field(default_factory=list)

    def deliver(self, message: dict) -> None:
        if self.fail_times > 0:
            self.fail_times -= 1
            raise ConnectionError(f"sink {self.name} unavailable")
        self.messages.append(message)


@dataclass
class WebhookSink:
    url: str
    timeout_s: float = 5.0
    name: str = "webhook"

    def deliver(self, message: dict) -> None:
        req = urllib.request.Request(
            self.url,
            data=json.dumps(message).encode(),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            if resp.status >= 300:
                raise ConnectionError(f"webhook answered {resp.status}")


@dataclass(frozen=True)
class DispatchRecord:
    alert_id: int | None
    sink: str
    ok: bool
    attempts: int
    dispatched_at: float
    latency_s: float  # dispatch time minus the confirming sample's timestamp


def alert_message(alert: AlertEvent) -> dict:
    return {
        "node_id": alert.node_id,
        "parameter": alert.parameter.value,
        "value": alert.value,
        "timestamp": alert.confirm_sample_ts,
        "tier": alert.tier.name.lower(),
    }


def notify(alert: AlertEvent, sinks, now: float, sample_time: float | None = None) -> list[DispatchRecord]:
    """Send ``alert`` to every sink, retrying a failed delivery once."""
    message = alert_message(alert)
    origin = alert.confirm_sample_ts if sample_time is None else sample_time
    records = []
    for sink in sinks:
        ok, attempts = False, 0
        while not ok and attempts < 2:
            attempts += 1
            try:
                sink.deliver(message)
                ok = True
            except Exception:  # any sink failure counts; the alert is already stored
                pass
        records.append(DispatchRecord(alert.alert_id, sink.name, ok, attempts, now, now - origin))
    return records
