"""Discrete-event simulation of the whole pipeline on one virtual clock.

Nodes sample and transmit over the shared channel, the gateway validates and
publishes over a lossy WiFi hop to the broker, and the cloud service stores,
classifies and notifies.  Seeded generators are the only source of
randomness, so a (scenario, seed) pair always yields the same report.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from .broker import codec
from .broker.codec import Packet, PacketType, decode_packet, encode_packet
from .broker.core import Broker
from .cloud import CloudService, MemorySink
from .gateway import SUBSCRIPTION_FILTER, Gateway, NtpClock, Rejection
from .model import decode_enriched, encode_payload
from .nodesim import RETRY_BACKOFF_S, WorkerNode
from .rfsim import airtime_s, delivery_outcome

if TYPE_CHECKING:
    from .scenario import ScenarioConfig

REPORT_SCHEMA_VERSION = 1
DRAIN_LIMIT_S = 3600.0  # stop draining queued work this long past the horizon


class ConfigError(ValueError):
    """Invalid or inconsistent scenario; ``path`` names the offending field."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# -- scheduler -------------------------------------------------------------------

@dataclass(order=True)
class SimEvent:
    fire_time: float
    sequence: int
    label: str = field(compare=False)
    action: Callable[[float], None] = field(compare=False, repr=False)


class EventScheduler:
    """Min-heap of events ordered by (fire_time, sequence)."""

    def __init__(self) -> None:
        self._heap: list[SimEvent] = []
        self._seq = itertools.count()
        self.now = 0.0
        self.processed = 0

    def schedule(self, fire_time: float, action: Callable[[float], None], label: str = "") -> SimEvent:
        if fire_time < self.now:
            raise ValueError(f"cannot schedule {label or 'event'} at {fire_time} before now={self.now}")
        event = SimEvent(fire_time, next(self._seq), label, action)
        heapq.heappush(self._heap, event)
        return event

    def __len__(self) -> int:
        return len(self._heap)

    def peek_time(self) -> float | None:
        return self._heap[0].fire_time if self._heap else None

    def step(self) -> SimEvent:
        event = heapq.heappop(self._heap)
        self.now = event.fire_time
        self.processed += 1
        event.action(event.fire_time)
        return event

    def run(self, until: float | None = None) -> None:
        """Dispatch events with fire_time <= ``until`` (all, when None)."""
        while self._heap and (until is None or self._heap[0].fire_time <= until):
            self.step()
        if until is not None and until > self.now:
            self.now = until


# -- configuration pieces owned by the engine ------------------------------------------

@dataclass(frozen=True)
class LatencyBudget:
    gateway_processing_s: float = 0.05
    wifi_mqtt_mean_s: float = 0.3
    wifi_mqtt_jitter_s: float = 0.2
    broker_processing_s: float = 0.05
    cloud_ingest_s: float = 0.1
    # unmodeled app-display path, uniform on mean +/- jitter
    residual_mean_s: float = 3.0
    residual_jitter_s: float = 2.0
    notify_dispatch_s: float = 0.05

    def __post_init__(self) -> None:
        for name, value in self.__dict__.items():
            if value < 0:
                raise ConfigError("must be >= 0", f"latency.{name}")
        if self.wifi_mqtt_jitter_s > self.wifi_mqtt_mean_s:
            raise ConfigError("jitter larger than mean would allow negative delays", "latency.wifi_mqtt_jitter_s")
        if self.residual_jitter_s > self.residual_mean_s:
            raise ConfigError("jitter larger than mean would allow negative delays", "latency.residual_jitter_s")

    def draw_wifi(self, rng: np.random.Generator) -> float:
        j = self.wifi_mqtt_jitter_s
        return float(rng.uniform(self.wifi_mqtt_mean_s - j, self.wifi_mqtt_mean_s + j)) if j else self.wifi_mqtt_mean_s

    def draw_residual(self, rng: np.random.Generator) -> float:
        j = self.residual_jitter_s
        return float(rng.uniform(self.residual_mean_s - j, self.residual_mean_s + j)) if j else self.residual_mean_s


@dataclass(frozen=True)
class Injection:
    """Override reading fields of one node for cycles starting in [from_s, to_s]."""

    node_id: str
    values: dict
    from_s: float
    to_s: float

    def applies(self, node_id: str, t: float) -> bool:
        return node_id == self.node_id and self.from_s <= t <= self.to_s


@dataclass(frozen=True)
class Outage:
    """The gateway cannot reach the broker during [start_s, start_s + duration_s)."""

    start_s: float
    duration_s: float

    def covers(self, t: float) -> bool:
        return self.start_s <= t < self.start_s + self.duration_s


# -- per-message bookkeeping ------------------------------------------------------

@dataclass
class MessageTrace:
    node_id: str
    cycle: int
    sample_time: float
    reading: object
    airtime_s: float
    attempts: int = 0
    tx_start: float | None = None
    status: str = "in_flight"  # delivered | lost_range | lost_collision | rejected
    rssi_dbm: float | None = None
    timestamp_utc: int | None = None
    gateway_done: float | None = None
    published_at: float | None = None
    wifi_s: float | None = None
    committed_at: float | None = None
    residual_s: float | None = None
    outcome: str = ""  # stored | duplicate | evicted | pending, after gateway acceptance

    def components(self, budget: LatencyBudget) -> dict[str, float]:
        """Latency split into its sampled parts; sums to :attr:`latency_s`."""
        return {
            "retry_wait": self.tx_start - self.sample_time,
            "lora_airtime": self.airtime_s,
            "gateway_processing": budget.gateway_processing_s,
            "gateway_queue": self.published_at - self.gateway_done,
            "wifi_mqtt": self.wifi_s,
            "broker_processing": budget.broker_processing_s,
            "cloud_ingest": budget.cloud_ingest_s,
            "residual": self.residual_s,
        }

    @property
    def latency_s(self) -> float | None:
        if self.committed_at is None:
            return None
        return self.committed_at + self.residual_s - self.sample_time


@dataclass
class _Tx:
    node_id: str
    start: float
    end: float


class _WifiLink:
    """Gateway side of the gateway-broker hop; satisfies the gateway's BrokerLink."""

    def __init__(self, sim: "Simulation"):
        self.sim = sim
        self._ids = itertools.cycle(range(1, 0x10000))

    def next_packet_id(self) -> int:
        return next(self._ids)

    def send(self, packet: Packet) -> None:
        self.sim._gateway_send(packet)


def _wire(packet: Packet) -> Packet:
    return decode_packet(encode_packet(packet))


# -- simulation ----------------------------------------------------------------------

class Simulation:
    GATEWAY_CONN = "gateway"
    CLOUD_CONN = "cloud"

    def __init__(self, config: "ScenarioConfig", seed: int | None = None):
        if not config.nodes:
            raise ConfigError("scenario needs at least one node", "nodes")
        if config.duration_s < 0:
            raise ConfigError("must be >= 0", "duration_s")
        self.config = config
        self.seed = config.seed if seed is None else seed
        streams = np.random.SeedSequence(self.seed).spawn(len(config.nodes) + 2)
        self.latency_rng = np.random.default_rng(streams[-2])
        ntp_rng = np.random.default_rng(streams[-1])

        self.sched = EventScheduler()
        self.nodes = {
            n.node_id: WorkerNode(n, config.channel, np.random.default_rng(s))
            for n, s in zip(config.nodes, streams)
        }
        if len(self.nodes) != len(config.nodes):
            raise ConfigError("node ids must be unique", "nodes")
        self.gateway = Gateway(config.gateway, NtpClock(config.ntp_offset_s, config.ntp_jitter_s, ntp_rng))
        self.link = _WifiLink(self)
        self.broker = Broker(config.broker_resend_timeout_s)
        self.app_sink = MemorySink(name="app")
        self.cloud = CloudService(
            secret=config.secret,
            thresholds=config.thresholds,
            external_thresholds=config.external_thresholds,
            utc_offset_hours=config.utc_offset_hours,
            dispatch_delay_s=config.latency.notify_dispatch_s,
            clock=lambda: self.epoch(self.sched.now),
        )
        self.cloud.add_sink(self.app_sink)
        for n in config.nodes:
            self.cloud.register_node(n.node_id, n.role.placement)

        self.traces: list[MessageTrace] = []
        self._by_key: dict[tuple[str, int], MessageTrace] = {}
        self._arrivals: dict[tuple[str, int], tuple[float, float]] = {}
        self._airborne: list[_Tx] = []
        self._retry_armed = False
        self._broker_tick_at: float | None = None
        self.max_airtime = 0.0
        self._started = False

        for conn in (self.GATEWAY_CONN, self.CLOUD_CONN):
            self.broker.open(conn)
            self.broker.handle(conn, _wire(codec.connect(conn)), 0.0)
        self.broker.handle(self.CLOUD_CONN, _wire(codec.subscribe(1, (SUBSCRIPTION_FILTER, 1))), 0.0)

    # -- time helpers -----------------------------------------------------------

    def epoch(self, t: float) -> float:
        return self.config.start_epoch + t

    def link_up(self, t: float) -> bool:
        return not any(o.covers(t) for o in self.config.outages)

    @property
    def horizon(self) -> float:
        return float(self.config.duration_s)

    # -- node cycles ----------------------------------------------------------------

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for node in self.nodes.values():
            t = node.config.start_offset_s
            if t < self.horizon:
                self.sched.schedule(t, self._cycle_action(node, 0), f"cycle {node.node_id}#0")

    def _cycle_action(self, node: WorkerNode, k: int):
        def fire(now: float) -> None:
            nxt = now + node.config.sample_interval_s
            if nxt < self.horizon:
                self.sched.schedule(nxt, self._cycle_action(node, k + 1), f"cycle {node.node_id}#{k + 1}")
            overrides: dict = {}
            for inj in self.config.injections:
                if inj.applies(node.node_id, now):
                    overrides.update(inj.values)
            reading = node.sample(self.epoch(now), self.config.utc_offset_hours, overrides or None)
            payload = encode_payload(reading)
            t_air = airtime_s(len(payload), self.config.air)
            self.max_airtime = max(self.max_airtime, t_air)
            trace = MessageTrace(node.node_id, k, now, reading, t_air)
            self.traces.append(trace)
            self._attempt(node, trace, payload, now)
        return fire

    def _attempt(self, node: WorkerNode, trace: MessageTrace, payload: bytes, now: float) -> None:
        trace.attempts += 1
        tx = _Tx(node.node_id, now, now + trace.airtime_s)
        self._airborne.append(tx)
        rssi = node.draw_rssi()
        self.sched.schedule(tx.end, lambda t: self._tx_end(node, trace, payload, tx, rssi), f"tx-end {node.node_id}")

    def _tx_end(self, node: WorkerNode, trace: MessageTrace, payload: bytes, tx: _Tx, rssi: float) -> None:
        collided = any(o is not tx and o.start < tx.end and tx.start < o.end for o in self._airborne)
        in_range = bool(delivery_outcome(rssi, node.channel))
        cutoff = tx.end - 2 * max(self.max_airtime, trace.airtime_s)
        self._airborne = [o for o in self._airborne if o.end > cutoff]
        if in_range and not collided:
            trace.tx_start = tx.start
            trace.rssi_dbm = rssi
            node.charge_cycle(trace.attempts, trace.airtime_s)
            done = tx.end + self.config.gateway.processing_s
            self.sched.schedule(done, lambda t: self._gateway_receive(trace, payload, rssi, t), "gateway-rx")
            return
        if trace.attempts < node.config.max_tx_retries:
            self.sched.schedule(tx.end + RETRY_BACKOFF_S, lambda t: self._attempt(node, trace, payload, t),
                                f"retry {node.node_id}")
            return
        trace.status = "lost_collision" if collided else "lost_range"
        node.charge_cycle(trace.attempts, trace.airtime_s)

    # -- gateway -----------------------------------------------------------------------

    def _gateway_receive(self, trace: MessageTrace, payload: bytes, rssi: float, now: float) -> None:
        result = self.gateway.on_lora_receive(payload, rssi, self.epoch(now))
        if isinstance(result, Rejection):
            trace.status = "rejected"
            return
        trace.status = "delivered"
        trace.timestamp_utc = result.timestamp_utc
        trace.gateway_done = now
        trace.outcome = "pending"
        self._by_key[(result.node_id, result.timestamp_utc)] = trace
        self.gateway.publish(result, self.link, now)
        self._arm_retry(now)

    def _arm_retry(self, now: float) -> None:
        if self._retry_armed or not self.gateway.needs_retry:
            return
        self._retry_armed = True
        self.sched.schedule(now + self.config.gateway.retry_interval_s, self._retry_tick, "gateway-retry")

    def _retry_tick(self, now: float) -> None:
        self._retry_armed = False
        self.gateway.retry_tick(self.link, now)
        if now < self.horizon + DRAIN_LIMIT_S:
            self._arm_retry(now)

    def _gateway_send(self, packet: Packet) -> None:
        now = self.sched.now
        if not self.link_up(now):
            raise ConnectionError("broker unreachable")
        packet = _wire(packet)
        wifi = self.config.latency.draw_wifi(self.latency_rng)
        if packet.type is PacketType.PUBLISH:
            key = self._key_of(packet)
            trace = self._by_key.get(key)
            if trace is not None and trace.published_at is None:
                trace.published_at = now
            self.sched.schedule(now + wifi, lambda t: self._broker_in(self.GATEWAY_CONN, packet, t, (now, wifi)),
                                "wifi-up")
        else:
            self.sched.schedule(now + wifi, lambda t: self._broker_in(self.GATEWAY_CONN, packet, t), "wifi-up")

    @staticmethod
    def _key_of(packet: Packet) -> tuple[str, int]:
        e = decode_enriched(packet.payload)
        return (e.node_id, e.timestamp_utc)

    # -- broker ------------------------------------------------------------------------

    def _broker_in(self, conn: str, packet: Packet, now: float, sent: tuple[float, float] | None = None) -> None:
        if sent is not None:
            self._arrivals.setdefault(self._key_of(packet), sent)
        self._route(self.broker.handle(conn, packet, now), now)

    def _route(self, outbound, now: float) -> None:
        delay = self.config.latency.broker_processing_s
        for conn, packet in outbound:
            packet = _wire(packet)
            if conn == self.CLOUD_CONN:
                self.sched.schedule(now + delay, lambda t, p=packet: self._cloud_receive(p, t), "broker-out")
            elif conn == self.GATEWAY_CONN:
                wifi = self.config.latency.draw_wifi(self.latency_rng)
                self.sched.schedule(now + delay + wifi, lambda t, p=packet: self._gateway_packet(p, t), "wifi-down")
        self._arm_broker_tick(now)

    def _gateway_packet(self, packet: Packet, now: float) -> None:
        if self.link_up(now):
            self.gateway.on_packet(packet)

    def _arm_broker_tick(self, now: float) -> None:
        deadline = self.broker.next_deadline()
        if deadline is None or (self._broker_tick_at is not None and self._broker_tick_at <= deadline):
            return
        self._broker_tick_at = max(deadline, now)

        def tick(t: float) -> None:
            self._broker_tick_at = None
            self._route(self.broker.tick(t), t)

        self.sched.schedule(self._broker_tick_at, tick, "broker-resend")

    # -- cloud ----------------------------------------------------------------------------

    def _cloud_receive(self, packet: Packet, now: float) -> None:
        if packet.type is not PacketType.PUBLISH:
            return
        self.sched.schedule(now + self.config.latency.cloud_ingest_s, lambda t: self._cloud_commit(packet, t),
                            "cloud-ingest")

    def _cloud_commit(self, packet: Packet, now: float) -> None:
        key = self._key_of(packet)
        trace = self._by_key.get(key)
        sample_epoch = self.epoch(trace.sample_time) if trace else None
        stored = self.cloud.ingest(packet.payload, now=self.epoch(now), sample_time=sample_epoch)
        if packet.qos == 1:
            self._route(self.broker.handle(self.CLOUD_CONN, _wire(codec.puback(packet.packet_id)), now), now)
        if trace is None:
            return
        if stored is None:
            return
        sent_at, wifi = self._arrivals[key]
        trace.published_at, trace.wifi_s = sent_at, wifi
        trace.committed_at = now
        trace.residual_s = self.config.latency.draw_residual(self.latency_rng)
        trace.outcome = "stored"

    # -- driving ------------------------------------------------------------------------------

    def run_until(self, t: float) -> None:
        self.start()
        self.sched.run(until=t)

    def run(self) -> "MetricsReport":
        self.start()
        self.sched.run(until=self.horizon + DRAIN_LIMIT_S)
        return self.report()

    def report(self) -> "MetricsReport":
        return MetricsReport.build(self)


# -- reporting -------------------------------------------------------------------------------

def _r(x, digits: int = 6):
    if isinstance(x, float):
        if math.isnan(x) or math.isinf(x):
            return None
        return round(x, digits) + 0.0
    if isinstance(x, dict):
        return {k: _r(v, digits) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_r(v, digits) for v in x]
    return x


def _stats(values) -> dict:
    if not values:
        return {"count": 0, "mean": None, "std": None, "min": None, "max": None}
    a = np.asarray(values, dtype=float)
    return {
        "count": int(a.size),
        "mean": float(a.mean()),
        "std": float(a.std(ddof=1)) if a.size > 1 else 0.0,
        "min": float(a.min()),
        "max": float(a.max()),
    }


LOSS_KEYS = ("delivered", "lost_range", "lost_collision", "rejected")
CSV_COLUMNS = (
    "node_id", "cycle", "sample_time_s", "timestamp_utc", "temperature", "humidity", "light",
    "attempts", "rssi_dbm", "status", "outcome", "latency_s",
)


@dataclass
class MetricsReport:
    data: dict
    rows: list[dict]

    @classmethod
    def build(cls, sim: Simulation) -> "MetricsReport":
        cfg = sim.config
        budget = cfg.latency
        # messages evicted from the gateway cache never reach storage
        for e in sim.gateway.evicted:
            trace = sim._by_key.get((e.node_id, e.timestamp_utc))
            if trace is not None:
                trace.outcome = "evicted"

        per_node: dict[str, dict] = {}
        for node_id, node in sim.nodes.items():
            traces = [t for t in sim.traces if t.node_id == node_id]
            counts = Counter(t.status for t in traces)
            stored = [t for t in traces if t.outcome == "stored"]
            sent = len(traces)
            per_node[node_id] = {
                "placement": node.config.role.placement.value,
                "obstructions": node.config.role.obstructions,
                "distance_m": node.config.distance_m,
                "wall_loss_db": node.wall_loss_db,
                "sent": sent,
                **{k: counts.get(k, 0) for k in LOSS_KEYS},
                "in_flight": counts.get("in_flight", 0),
                "stored": len(stored),
                "pdr": counts.get("delivered", 0) / sent if sent else None,
                "transmissions": sum(t.attempts for t in traces),
                "rssi_dbm": _stats([t.rssi_dbm for t in traces if t.rssi_dbm is not None]),
                "light_pct": _stats([t.reading.light for t in traces]),
                "temperature_c": _stats([t.reading.temperature for t in traces]),
                "energy_mah": node.energy_used_mah,
            }

        totals = {k: sum(n[k] for n in per_node.values()) for k in ("sent", *LOSS_KEYS, "in_flight", "stored")}
        totals["pdr"] = totals["delivered"] / totals["sent"] if totals["sent"] else None
        totals["duplicates_ignored"] = sim.cloud.duplicates
        totals["evicted"] = sim.gateway.overflow
        totals["energy_mah"] = sum(n["energy_mah"] for n in per_node.values())

        committed = [t for t in sim.traces if t.committed_at is not None]
        comps: dict[str, list[float]] = defaultdict(list)
        for t in committed:
            for k, v in t.components(budget).items():
                comps[k].append(v)
        latency = _stats([t.latency_s for t in committed])
        latency["components_mean"] = {k: float(np.mean(v)) for k, v in comps.items()}

        dispatch_by_alert = defaultdict(list)
        for d in sim.cloud.dispatches:
            dispatch_by_alert[d.alert_id].append(d)
        alerts = []
        for a in sim.cloud.store.alerts():
            entry = a.to_dict()
            ds = dispatch_by_alert.get(a.alert_id, [])
            entry["dispatch_latency_s"] = max((d.latency_s for d in ds), default=None)
            entry["dispatched"] = all(d.ok for d in ds) and bool(ds)
            alerts.append(entry)

        rejections = dict(sorted(sim.gateway.rejections.items()))
        data = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "scenario": cfg.name,
            "seed": sim.seed,
            "duration_s": float(cfg.duration_s),
            "start_epoch": cfg.start_epoch,
            "totals": totals,
            "nodes": per_node,
            "latency_s": latency,
            "alerts": alerts,
            "alert_escalations": len(sim.cloud.alerts.escalations),
            "notifications_dropped": sim.cloud.dropped_notifications,
            "gateway": {
                "accepted": sim.gateway.accepted,
                "published": sim.gateway.published,
                "republished": sim.gateway.republished,
                "acked": sim.gateway.acked,
                "cache_overflow": sim.gateway.overflow,
                "cache_remaining": len(sim.gateway.cache),
                "rejections": rejections,
            },
            "broker": dict(sim.broker.stats.__dict__),
            "cloud_rejections": dict(sorted(sim.cloud.rejections.items())),
            "notes": list(cfg.notes),
        }
        rows = [
            {
                "node_id": t.node_id,
                "cycle": t.cycle,
                "sample_time_s": t.sample_time,
                "timestamp_utc": t.timestamp_utc,
                "temperature": t.reading.temperature,
                "humidity": t.reading.humidity,
                "light": t.reading.light,
                "attempts": t.attempts,
                "rssi_dbm": t.rssi_dbm,
                "status": t.status,
                "outcome": t.outcome,
                "latency_s": t.latency_s,
            }
            for t in sorted(sim.traces, key=lambda t: (t.sample_time, t.node_id))
        ]
        return cls(_r(data), _r(rows))

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: "" if row[k] is None else row[k] for k in CSV_COLUMNS})
        return buf.getvalue()


def run(config: "ScenarioConfig", seed: int | None = None) -> MetricsReport:
    return Simulation(config, seed).run()
