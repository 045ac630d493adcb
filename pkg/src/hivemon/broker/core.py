"""Transport-independent broker state machine.

Connections are identified by an opaque hashable handle chosen by the
transport.  Every call returns the packets to send as ``(conn, packet)``
pairs; the transport decides how and when they travel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Hashable

from .codec import Packet, PacketType
from .topics import match_topic

logger = logging.getLogger(__name__)

Outbound = list[tuple[Hashable, Packet]]


class ProtocolViolation(Exception):
    pass


@dataclass
class _Inflight:
    packet: Packet
    deadline: float
    sends: int = 1


@dataclass
class Session:
    conn: Hashable
    client_id: str = ""
    connected: bool = False
    subscriptions: dict[str, int] = field(default_factory=dict)
    inflight: dict[int, _Inflight] = field(default_factory=dict)
    next_id: int = 1

    def allocate_id(self) -> int:
        for _ in range(0xFFFF):
            pid = self.next_id
            self.next_id = pid % 0xFFFF + 1
            if pid not in self.inflight:
                return pid
        raise RuntimeError("no free packet identifiers")


@dataclass
class BrokerStats:
    publishes_in: int = 0
    deliveries: int = 0
    redeliveries: int = 0
    discarded: int = 0
    violations: int = 0


class Broker:
    """QoS 0/1 publish-subscribe core.

    QoS 1 deliveries stay in flight per subscriber until PUBACK; anything
    unacknowledged after ``resend_timeout_s`` is sent again with DUP=1.
    """

    def __init__(self, resend_timeout_s: float = 10.0):
        self.resend_timeout_s = resend_timeout_s
        self.sessions: dict[Hashable, Session] = {}
        self.stats = BrokerStats()

    def open(self, conn: Hashable) -> None:
        self.sessions[conn] = Session(conn)

    def close(self, conn: Hashable) -> None:
        self.sessions.pop(conn, None)

    def handle(self, conn: Hashable, packet: Packet, now: float) -> Outbound:
        session = self.sessions.get(conn)
        if session is None:
            session = self.sessions[conn] = Session(conn)
        try:
            return self._dispatch(session, packet, now)
        except ProtocolViolation as exc:
            logger.info("closing %r: %s", conn, exc)
            self.stats.violations += 1
            self.close(conn)
            return []

    def _dispatch(self, s: Session, p: Packet, now: float) -> Outbound:
        t = p.type
        if t is PacketType.CONNECT:
            if s.connected:
                raise ProtocolViolation("second CONNECT")
            for other in list(self.sessions.values()):
                if other is not s and other.connected and other.client_id == p.client_id and p.client_id:
                    self.close(other.conn)
            s.client_id, s.connected = p.client_id, True
            return [(s.conn, Packet(PacketType.CONNACK, return_code=0))]
        if not s.connected:
            raise ProtocolViolation(f"{t.name} before CONNECT")
        if t is PacketType.PUBLISH:
            return self._publish(s, p, now)
        if t is PacketType.PUBACK:
            s.inflight.pop(p.packet_id, None)
            return []
        if t is PacketType.SUBSCRIBE:
            granted = []
            for topic_filter, qos in p.subscriptions:
                s.subscriptions[topic_filter] = min(qos, 1)
                granted.append(min(qos, 1))
            return [(s.conn, Packet(PacketType.SUBACK, packet_id=p.packet_id, granted=tuple(granted)))]
        if t is PacketType.PINGREQ:
            return [(s.conn, Packet(PacketType.PINGRESP))]
        if t is PacketType.DISCONNECT:
            self.close(s.conn)
            return []
        raise ProtocolViolation(f"client sent {t.name}")

    def _publish(self, s: Session, p: Packet, now: float) -> Outbound:
        self.stats.publishes_in += 1
        out: Outbound = []
        matched = False
        for sub in self.sessions.values():
            if not sub.connected:
                continue
            levels = [q for f, q in sub.subscriptions.items() if match_topic(f, p.topic)]
            if not levels:
                continue
            matched = True
            qos = min(p.qos, max(levels))
            if qos:
                pid = sub.allocate_id()
                msg = Packet(PacketType.PUBLISH, topic=p.topic, payload=p.payload, qos=1, packet_id=pid)
                sub.inflight[pid] = _Inflight(msg, now + self.resend_timeout_s)
            else:
                msg = Packet(PacketType.PUBLISH, topic=p.topic, payload=p.payload)
            self.stats.deliveries += 1
            out.append((sub.conn, msg))
        if not matched:
            self.stats.discarded += 1
        if p.qos == 1:
            out.append((s.conn, Packet(PacketType.PUBACK, packet_id=p.packet_id)))
        return out

    def next_deadline(self) -> float | None:
        deadlines = [f.deadline for s in self.sessions.values() for f in s.inflight.values()]
        return min(deadlines) if deadlines else None

    def tick(self, now: float) -> Outbound:
        """Redeliver every QoS 1 message whose acknowledgment is overdue."""
        out: Outbound = []
        for s in self.sessions.values():
            for pid, flight in s.inflight.items():
                if flight.deadline <= now:
                    flight.packet = replace(flight.packet, dup=True)
                    flight.deadline = now + self.resend_timeout_s
                    flight.sends += 1
                    self.stats.redeliveries += 1
                    out.append((s.conn, flight.packet))
        return out

    def pending(self, conn: Hashable) -> int:
        s = self.sessions.get(conn)
        return len(s.inflight) if s else 0
