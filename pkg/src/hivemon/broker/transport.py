"""Transports around :class:`~hivemon.broker.core.Broker`.

``InProcessTransport`` is synchronous and deterministic; every packet is still
round-tripped through the wire codec.  ``MqttServer``/``MqttClient`` speak the
same bytes over loopback TCP.
"""

from __future__ import annotations

import itertools
import logging
import queue
import socket
import socketserver
import threading
import time
from collections import deque
from typing import Callable, Hashable

from .codec import MalformedPacket, Packet, PacketType, encode_packet, decode_packet, split_packet
from . import codec
from .core import Broker

logger = logging.getLogger(__name__)


def _wire(packet: Packet) -> Packet:
    return decode_packet(encode_packet(packet))


class InProcessClient:
    def __init__(self, transport: "InProcessTransport", client_id: str):
        self.transport = transport
        self.client_id = client_id
        self.inbox: deque[Packet] = deque()
        self.drop_pubacks = 0  # fault injection: swallow this many outgoing PUBACKs
        self.dropped_pubacks = 0
        self._ids = itertools.cycle(range(1, 0x10000))

    def next_packet_id(self) -> int:
        return next(self._ids)

    def send(self, packet: Packet) -> None:
        if packet.type is PacketType.PUBACK and self.drop_pubacks:
            self.drop_pubacks -= 1
            self.dropped_pubacks += 1
            return
        self.transport._inbound(self, packet)

    def receive(self) -> list[Packet]:
        out = list(self.inbox)
        self.inbox.clear()
        return out

    def ack(self, packet: Packet) -> None:
        if packet.type is PacketType.PUBLISH and packet.qos == 1:
            self.send(codec.puback(packet.packet_id))


class InProcessTransport:
    """Loopback transport with an up/down switch for outage injection."""

    def __init__(self, broker: Broker, clock: Callable[[], float] = lambda: 0.0):
        self.broker = broker
        self.clock = clock
        self.up = True
        self.clients: dict[str, InProcessClient] = {}

    def connect(self, client_id: str, keepalive: int = 60) -> InProcessClient:
        client = InProcessClient(self, client_id)
        self.clients[client_id] = client
        self.broker.open(client_id)
        client.send(codec.connect(client_id, keepalive))
        return client

    def _inbound(self, client: InProcessClient, packet: Packet) -> None:
        if not self.up:
            raise ConnectionError("broker unreachable")
        self._route(self.broker.handle(client.client_id, _wire(packet), self.clock()))

    def _route(self, outbound) -> None:
        for conn, packet in outbound:
            client = self.clients.get(conn)
            if client is not None and self.up:
                client.inbox.append(_wire(packet))

    def tick(self, now: float | None = None) -> None:
        self._route(self.broker.tick(self.clock() if now is None else now))


# -- TCP ----------------------------------------------------------------------

def _recv_packet(sock: socket.socket, buf: bytearray) -> Packet | None:
    """Block until one full packet is buffered; None on EOF."""
    while True:
        result = split_packet(bytes(buf))
        if result is not None:
            packet, used = result
            del buf[:used]
            return packet
        chunk = sock.recv(4096)
        if not chunk:
            return None
        buf.extend(chunk)


class MqttServer:
    """Threaded TCP front end; all broker calls are serialised by one lock."""

    def __init__(self, broker: Broker, host: str = "127.0.0.1", port: int = 0,
                 tick_interval_s: float = 0.1, clock: Callable[[], float] = time.monotonic,
                 lock: threading.Lock | None = None,
                 external_route: Callable[[Hashable, Packet], None] | None = None):
        self.broker = broker
        self.clock = clock
        self.lock = lock or threading.RLock()
        self.tick_interval_s = tick_interval_s
        self.external_route = external_route
        self._socks: dict[Hashable, socket.socket] = {}
        self._stop = threading.Event()
        server = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                server._serve_connection(self.request)

        socketserver.ThreadingTCPServer.allow_reuse_address = True
        self._tcp = socketserver.ThreadingTCPServer((host, port), Handler, bind_and_activate=True)
        self._tcp.daemon_threads = True
        self._threads: list[threading.Thread] = []

    @property
    def address(self) -> tuple[str, int]:
        return self._tcp.server_address[:2]

    def start(self) -> "MqttServer":
        for target in (self._tcp.serve_forever, self._ticker):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self) -> None:
        self._stop.set()
        self._tcp.shutdown()
        self._tcp.server_close()
        for sock in list(self._socks.values()):
            try:
                sock.close()
            except OSError:
                pass

    def route(self, outbound) -> None:
        for conn, packet in outbound:
            sock = self._socks.get(conn)
            if sock is not None:
                try:
                    sock.sendall(encode_packet(packet))
                except OSError:
                    logger.debug("send to %r failed", conn)
            elif self.external_route is not None:
                self.external_route(conn, packet)

    def _ticker(self) -> None:
        while not self._stop.wait(self.tick_interval_s):
            with self.lock:
                self.route(self.broker.tick(self.clock()))

    def _serve_connection(self, sock: socket.socket) -> None:
        conn = ("tcp", id(sock))
        with self.lock:
            self._socks[conn] = sock
            self.broker.open(conn)
        buf = bytearray()
        try:
            while not self._stop.is_set():
                packet = _recv_packet(sock, buf)
                if packet is None:
                    break
                with self.lock:
                    self.route(self.broker.handle(conn, packet, self.clock()))
                    if conn not in self.broker.sessions:
                        break
        except (MalformedPacket, OSError) as exc:
            logger.info("dropping connection %r: %s", conn, exc)
        finally:
            with self.lock:
                self._socks.pop(conn, None)
                self.broker.close(conn)
            try:
                sock.close()
            except OSError:
                pass


class MqttClient:
    """Minimal blocking MQTT client for tests and demos."""

    def __init__(self, client_id: str, host: str, port: int, timeout: float = 5.0, auto_ack: bool = True):
        self.client_id = client_id
        self.timeout = timeout
        self.auto_ack = auto_ack
        self.drop_pubacks = 0
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sock.settimeout(None)
        self.messages: "queue.Queue[Packet]" = queue.Queue()
        self._control: "queue.Queue[Packet]" = queue.Queue()
        self._ids = itertools.cycle(range(1, 0x10000))
        self._send_lock = threading.Lock()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _send(self, packet: Packet) -> None:
        with self._send_lock:
            self.sock.sendall(encode_packet(packet))

    def _read_loop(self) -> None:
        buf = bytearray()
        try:
            while True:
                packet = _recv_packet(self.sock, buf)
                if packet is None:
                    return
                if packet.type is PacketType.PUBLISH:
                    self.messages.put(packet)
                    if packet.qos == 1 and self.auto_ack:
                        if self.drop_pubacks:
                            self.drop_pubacks -= 1
                        else:
                            self._send(codec.puback(packet.packet_id))
                else:
                    self._control.put(packet)
        except (OSError, MalformedPacket):
            return

    def _expect(self, ptype: PacketType) -> Packet:
        packet = self._control.get(timeout=self.timeout)
        if packet.type is not ptype:
            raise ConnectionError(f"expected {ptype.name}, got {packet.type.name}")
        return packet

    def connect(self, keepalive: int = 60) -> Packet:
        self._send(codec.connect(self.client_id, keepalive))
        return self._expect(PacketType.CONNACK)

    def subscribe(self, topic_filter: str, qos: int = 1) -> tuple[int, ...]:
        self._send(codec.subscribe(next(self._ids), (topic_filter, qos)))
        return self._expect(PacketType.SUBACK).granted

    def publish(self, topic: str, payload: bytes, qos: int = 1) -> None:
        pid = next(self._ids) if qos else 0
        self._send(codec.publish(topic, payload, qos=qos, packet_id=pid))
        if qos:
            ack = self._expect(PacketType.PUBACK)
            if ack.packet_id != pid:
                raise ConnectionError("PUBACK for unexpected packet id")

    def ping(self) -> None:
        self._send(Packet(PacketType.PINGREQ))
        self._expect(PacketType.PINGRESP)

    def recv(self, timeout: float | None = None) -> Packet:
        return self.messages.get(timeout=self.timeout if timeout is None else timeout)

    def close(self) -> None:
        try:
            self._send(Packet(PacketType.DISCONNECT))
        except OSError:
            pass
        self.sock.close()
