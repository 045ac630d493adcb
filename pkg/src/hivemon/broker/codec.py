"""MQTT 3.1.1 wire codec for the packet types this broker speaks.

Supported: CONNECT, CONNACK, PUBLISH (QoS 0/1), PUBACK, SUBSCRIBE, SUBACK,
PINGREQ, PINGRESP, DISCONNECT.  Anything else, including QoS 2 and will
messages, is rejected as :class:`MalformedPacket`.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .topics import InvalidFilter, validate_filter, validate_topic

MAX_REMAINING_LENGTH = 268_435_455  # 0xFF 0xFF 0xFF 0x7F
PROTOCOL_NAME = "MQTT"
PROTOCOL_LEVEL = 4


class MalformedPacket(ValueError):
    pass


class PacketType(enum.IntEnum):
    CONNECT = 1
    CONNACK = 2
    PUBLISH = 3
    PUBACK = 4
    SUBSCRIBE = 8
    SUBACK = 9
    PINGREQ = 12
    PINGRESP = 13
    DISCONNECT = 14


SUBACK_FAILURE = 0x80


@dataclass(frozen=True)
class Packet:
    """One control packet.  Only the fields relevant to ``type`` are meaningful."""

    type: PacketType
    # PUBLISH
    topic: str = ""
    payload: bytes = b""
    qos: int = 0
    dup: bool = False
    retain: bool = False
    # PUBLISH (QoS 1), PUBACK, SUBSCRIBE, SUBACK
    packet_id: int = 0
    # CONNECT
    client_id: str = ""
    keepalive: int = 60
    clean_session: bool = True
    username: str | None = None
    password: bytes | None = None
    # CONNACK
    session_present: bool = False
    return_code: int = 0
    # SUBSCRIBE / SUBACK
    subscriptions: tuple[tuple[str, int], ...] = ()
    granted: tuple[int, ...] = ()

    @property
    def flags(self) -> int:
        if self.type is PacketType.PUBLISH:
            return (self.dup << 3) | (self.qos << 1) | int(self.retain)
        if self.type is PacketType.SUBSCRIBE:
            return 0b0010
        return 0

    @property
    def remaining_length(self) -> int:
        return len(_body(self))


def connect(client_id: str, keepalive: int = 60, clean_session: bool = True,
            username: str | None = None, password: bytes | None = None) -> Packet:
    return Packet(PacketType.CONNECT, client_id=client_id, keepalive=keepalive,
                  clean_session=clean_session, username=username, password=password)


def publish(topic: str, payload: bytes, qos: int = 0, packet_id: int = 0,
            dup: bool = False, retain: bool = False) -> Packet:
    return Packet(PacketType.PUBLISH, topic=topic, payload=bytes(payload), qos=qos,
                  packet_id=packet_id, dup=dup, retain=retain)


def puback(packet_id: int) -> Packet:
    return Packet(PacketType.PUBACK, packet_id=packet_id)


def subscribe(packet_id: int, *subscriptions: tuple[str, int]) -> Packet:
    return Packet(PacketType.SUBSCRIBE, packet_id=packet_id, subscriptions=tuple(subscriptions))


# -- primitives -------------------------------------------------------------

def encode_remaining_length(length: int) -> bytes:
    if not 0 <= length <= MAX_REMAINING_LENGTH:
        raise ValueError(f"remaining length {length} not encodable")
    out = bytearray()
    while True:
        digit = length % 128
        length //= 128
        if length:
            digit |= 0x80
        out.append(digit)
        if not length:
            return bytes(out)


def decode_remaining_length(buf: bytes, start: int = 1) -> tuple[int, int] | None:
    """Return (length, index after the varint), or None if ``buf`` ends early."""
    value = 0
    multiplier = 1
    for i in range(start, start + 4):
        if i >= len(buf):
            return None
        byte = buf[i]
        value += (byte & 0x7F) * multiplier
        if not byte & 0x80:
            return value, i + 1
        multiplier *= 128
    raise MalformedPacket("remaining length exceeds 4 bytes")


def _u16(value: int) -> bytes:
    return struct.pack("!H", value)


def _string(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string too long for MQTT")
    return _u16(len(raw)) + raw


def _blob(data: bytes) -> bytes:
    return _u16(len(data)) + data


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int) -> bytes:
        if self.remaining() < n:
            raise MalformedPacket("packet body truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("!H", self.take(2))[0]

    def blob(self) -> bytes:
        return self.take(self.u16())

    def string(self) -> str:
        raw = self.blob()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedPacket("invalid UTF-8 string") from None
        if "\x00" in text:
            raise MalformedPacket("U+0000 in UTF-8 string")
        return text

    def rest(self) -> bytes:
        return self.take(self.remaining())

    def done(self) -> None:
        if self.remaining():
            raise MalformedPacket("trailing bytes in packet body")


# -- encoding ---------------------------------------------------------------

def _check_packet_id(pid: int) -> None:
    if not 1 <= pid <= 0xFFFF:
        raise ValueError("packet identifier must be in 1..65535")


def _body(p: Packet) -> bytes:
    t = p.type
    if t is PacketType.CONNECT:
        flags = 0x02 if p.clean_session else 0
        tail = _string(p.client_id)
        if p.username is not None:
            flags |= 0x80
            tail += _string(p.username)
        if p.password is not None:
            if p.username is None:
                raise ValueError("password requires username")
            flags |= 0x40
            tail += _blob(p.password)
        return _string(PROTOCOL_NAME) + bytes([PROTOCOL_LEVEL, flags]) + _u16(p.keepalive) + tail
    if t is PacketType.CONNACK:
        return bytes([int(p.session_present), p.return_code])
    if t is PacketType.PUBLISH:
        if p.qos not in (0, 1):
            raise ValueError("only QoS 0 and 1 are supported")
        if p.qos == 0 and (p.dup or p.packet_id):
            raise ValueError("QoS 0 PUBLISH carries neither DUP nor a packet identifier")
        validate_topic(p.topic)
        body = _string(p.topic)
        if p.qos:
            _check_packet_id(p.packet_id)
            body += _u16(p.packet_id)
        return body + p.payload
    if t is PacketType.PUBACK:
        _check_packet_id(p.packet_id)
        return _u16(p.packet_id)
    if t is PacketType.SUBSCRIBE:
        _check_packet_id(p.packet_id)
        if not p.subscriptions:
            raise ValueError("SUBSCRIBE needs at least one topic filter")
        return _u16(p.packet_id) + b"".join(_string(f) + bytes([q]) for f, q in p.subscriptions)
    if t is PacketType.SUBACK:
        _check_packet_id(p.packet_id)
        return _u16(p.packet_id) + bytes(p.granted)
    return b""


def encode_packet(p: Packet) -> bytes:
    body = _body(p)
    return bytes([(int(p.type) << 4) | p.flags]) + encode_remaining_length(len(body)) + body


# -- decoding ---------------------------------------------------------------

def _packet_id(r: _Reader) -> int:
    pid = r.u16()
    if pid == 0:
        raise MalformedPacket("packet identifier must be nonzero")
    return pid


def _decode_body(ptype: PacketType, flags: int, body: bytes) -> Packet:
    r = _Reader(body)
    if ptype is PacketType.PUBLISH:
        dup, qos, retain = bool(flags & 0x8), (flags >> 1) & 0x3, bool(flags & 0x1)
        if qos == 3:
            raise MalformedPacket("PUBLISH QoS 3")
        if qos == 2:
            raise MalformedPacket("QoS 2 is not supported")
        if qos == 0 and dup:
            raise MalformedPacket("DUP set on QoS 0 PUBLISH")
        topic = r.string()
        try:
            validate_topic(topic)
        except ValueError as exc:
            raise MalformedPacket(str(exc)) from None
        pid = _packet_id(r) if qos else 0
        return Packet(ptype, topic=topic, payload=r.rest(), qos=qos, dup=dup, retain=retain, packet_id=pid)

    expected = 0b0010 if ptype is PacketType.SUBSCRIBE else 0
    if flags != expected:
        raise MalformedPacket(f"invalid flags {flags:#x} for {ptype.name}")

    if ptype is PacketType.CONNECT:
        if r.string() != PROTOCOL_NAME:
            raise MalformedPacket("unknown protocol name")
        if r.u8() != PROTOCOL_LEVEL:
            raise MalformedPacket("unsupported protocol level")
        cflags = r.u8()
        if cflags & 0x01:
            raise MalformedPacket("reserved connect flag set")
        if cflags & 0x3C:
            raise MalformedPacket("will messages are not supported")
        has_user, has_pass = bool(cflags & 0x80), bool(cflags & 0x40)
        if has_pass and not has_user:
            raise MalformedPacket("password flag without username flag")
        keepalive = r.u16()
        client_id = r.string()
        username = r.string() if has_user else None
        password = r.blob() if has_pass else None
        r.done()
        return Packet(ptype, client_id=client_id, keepalive=keepalive, clean_session=bool(cflags & 0x02),
                      username=username, password=password)
    if ptype is PacketType.CONNACK:
        ack_flags, code = r.u8(), r.u8()
        r.done()
        if ack_flags & 0xFE or code > 5:
            raise MalformedPacket("invalid CONNACK")
        return Packet(ptype, session_present=bool(ack_flags), return_code=code)
    if ptype is PacketType.PUBACK:
        pid = _packet_id(r)
        r.done()
        return Packet(ptype, packet_id=pid)
    if ptype is PacketType.SUBSCRIBE:
        pid = _packet_id(r)
        subs = []
        while r.remaining():
            topic_filter = r.string()
            qos = r.u8()
            if qos & 0xFC or qos == 3:
                raise MalformedPacket("invalid requested QoS")
            try:
                validate_filter(topic_filter)
            except InvalidFilter as exc:
                raise MalformedPacket(str(exc)) from None
            subs.append((topic_filter, qos))
        if not subs:
            raise MalformedPacket("SUBSCRIBE without topic filters")
        return Packet(ptype, packet_id=pid, subscriptions=tuple(subs))
    if ptype is PacketType.SUBACK:
        pid = _packet_id(r)
        codes = tuple(r.rest())
        if not codes or any(c not in (0, 1, 2, SUBACK_FAILURE) for c in codes):
            raise MalformedPacket("invalid SUBACK return codes")
        return Packet(ptype, packet_id=pid, granted=codes)
    r.done()  # PINGREQ, PINGRESP, DISCONNECT carry no body
    return Packet(ptype)


def split_packet(buf: bytes) -> tuple[Packet, int] | None:
    """Decode the first packet in ``buf``.

    Returns (packet, bytes consumed), or None when more bytes are needed.
    """
    if not buf:
        return None
    header = buf[0]
    try:
        ptype = PacketType(header >> 4)
    except ValueError:
        raise MalformedPacket(f"unsupported packet type {header >> 4}") from None
    decoded = decode_remaining_length(buf)
    if decoded is None:
        return None
    length, start = decoded
    if len(buf) < start + length:
        return None
    packet = _decode_body(ptype, header & 0x0F, bytes(buf[start:start + length]))
    return packet, start + length


def decode_packet(data: bytes) -> Packet:
    """Decode exactly one packet; raises MalformedPacket on anything else."""
    result = split_packet(data)
    if result is None:
        raise MalformedPacket("incomplete packet")
    packet, used = result
    if used != len(data):
        raise MalformedPacket("trailing bytes after packet")
    return packet
