import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hivemon.broker import (
    Broker,
    InProcessTransport,
    InvalidFilter,
    MalformedPacket,
    MqttClient,
    MqttServer,
    Packet,
    PacketType,
    decode_packet,
    decode_remaining_length,
    encode_packet,
    encode_remaining_length,
    match_topic,
    split_packet,
)
from hivemon.broker import codec

from support import brute_force_match, random_filter, random_packet, random_topic

DATA_TOPIC = "wagglenet/hive/hive1/data"


def test_random_packets_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(3000):
        p = random_packet(rng)
        wire = encode_packet(p)
        assert decode_packet(wire) == p
        assert split_packet(wire + b"\x00") == (p, len(wire))


def test_reference_publish_wire_size():
    wire = encode_packet(codec.publish(DATA_TOPIC, bytes(200), qos=1, packet_id=7))
    # 1 header + 2 length + (2 + 25) topic + 2 packet id + 200 payload
    assert len(wire) == 232
    assert wire[:3] == bytes([0x32, 229 & 0x7F | 0x80, 1])


@pytest.mark.parametrize(
    "length, encoded",
    [(0, b"\x00"), (127, b"\x7f"), (128, b"\x80\x01"), (16_383, b"\xff\x7f"), (16_384, b"\x80\x80\x01"),
     (2_097_151, b"\xff\xff\x7f"), (2_097_152, b"\x80\x80\x80\x01"), (268_435_455, b"\xff\xff\xff\x7f")],
)
def test_remaining_length_boundaries(length, encoded):
    assert encode_remaining_length(length) == encoded
    assert decode_remaining_length(b"\x30" + encoded) == (length, 1 + len(encoded))


def test_remaining_length_limits():
    with pytest.raises(ValueError):
        encode_remaining_length(268_435_456)
    with pytest.raises(MalformedPacket):
        decode_remaining_length(b"\x30\xff\xff\xff\xff\x01")
    assert decode_remaining_length(b"\x30\x80") is None


@settings(max_examples=1000)
@given(st.binary(max_size=64))
def test_decoder_is_total(data):
    try:
        p = decode_packet(data)
    except MalformedPacket:
        return
    assert encode_packet(p) == data


@pytest.mark.parametrize("data", [b"\x34\x05\x00\x01t\x00\x01", b"\x36\x05\x00\x01t\x00\x01", b"\x30\x03\x00\x01#",
                                  b"\x38\x03\x00\x01t", b"\x82\x02\x00\x01", b"\x50\x02\x00\x01", b"\x20\x03\x00\x00\x00"])
def test_rejects_unsupported_and_invalid(data):
    with pytest.raises(MalformedPacket):
        decode_packet(data)


def test_matcher_agrees_with_brute_force():
    rng = np.random.default_rng(9)
    for _ in range(5000):
        f, t = random_filter(rng), random_topic(rng)
        assert match_topic(f, t) == brute_force_match(f, t), (f, t)


@pytest.mark.parametrize(
    "f, t, expected",
    [("wagglenet/hive/+/data", DATA_TOPIC, True), ("wagglenet/#", DATA_TOPIC, True), ("#", DATA_TOPIC, True),
     ("wagglenet/hive/+", DATA_TOPIC, False), ("sport/#", "sport", True), ("+/+", "/finance", True),
     ("#", "$SYS/x", False), ("+/x", "$SYS/x", False), ("$SYS/#", "$SYS/x", True)],
)
def test_matcher_examples(f, t, expected):
    assert match_topic(f, t) is expected


@pytest.mark.parametrize("bad", ["", "a/#/b", "a#", "a+/b", "a/b#"])
def test_invalid_filters(bad):
    with pytest.raises(InvalidFilter):
        match_topic(bad, "a/b")


def _pair(clock):
    transport = InProcessTransport(Broker(resend_timeout_s=10.0), clock=lambda: clock[0])
    pub, sub = transport.connect("pub"), transport.connect("sub")
    assert [p.type for p in pub.receive()] == [PacketType.CONNACK]
    sub.receive()
    sub.send(codec.subscribe(1, ("wagglenet/hive/+/data", 1)))
    assert sub.receive()[0].granted == (1,)
    return transport, pub, sub


def test_publish_without_subscriber_is_discarded_but_acked():
    clock = [0.0]
    transport = InProcessTransport(Broker(), clock=lambda: clock[0])
    pub = transport.connect("pub")
    pub.receive()
    pub.send(codec.publish(DATA_TOPIC, b"x", qos=1, packet_id=3))
    assert pub.receive() == [codec.puback(3)]
    assert transport.broker.stats.discarded == 1


def test_qos1_redelivers_with_dup_until_acked():
    clock = [0.0]
    transport, pub, sub = _pair(clock)
    sub.drop_pubacks = 1
    pub.send(codec.publish(DATA_TOPIC, b"reading", qos=1, packet_id=1))
    assert pub.receive() == [codec.puback(1)]
    first = sub.receive()
    assert len(first) == 1 and not first[0].dup
    sub.ack(first[0])
    assert transport.broker.pending("sub") == 1
    clock[0] = 9.9
    transport.tick()
    assert sub.receive() == []
    clock[0] = 10.0
    transport.tick()
    again = sub.receive()
    assert len(again) == 1 and again[0].dup and again[0].payload == b"reading"
    assert again[0].packet_id == first[0].packet_id
    sub.ack(again[0])
    assert transport.broker.pending("sub") == 0


def test_qos_downgrade_to_subscription_level():
    clock = [0.0]
    transport, pub, sub = _pair(clock)
    low = transport.connect("low")
    low.receive()
    low.send(codec.subscribe(2, ("#", 0)))
    low.receive()
    pub.send(codec.publish(DATA_TOPIC, b"q", qos=1, packet_id=2))
    assert low.receive()[0].qos == 0
    assert sub.receive()[0].qos == 1


def test_publish_before_connect_closes_session():
    broker = Broker()
    assert broker.handle("x", codec.publish("a", b"", qos=0), 0.0) == []
    assert "x" not in broker.sessions and broker.stats.violations == 1


def test_outage_raises_on_send():
    clock = [0.0]
    transport, pub, _ = _pair(clock)
    transport.up = False
    with pytest.raises(ConnectionError):
        pub.send(codec.publish(DATA_TOPIC, b"x", qos=1, packet_id=4))


def test_tcp_loopback():
    server = MqttServer(Broker(resend_timeout_s=0.3), tick_interval_s=0.05).start()
    host, port = server.address
    try:
        sub = MqttClient("sub", host, port)
        assert sub.connect().return_code == 0
        assert sub.subscribe("wagglenet/hive/+/data") == (1,)
        sub.drop_pubacks = 1
        pub = MqttClient("pub", host, port)
        pub.connect()
        pub.publish(DATA_TOPIC, b'{"t": 1}')
        first = sub.recv()
        assert first.topic == DATA_TOPIC and not first.dup
        again = sub.recv(timeout=3.0)
        assert again.dup and again.payload == first.payload
        pub.ping()
        pub.close()
        sub.close()
    finally:
        server.stop()
