import json
from dataclasses import replace

import numpy as np
import pytest

from hivemon.broker.codec import Packet, PacketType, puback
from hivemon.gateway import Gateway, GatewayConfig, NtpClock, Rejection, topic_for
from hivemon.model import decode_enriched, encode_payload

from support import REPRESENTATIVE

NOW = REPRESENTATIVE.timestamp_local + 3.7


class FakeLink:
    def __init__(self):
        self.up = True
        self.sent = []
        self._pid = 0

    def next_packet_id(self):
        self._pid += 1
        return self._pid

    def send(self, packet):
        if not self.up:
            raise ConnectionError("down")
        self.sent.append(packet)


def _frame(**changes):
    obj = json.loads(encode_payload(REPRESENTATIVE))
    obj.update(changes)
    return json.dumps(obj).encode()


def test_accepts_and_enriches():
    gw = Gateway(clock=NtpClock(offset_s=0.4))
    out = gw.on_lora_receive(encode_payload(REPRESENTATIVE), -81.37, NOW)
    assert out.reading == REPRESENTATIVE
    assert out.timestamp_utc == REPRESENTATIVE.timestamp_local + 4
    assert out.gateway_id == "master-1" and out.rssi_dbm == -81.37
    assert gw.accepted == 1 and not gw.rejections


@pytest.mark.parametrize(
    "data, cause, field",
    [(encode_payload(REPRESENTATIVE)[:50], "malformed_json", None),
     (_frame(humidity=312.0), "out_of_range", "humidity"),
     (_frame(temperature=85.0), "out_of_range", "temperature"),
     (_frame(timestamp_local=REPRESENTATIVE.timestamp_local - 90_000), "timestamp_insane", None)],
)
def test_rejection_causes_counted(data, cause, field):
    gw = Gateway()
    out = gw.on_lora_receive(data, -80.0, NOW)
    assert isinstance(out, Rejection) and out.cause == cause and out.field == field
    assert gw.rejections[cause] == 1 and gw.accepted == 0


def test_missing_field_rejected():
    obj = json.loads(encode_payload(REPRESENTATIVE))
    del obj["light"]
    out = Gateway().on_lora_receive(json.dumps(obj).encode(), -80.0, NOW)
    assert (out.cause, out.field) == ("missing_field", "light")


def test_publishes_qos1_on_hive_topic():
    gw, link = Gateway(), FakeLink()
    enriched = gw.on_lora_receive(encode_payload(REPRESENTATIVE), -80.0, NOW)
    assert gw.publish(enriched, link, NOW) == "sent"
    (packet,) = link.sent
    assert packet.topic == topic_for("hive1-int-a") == "wagglenet/hive/hive1/data"
    assert packet.qos == 1 and decode_enriched(packet.payload) == enriched
    gw.on_packet(puback(packet.packet_id))
    assert gw.acked == 1 and not gw.needs_retry


def _enriched(gw, k):
    r = replace(REPRESENTATIVE, timestamp_local=REPRESENTATIVE.timestamp_local + 180 * k)
    return gw.on_lora_receive(encode_payload(r), -80.0, NOW + 180 * k)


def test_outage_caches_in_order_and_nothing_overtakes():
    gw, link = Gateway(GatewayConfig(retry_interval_s=30.0)), FakeLink()
    link.up = False
    msgs = [_enriched(gw, k) for k in range(4)]
    assert [gw.publish(m, link, NOW) for m in msgs[:2]] == ["cached", "cached"]
    link.up = True
    # link is back but the cache is not empty yet: the new message queues behind
    assert gw.publish(msgs[2], link, NOW + 10) == "cached"
    assert link.sent == []
    assert gw.retry_tick(link, NOW + 30) == 3
    sent = [decode_enriched(p.payload).reading.timestamp_local for p in link.sent]
    assert sent == [m.reading.timestamp_local for m in msgs[:3]]
    assert gw.publish(msgs[3], link, NOW + 31) == "sent"


def test_cache_overflow_evicts_oldest():
    gw, link = Gateway(GatewayConfig(cache_capacity=2)), FakeLink()
    link.up = False
    msgs = [_enriched(gw, k) for k in range(3)]
    for m in msgs:
        gw.publish(m, link, NOW)
    assert gw.overflow == 1 and gw.evicted == [msgs[0]]
    assert list(gw.cache) == msgs[1:]


def test_unacked_messages_resent_with_dup():
    gw, link = Gateway(GatewayConfig(retry_interval_s=30.0)), FakeLink()
    gw.publish(_enriched(gw, 0), link, NOW)
    assert gw.retry_tick(link, NOW + 29) == 0
    assert gw.retry_tick(link, NOW + 30) == 1
    first, again = link.sent
    assert again.dup and again.packet_id == first.packet_id and again.payload == first.payload
    gw.on_packet(puback(first.packet_id))
    assert not gw.needs_retry and gw.republished == 1


def test_ntp_jitter_is_bounded():
    clock = NtpClock(offset_s=0.0, jitter_s=0.5, rng=np.random.default_rng(0))
    stamps = {clock.utc(1000.2) for _ in range(500)}
    assert stamps <= {999, 1000}
    with pytest.raises(ValueError):
        NtpClock(jitter_s=1.0)


def test_non_puback_packets_ignored():
    gw = Gateway()
    gw.on_packet(Packet(PacketType.PINGRESP))
    assert gw.acked == 0
