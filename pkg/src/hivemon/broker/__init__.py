"""Minimal MQTT 3.1.1 broker: codec, topic matching, QoS 0/1 core, transports."""

from .codec import (
    MalformedPacket,
    Packet,
    PacketType,
    decode_packet,
    decode_remaining_length,
    encode_packet,
    encode_remaining_length,
    split_packet,
)
from .core import Broker
from .topics import InvalidFilter, match_topic, validate_filter
from .transport import InProcessClient, InProcessTransport, MqttClient, MqttServer

__all__ = [
    "Broker",
    "InProcessClient",
    "InProcessTransport",
    "InvalidFilter",
    "MalformedPacket",
    "MqttClient",
    "MqttServer",
    "Packet",
    "PacketType",
    "decode_packet",
    "decode_remaining_length",
    "encode_packet",
    "encode_remaining_length",
    "match_topic",
    "split_packet",
    "validate_filter",
]
