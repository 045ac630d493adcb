"""Simulated beehive telemetry stack: sensor nodes, LoRa channel, gateway,
MQTT broker and the storage/alerting/REST cloud tier on one virtual clock."""

from .engine import ConfigError, EventScheduler, LatencyBudget, MetricsReport, Simulation, run
from .model import EnrichedReading, SensorReading, Thresholds, Tier, decode_payload, encode_payload
from .scenario import ScenarioConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "EnrichedReading", "EventScheduler", "LatencyBudget", "MetricsReport", "ScenarioConfig",
    "SensorReading", "Simulation", "Thresholds", "Tier", "decode_payload", "encode_payload", "load_config", "run",
]
