"""Three-tier threshold classification and the consecutive-sample debouncer."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from ..model import Placement, SensorReading, Thresholds, Tier


class Parameter(str, enum.Enum):
    TEMPERATURE = "temperature"
    HUMIDITY = "humidity"
    LIGHT = "light"


@dataclass(frozen=True)
class Classification:
    tier: Tier
    value: float
    bound: float | None  # the threshold crossed, None when normal


def _banded(value: float, normal, warn_low, warn_high) -> Classification:
    if normal[0] <= value <= normal[1]:
        return Classification(Tier.NORMAL, value, None)
    if value < normal[0]:
        if value >= warn_low[0]:
            return Classification(Tier.WARNING, value, normal[0])
        return Classification(Tier.CRITICAL, value, warn_low[0])
    if value <= warn_high[1]:
        return Classification(Tier.WARNING, value, normal[1])
    return Classification(Tier.CRITICAL, value, warn_high[1])


def classify(
    reading: SensorReading,
    thresholds: Thresholds,
    local_clock_hour: float,
    placement: Placement = Placement.EXTERNAL,
) -> dict[Parameter, Classification]:
    """Tier for each parameter.

    Light above ``night_light_max`` inside the night window is critical.  In
    daytime, light below ``day_light_min`` is a warning for external nodes
    only; an internal node is dark by design.
    """
    t = thresholds
    out = {
        Parameter.TEMPERATURE: _banded(reading.temperature, t.temp_normal, t.temp_warning_low, t.temp_warning_high),
        Parameter.HUMIDITY: _banded(
            reading.humidity, t.humidity_normal, t.humidity_warning_low, t.humidity_warning_high
        ),
    }
    light = float(reading.light)
    if t.is_night(local_clock_hour):
        if light > t.night_light_max:
            out[Parameter.LIGHT] = Classification(Tier.CRITICAL, light, t.night_light_max)
        else:
            out[Parameter.LIGHT] = Classification(Tier.NORMAL, light, None)
    elif placement is Placement.EXTERNAL and light < t.day_light_min:
        out[Parameter.LIGHT] = Classification(Tier.WARNING, light, t.day_light_min)
    else:
        out[Parameter.LIGHT] = Classification(Tier.NORMAL, light, None)
    return out


@dataclass(frozen=True)
class AlertEvent:
    node_id: str
    parameter: Parameter
    tier: Tier
    value: float
    threshold_violated: float | None
    first_sample_ts: int
    confirm_sample_ts: int
    acknowledged: bool = False
    alert_id: int | None = None

    def to_dict(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "node_id": self.node_id,
            "parameter": self.parameter.value,
            "tier": self.tier.name.lower(),
            "value": self.value,
            "threshold_violated": self.threshold_violated,
            "first_sample_ts": self.first_sample_ts,
            "confirm_sample_ts": self.confirm_sample_ts,
            "acknowledged": self.acknowledged,
        }


@dataclass
class _Track:
    streak: list[tuple[Tier, int]]
    open_alert: AlertEvent | None = None


class AlertEngine:
    """Debounces classified samples per (node, parameter).

    An alert opens when the last ``debounce_samples`` samples are all
    non-normal; its tier is the most severe among them.  While an alert is
    open no new one is raised for the same key; a more severe sample
    escalates the open alert in place.  A normal sample, or an
    acknowledgment, closes it.
    """

    def __init__(self, debounce_samples: int = 2):
        if debounce_samples < 2:
            raise ValueError("debounce_samples must be >= 2")
        self.k = debounce_samples
        self._tracks: dict[tuple[str, Parameter], _Track] = {}
        self.escalations: list[AlertEvent] = []

    def step(
        self,
        node_id: str,
        parameter: Parameter,
        tier: Tier,
        timestamp: int,
        value: float = 0.0,
        bound: float | None = None,
    ) -> AlertEvent | None:
        key = (node_id, parameter)
        track = self._tracks.setdefault(key, _Track([]))
        if tier is Tier.NORMAL:
            track.streak.clear()
            track.open_alert = None
            return None
        track.streak.append((tier, timestamp))
        del track.streak[:-self.k]
        if track.open_alert is not None:
            if tier > track.open_alert.tier:
                track.open_alert = replace(track.open_alert, tier=tier, value=value, threshold_violated=bound)
                self.escalations.append(track.open_alert)
            return None
        if len(track.streak) < self.k:
            return None
        event = AlertEvent(
            node_id=node_id,
            parameter=parameter,
            tier=max(t for t, _ in track.streak),
            value=value,
            threshold_violated=bound,
            first_sample_ts=track.streak[0][1],
            confirm_sample_ts=timestamp,
        )
        track.open_alert = event
        return event

    def acknowledge(self, node_id: str, parameter: Parameter) -> None:
        """Close the open alert; the streak restarts from the next sample."""
        track = self._tracks.get((node_id, parameter))
        if track is not None:
            track.open_alert = None
            track.streak.clear()

    def open_alert(self, node_id: str, parameter: Parameter) -> AlertEvent | None:
        track = self._tracks.get((node_id, parameter))
        return track.open_alert if track else None


def debounce_step(node_id, parameter, tier, timestamp, engine: AlertEngine, value=0.0, bound=None):
    """Functional alias for :meth:`AlertEngine.step`."""
    return engine.step(node_id, parameter, tier, timestamp, value, bound)
