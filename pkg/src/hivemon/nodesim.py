"""Worker node behaviour: sensor synthesis, the sample/transmit/sleep cycle and
the duty-cycle energy model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import NodeRole, Placement, SensorReading, encode_payload
from .rfsim import (
    ChannelParams,
    LoraAirParams,
    airtime_s,
    delivery_outcome,
    draw_obstruction_loss_db,
    draw_shadowing,
    link_budget_dbm,
)

METERS_PER_DEGREE_LAT = 111_320.0
RETRY_BACKOFF_S = 2.0


@dataclass(frozen=True)
class SensorModelParams:
    internal_mean_temp_c: float = 33.2
    internal_temp_sigma: float = 0.5
    internal_temp_bounds: tuple[float, float] = (30.0, 37.0)
    internal_humidity_mean: float = 62.0
    internal_humidity_sigma: float = 1.5
    external_diurnal_mean_c: float = 22.0
    external_diurnal_amplitude_c: float = 4.0
    external_peak_hour: float = 15.0
    external_temp_sigma: float = 0.3
    external_humidity_mean: float = 58.0
    external_humidity_sigma: float = 2.0
    internal_light_pct: int = 0
    external_day_light_pct: tuple[int, int] = (75, 85)
    sunrise_hour: float = 6.0
    sunset_hour: float = 18.0

    def __post_init__(self) -> None:
        if min(self.internal_temp_sigma, self.external_diurnal_amplitude_c, self.external_temp_sigma,
               self.internal_humidity_sigma, self.external_humidity_sigma) < 0:
            raise ValueError("amplitudes and noise levels must be >= 0")
        lo, hi = self.external_day_light_pct
        if not (0 <= self.internal_light_pct <= 100 and 0 <= lo <= hi <= 100):
            raise ValueError("light percentages must lie in [0, 100]")
        if not 0 <= self.sunrise_hour < self.sunset_hour <= 24:
            raise ValueError("need 0 <= sunrise_hour < sunset_hour <= 24")


@dataclass(frozen=True)
class EnergyProfile:
    active_current_ma: float = 100.0
    active_duration_s: float = 7.0
    sleep_current_ma: float = 18.0
    deep_sleep_current_ma: float = 3.0
    battery_capacity_mah: float = 1100.0
    # charge for each transmission attempt beyond the first (LoRa TX current)
    tx_current_ma: float = 120.0

    def __post_init__(self) -> None:
        values = (self.active_current_ma, self.active_duration_s, self.sleep_current_ma,
                  self.deep_sleep_current_ma, self.battery_capacity_mah, self.tx_current_ma)
        if min(values) <= 0:
            raise ValueError("energy profile values must be positive")


@dataclass(frozen=True)
class NodeConfig:
    node_id: str
    role: NodeRole = NodeRole()
    position: tuple[float, float, float] = (40.4156, -86.8947, 190.0)
    distance_m: float = 10.0
    gps_jitter_m: float = 2.5
    sample_interval_s: float = 180.0
    max_tx_retries: int = 3
    start_offset_s: float = 0.0
    clock_skew_s: int = 0
    sensor_model: SensorModelParams = SensorModelParams()
    energy: EnergyProfile = EnergyProfile()

    def __post_init__(self) -> None:
        if self.max_tx_retries < 1:
            raise ValueError("max_tx_retries must be >= 1")
        if self.energy.active_duration_s >= self.sample_interval_s:
            raise ValueError("active_duration_s must be shorter than sample_interval_s")
        if self.gps_jitter_m < 0 or self.distance_m < 0 or self.start_offset_s < 0:
            raise ValueError("gps_jitter_m, distance_m and start_offset_s must be >= 0")


def average_current_ma(profile: EnergyProfile, interval_s: float, sleep_current_ma: float | None = None) -> float:
    """Time-weighted mean current over one sampling interval."""
    if interval_s < profile.active_duration_s:
        raise ValueError("interval_s must cover the active window")
    sleep = profile.sleep_current_ma if sleep_current_ma is None else sleep_current_ma
    active = profile.active_current_ma * profile.active_duration_s
    return (active + sleep * (interval_s - profile.active_duration_s)) / interval_s


def battery_life_hours(profile: EnergyProfile, interval_s: float, sleep_current_ma: float | None = None) -> float:
    return profile.battery_capacity_mah / average_current_ma(profile, interval_s, sleep_current_ma)


def cycle_energy_mah(profile: EnergyProfile, interval_s: float, attempts: int = 1, tx_airtime_s: float = 0.0) -> float:
    """Charge drawn over one full cycle, including extra transmission attempts."""
    base = average_current_ma(profile, interval_s) * interval_s / 3600.0
    extra = max(attempts - 1, 0) * profile.tx_current_ma * tx_airtime_s / 3600.0
    return base + extra


def _local_hour(epoch_s: float, utc_offset_hours: float) -> float:
    return ((epoch_s + utc_offset_hours * 3600.0) % 86400.0) / 3600.0


def external_light_pct(hour: float, params: SensorModelParams, day_level: float) -> float:
    """Day level between sunrise+1h and sunset-1h, linear one-hour ramps, dark at night."""
    rise, set_ = params.sunrise_hour, params.sunset_hour
    if hour <= rise or hour >= set_:
        return 0.0
    ramp = min(1.0, hour - rise, set_ - hour)
    return day_level * ramp


def external_temperature_c(hour: float, params: SensorModelParams) -> float:
    phase = 2.0 * math.pi * (hour - params.external_peak_hour) / 24.0
    return params.external_diurnal_mean_c + params.external_diurnal_amplitude_c * math.cos(phase)


def _truncated_normal(rng: np.random.Generator, mean: float, sigma: float, bounds: tuple[float, float]) -> float:
    if sigma == 0:
        return min(max(mean, bounds[0]), bounds[1])
    while True:
        x = rng.normal(mean, sigma)
        if bounds[0] <= x <= bounds[1]:
            return float(x)


def sample_sensors(
    config: NodeConfig,
    epoch_time: float,
    rng: np.random.Generator,
    utc_offset_hours: float = 0.0,
    overrides: dict | None = None,
) -> SensorReading:
    """Synthesise one reading at absolute time ``epoch_time`` (Unix seconds).

    ``overrides`` replaces generated values by field name (fault injection).
    """
    p = config.sensor_model
    hour = _local_hour(epoch_time, utc_offset_hours)
    if config.role.placement is Placement.INTERNAL:
        temperature = _truncated_normal(rng, p.internal_mean_temp_c, p.internal_temp_sigma, p.internal_temp_bounds)
        humidity = rng.normal(p.internal_humidity_mean, p.internal_humidity_sigma)
        light = p.internal_light_pct
    else:
        temperature = external_temperature_c(hour, p) + rng.normal(0.0, p.external_temp_sigma)
        humidity = rng.normal(p.external_humidity_mean, p.external_humidity_sigma)
        day_level = rng.uniform(*p.external_day_light_pct)
        light = int(round(external_light_pct(hour, p, day_level)))

    lat, lon, alt = config.position
    if config.gps_jitter_m > 0:
        north, east = rng.normal(0.0, config.gps_jitter_m, size=2)
        lat += north / METERS_PER_DEGREE_LAT
        lon += east / (METERS_PER_DEGREE_LAT * max(math.cos(math.radians(lat)), 1e-6))

    values = dict(
        node_id=config.node_id,
        temperature=float(temperature),
        humidity=float(min(max(humidity, 0.0), 100.0)),
        light=int(light),
        latitude=float(lat),
        longitude=float(lon),
        altitude=float(alt),
        timestamp_local=int(math.floor(epoch_time)) + config.clock_skew_s,
    )
    if overrides:
        values.update(overrides)
    return SensorReading(**values)


@dataclass
class AttemptResult:
    start_time: float
    airtime_s: float
    rssi_dbm: float
    delivered: bool
    collided: bool = False


@dataclass
class CycleOutcome:
    reading: SensorReading
    payload: bytes
    attempts: list[AttemptResult]
    energy_mah: float

    @property
    def delivered(self) -> bool:
        return bool(self.attempts) and self.attempts[-1].delivered

    @property
    def status(self) -> str:
        return "delivered" if self.delivered else "lost_after_retries"


class WorkerNode:
    """Stateful node: its own random stream, fixed wall loss and battery.

    The wall loss of an internal node is drawn once at construction because
    the hive walls between node and gateway do not change packet to packet.
    """

    def __init__(self, config: NodeConfig, channel: ChannelParams, rng: np.random.Generator):
        self.config = config
        self.channel = channel
        self.rng = rng
        self.wall_loss_db = draw_obstruction_loss_db(config.role.obstructions, channel, rng)
        self.mean_rssi_dbm = float(link_budget_dbm(config.distance_m, channel, self.wall_loss_db))
        self.battery_mah = config.energy.battery_capacity_mah
        self.energy_used_mah = 0.0
        self.cycles = 0

    @property
    def node_id(self) -> str:
        return self.config.node_id

    def sample(self, epoch_time: float, utc_offset_hours: float = 0.0, overrides: dict | None = None) -> SensorReading:
        return sample_sensors(self.config, epoch_time, self.rng, utc_offset_hours, overrides)

    def draw_rssi(self) -> float:
        return self.mean_rssi_dbm - float(draw_shadowing(self.channel, self.rng))

    def charge_cycle(self, attempts: int, tx_airtime_s: float) -> float:
        used = cycle_energy_mah(self.config.energy, self.config.sample_interval_s, attempts, tx_airtime_s)
        self.energy_used_mah += used
        self.battery_mah -= used
        self.cycles += 1
        return used

    def attempt_start_times(self, cycle_start: float, tx_airtime_s: float) -> list[float]:
        step = tx_airtime_s + RETRY_BACKOFF_S
        return [cycle_start + k * step for k in range(self.config.max_tx_retries)]


def run_node_cycle(
    node: WorkerNode,
    air: LoraAirParams,
    cycle_start: float,
    start_epoch: float = 0.0,
    utc_offset_hours: float = 0.0,
    collides: Callable[[float, float], bool] | None = None,
) -> CycleOutcome:
    """One isolated cycle: sample, encode, transmit with retries, account energy.

    ``collides(start, end)`` reports whether another transmitter overlapped an
    attempt; by default the channel is otherwise clear.
    """
    reading = node.sample(start_epoch + cycle_start, utc_offset_hours)
    payload = encode_payload(reading)
    t_air = airtime_s(len(payload), air)
    attempts: list[AttemptResult] = []
    for start in node.attempt_start_times(cycle_start, t_air):
        rssi = node.draw_rssi()
        collided = bool(collides and collides(start, start + t_air))
        ok = bool(delivery_outcome(rssi, node.channel)) and not collided
        attempts.append(AttemptResult(start, t_air, rssi, ok, collided))
        if ok:
            break
    energy = node.charge_cycle(len(attempts), t_air)
    return CycleOutcome(reading, payload, attempts, energy)


def simulate_depletion(profile: EnergyProfile, interval_s: float, sleep_current_ma: float | None = None) -> float:
    """Hours until the battery is empty, stepping active/sleep phases as events.

    Independent of the closed form: charge is drained phase by phase and the
    empty instant is located inside the phase where it occurs.
    """
    from .engine import EventScheduler

    sleep = profile.sleep_current_ma if sleep_current_ma is None else sleep_current_ma
    sched = EventScheduler()
    state = {"charge": profile.battery_capacity_mah, "empty_at": None}
    sleep_s = interval_s - profile.active_duration_s

    def phase(current_ma: float, duration_s: float, next_phase):
        def fire(now: float) -> None:
            drain = current_ma * duration_s / 3600.0
            if drain >= state["charge"]:
                state["empty_at"] = now + state["charge"] / current_ma * 3600.0
                return
            state["charge"] -= drain
            sched.schedule(now + duration_s, next_phase(), "phase")
        return fire

    def active():
        return phase(profile.active_current_ma, profile.active_duration_s, sleeping)

    def sleeping():
        return phase(sleep, sleep_s, active)

    sched.schedule(0.0, active(), "phase")
    sched.run()
    return state["empty_at"] / 3600.0
