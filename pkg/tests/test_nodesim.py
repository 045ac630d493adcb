import numpy as np
import pytest
from hypothesis import given, strategies as st

from hivemon.model import NodeRole, Placement, encode_payload
from hivemon.nodesim import (
    EnergyProfile,
    NodeConfig,
    SensorModelParams,
    WorkerNode,
    average_current_ma,
    battery_life_hours,
    cycle_energy_mah,
    external_light_pct,
    run_node_cycle,
    sample_sensors,
    simulate_depletion,
)
from hivemon.rfsim import LoraAirParams, channel_preset

NOON = 1754049600  # 2025-08-01 12:00 UTC
MIDNIGHT = NOON + 12 * 3600


def test_energy_reference_figures():
    profile = EnergyProfile()
    assert average_current_ma(profile, 180.0) == pytest.approx((100 * 7 + 18 * 173) / 180, rel=1e-12)
    assert average_current_ma(profile, 180.0) == pytest.approx(21.18889, abs=1e-5)
    assert battery_life_hours(profile, 180.0) == pytest.approx(51.914, abs=1e-3)
    assert battery_life_hours(profile, 180.0, profile.deep_sleep_current_ma) == pytest.approx(162.43, abs=0.01)


@given(st.floats(0.1, 500), st.floats(1, 100), st.floats(200, 10_000))
def test_sleep_equal_active_is_flat(current, active_s, interval):
    profile = EnergyProfile(active_current_ma=current, active_duration_s=active_s, sleep_current_ma=current)
    assert average_current_ma(profile, interval) == pytest.approx(current)


def test_event_driven_depletion_agrees_with_closed_form():
    profile = EnergyProfile()
    sim = simulate_depletion(profile, 180.0)
    closed = battery_life_hours(profile, 180.0)
    avg = average_current_ma(profile, 180.0)
    # the stepped run front-loads at most one active window above the mean draw
    slack_h = (profile.active_current_ma - avg) * profile.active_duration_s / 3600 / avg
    assert closed - slack_h <= sim <= closed


def test_retries_cost_extra_charge():
    profile = EnergyProfile()
    one = cycle_energy_mah(profile, 180.0, 1, 0.3)
    three = cycle_energy_mah(profile, 180.0, 3, 0.3)
    assert three - one == pytest.approx(2 * 120.0 * 0.3 / 3600)


def _config(placement=Placement.EXTERNAL, **kw):
    return NodeConfig("hive1-ext-a", role=NodeRole(placement, 1 if placement is Placement.INTERNAL else 0), **kw)


def test_internal_light_always_zero():
    rng = np.random.default_rng(0)
    cfg = _config(Placement.INTERNAL)
    for t in range(NOON, NOON + 86400, 1800):
        r = sample_sensors(cfg, t, rng)
        assert r.light == 0
        assert 30.0 <= r.temperature <= 37.0


def test_external_light_is_dark_at_night_and_bright_at_noon():
    rng = np.random.default_rng(0)
    cfg = _config()
    assert sample_sensors(cfg, MIDNIGHT, rng).light == 0
    assert 75 <= sample_sensors(cfg, NOON, rng).light <= 85
    p = SensorModelParams()
    assert external_light_pct(6.5, p, 80.0) == pytest.approx(40.0)
    assert external_light_pct(18.0, p, 80.0) == 0.0


def test_utc_offset_shifts_daylight():
    rng = np.random.default_rng(0)
    # noon UTC is 02:00 at UTC-10
    assert sample_sensors(_config(), NOON, rng, utc_offset_hours=-10).light == 0


def test_clock_skew_and_overrides():
    rng = np.random.default_rng(0)
    r = sample_sensors(_config(clock_skew_s=-7), NOON + 0.9, rng, overrides={"temperature": 38.2})
    assert r.timestamp_local == NOON - 7
    assert r.temperature == 38.2


def test_gps_jitter_stays_local():
    rng = np.random.default_rng(0)
    cfg = _config()
    for _ in range(200):
        r = sample_sensors(cfg, NOON, rng)
        assert abs(r.latitude - 40.4156) < 0.001 and abs(r.longitude + 86.8947) < 0.001
    still = sample_sensors(_config(gps_jitter_m=0.0), NOON, rng)
    assert (still.latitude, still.longitude) == (40.4156, -86.8947)


def test_wall_loss_drawn_once_per_node():
    node = WorkerNode(_config(Placement.INTERNAL, distance_m=30.0), channel_preset("urban"), np.random.default_rng(4))
    assert 3.0 <= node.wall_loss_db <= 5.0
    before = node.wall_loss_db
    for _ in range(5):
        node.draw_rssi()
    assert node.wall_loss_db == before


def test_cycle_retries_until_delivered():
    node = WorkerNode(_config(distance_m=5.0), channel_preset("urban"), np.random.default_rng(2))
    calls = []

    def collides(start, end):
        calls.append(start)
        return len(calls) < 3

    out = run_node_cycle(node, LoraAirParams(), 0.0, NOON, collides=collides)
    assert [a.collided for a in out.attempts] == [True, True, False]
    assert out.delivered and out.status == "delivered"
    assert out.attempts[1].start_time - out.attempts[0].start_time == pytest.approx(out.attempts[0].airtime_s + 2.0)
    assert out.payload == encode_payload(out.reading)
    assert node.energy_used_mah == pytest.approx(out.energy_mah)


def test_cycle_gives_up_after_max_retries():
    node = WorkerNode(_config(distance_m=5.0, max_tx_retries=2), channel_preset("urban"), np.random.default_rng(2))
    out = run_node_cycle(node, LoraAirParams(), 0.0, NOON, collides=lambda s, e: True)
    assert len(out.attempts) == 2 and out.status == "lost_after_retries"


def test_config_validation():
    with pytest.raises(ValueError):
        NodeConfig("n", max_tx_retries=0)
    with pytest.raises(ValueError):
        NodeConfig("n", sample_interval_s=5.0)
    with pytest.raises(ValueError):
        EnergyProfile(battery_capacity_mah=0)
