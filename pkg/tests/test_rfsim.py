import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from hivemon.rfsim import (
    DEFAULT_REF_LOSS_DB,
    RURAL_EXPONENT,
    URBAN_EXPONENT,
    ChannelParams,
    LoraAirParams,
    PayloadTooLarge,
    TransmissionEvent,
    airtime_s,
    channel_preset,
    collision_probability_exact,
    collision_probability_first_order,
    draw_obstruction_loss_db,
    link_budget_dbm,
    monte_carlo_collision_loss,
    packet_delivery_ratio,
    path_loss_db,
    received_power_dbm,
    resolve_collisions,
)


def test_reference_loss_matches_free_space_formula():
    # FSPL(dB) = 20 log10(d_m) + 20 log10(f_Hz) - 147.55
    assert DEFAULT_REF_LOSS_DB == pytest.approx(20 * math.log10(915e6) - 147.55, abs=0.01)
    assert DEFAULT_REF_LOSS_DB == pytest.approx(31.6762, abs=1e-4)


def test_calibrated_exponents_hit_anchors():
    assert path_loss_db(150, channel_preset("urban")) == pytest.approx(120.0, abs=1e-9)
    assert path_loss_db(150, channel_preset("rural")) == pytest.approx(114.0, abs=1e-9)
    assert URBAN_EXPONENT == pytest.approx(4.0588, abs=1e-4)
    assert 2.0 <= RURAL_EXPONENT < URBAN_EXPONENT


@settings(max_examples=200)
@given(st.floats(0, 5000), st.floats(0, 5000), st.floats(2.0, 6.0))
def test_path_loss_monotone_and_clamped(a, b, n):
    params = ChannelParams(path_loss_exponent=n)
    lo, hi = sorted((a, b))
    assert path_loss_db(lo, params) <= path_loss_db(hi, params)
    if hi <= 1.0:
        assert path_loss_db(hi, params) == params.ref_loss_db


def test_path_loss_vectorises():
    d = np.array([0.0, 0.5, 1.0, 10.0, 150.0])
    out = path_loss_db(d, channel_preset("urban"))
    assert out.shape == (5,)
    assert out[0] == out[1] == out[2] == DEFAULT_REF_LOSS_DB


@given(st.floats(-10, 30), st.floats(1, 1000))
def test_received_power_linear_in_tx_power(tx, d):
    base = ChannelParams(tx_power_dbm=tx)
    bumped = ChannelParams(tx_power_dbm=tx + 3.0)
    ev = TransmissionEvent("n", 0.0, 0.1, d, obstructions=1)
    assert received_power_dbm(ev, bumped) - received_power_dbm(ev, base) == pytest.approx(3.0)


def test_received_power_charges_walls_and_shadowing():
    p = channel_preset("urban")
    ev = TransmissionEvent("n", 0.0, 0.1, 30.0, obstructions=2)
    assert received_power_dbm(ev, p) == pytest.approx(link_budget_dbm(30.0, p) - 8.0)
    assert received_power_dbm(ev, p, shadowing_draw=1.5, obstruction_loss_db=7.0) == pytest.approx(
        link_budget_dbm(30.0, p) - 8.5)


def test_wall_loss_range():
    p = channel_preset("urban")
    rng = np.random.default_rng(1)
    draws = [draw_obstruction_loss_db(2, p, rng) for _ in range(2000)]
    assert 6.0 <= min(draws) and max(draws) <= 10.0
    assert draw_obstruction_loss_db(0, p, rng) == 0.0


def test_airtime_reference_frame():
    # SF7/125 kHz/CR4/5, 8-symbol preamble, explicit header, CRC on:
    # Tsym = 1.024 ms, preamble 12.25 Tsym, payload 8 + ceil(1616/28)*5 = 298 symbols
    assert airtime_s(200) == pytest.approx(0.317696, abs=1e-9)
    assert airtime_s(196) == pytest.approx((12.25 + 8 + 57 * 5) * 1.024e-3, abs=1e-9)
    assert airtime_s(200, LoraAirParams(fixed_airtime_override_s=0.25)) == 0.25
    assert airtime_s(10, LoraAirParams(spreading_factor=12, low_data_rate_optimize=True)) > airtime_s(10)


@pytest.mark.parametrize("size", [0, 256, 1000])
def test_airtime_rejects_oversize(size):
    with pytest.raises(PayloadTooLarge):
        airtime_s(size)


def test_pdr_half_at_sensitivity_crossing():
    p = channel_preset("urban", shadowing_sigma_db=4.0)
    crossing = optimize.brentq(lambda d: link_budget_dbm(d, p) - p.sensitivity_dbm, 1.0, 1000.0)
    pdr, rssi = packet_delivery_ratio(crossing, p, np.random.default_rng(3), 20_000)
    assert pdr == pytest.approx(0.5, abs=0.02)
    assert rssi == pytest.approx(p.sensitivity_dbm, abs=0.1)


def _pairwise_lost(events):
    lost = set()
    for i, a in enumerate(events):
        for j, b in enumerate(events):
            if i != j and a.start_time < b.end_time and b.start_time < a.end_time:
                lost.add(i)
    return lost


@settings(max_examples=300)
@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0.01, 2)), max_size=12))
def test_resolve_collisions_matches_pairwise(spans):
    events = [TransmissionEvent(str(i), s, a) for i, (s, a) in enumerate(spans)]
    assert resolve_collisions(events) == _pairwise_lost(events)


def test_touching_intervals_do_not_collide():
    events = [TransmissionEvent("a", 0.0, 1.0), TransmissionEvent("b", 1.0, 1.0)]
    assert resolve_collisions(events) == set()


def test_collision_formulas():
    t, T = 0.317696, 180.0
    assert collision_probability_exact(1, t, T) == 0.0
    assert monte_carlo_collision_loss(1, t, T, 10, np.random.default_rng(0)) == (0.0, 0.0)
    assert collision_probability_first_order(10, t, T) == pytest.approx(10 * t / T)
    assert collision_probability_exact(2, t, T) == pytest.approx(2 * t / T)
    with pytest.raises(ValueError):
        collision_probability_first_order(0, t, T)


def test_monte_carlo_tracks_exact_loss():
    t, T = 0.317696, 180.0
    loss, se = monte_carlo_collision_loss(20, t, T, 3000, np.random.default_rng(11))
    assert abs(loss - collision_probability_exact(20, t, T)) <= 3 * se + 1e-3


def test_channel_validation():
    with pytest.raises(ValueError):
        ChannelParams(path_loss_exponent=1.5)
    with pytest.raises(ValueError):
        ChannelParams(wall_pair_attenuation_db=(5.0, 3.0))
    with pytest.raises(ValueError):
        channel_preset("suburban")
