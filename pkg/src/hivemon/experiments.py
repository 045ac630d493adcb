"""Stand-alone experiments: range sweep, collision study and battery report."""

from __future__ import annotations

import math

import numpy as np

from .nodesim import average_current_ma, battery_life_hours, simulate_depletion
from .rfsim import (
    collision_probability_exact,
    collision_probability_first_order,
    monte_carlo_collision_loss,
    packet_delivery_ratio,
)
from .scenario import BatteryConfig, CollisionConfig, SweepConfig

SWEEP_COLUMNS = ("distance_m", "mean_rssi_dbm", "pdr")
# column names are a fixed output contract; paper_Pc is the first-order N*t/T estimate
COLLISION_COLUMNS = ("N", "sim_loss", "sim_se", "paper_Pc", "exact_Pc")


def sweep_distances(min_m: float, max_m: float, step_m: float) -> list[float]:
    """Grid from ``min_m`` in ``step_m`` increments, never past ``max_m``."""
    count = int(math.floor((max_m - min_m) / step_m + 1e-9)) + 1
    return [min_m + i * step_m for i in range(count)]


def range_sweep(cfg: SweepConfig) -> list[dict]:
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for d in sweep_distances(cfg.min_m, cfg.max_m, cfg.step_m):
        pdr, rssi = packet_delivery_ratio(d, cfg.channel, rng, cfg.packets)
        rows.append({"distance_m": d, "mean_rssi_dbm": rssi, "pdr": pdr})
    return rows


def collision_study(cfg: CollisionConfig) -> list[dict]:
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(cfg.n_list))
    rows = []
    for n, seed in zip(cfg.n_list, seeds):
        loss, se = monte_carlo_collision_loss(n, cfg.airtime_s, cfg.interval_s, cfg.trials, np.random.default_rng(seed))
        rows.append({
            "N": n,
            "sim_loss": loss,
            "sim_se": se,
            "paper_Pc": collision_probability_first_order(n, cfg.airtime_s, cfg.interval_s),
            "exact_Pc": collision_probability_exact(n, cfg.airtime_s, cfg.interval_s),
        })
    return rows


def battery_report(cfg: BatteryConfig) -> dict:
    current = average_current_ma(cfg.energy, cfg.interval_s, cfg.sleep_current_ma)
    closed = battery_life_hours(cfg.energy, cfg.interval_s, cfg.sleep_current_ma)
    simulated = simulate_depletion(cfg.energy, cfg.interval_s, cfg.sleep_current_ma)
    return {
        "average_current_ma": current,
        "closed_form_life_h": closed,
        "simulated_life_h": simulated,
        "relative_difference": abs(simulated - closed) / closed,
    }
