"""Battery life of a node on a 1100 mAh cell with a 3-minute duty cycle."""

# %%
from dataclasses import replace

from hivemon.nodesim import EnergyProfile, average_current_ma, battery_life_hours, simulate_depletion

profile = EnergyProfile()
for label, sleep in (("light sleep", None), ("deep sleep", profile.deep_sleep_current_ma)):
    avg = average_current_ma(profile, 180.0, sleep)
    closed = battery_life_hours(profile, 180.0, sleep)
    stepped = simulate_depletion(profile, 180.0, sleep)
    print(f"{label:11s}: {avg:6.2f} mA average, {closed:6.1f} h closed form, {stepped:6.1f} h stepped")

# %%
# Stretching the interval is the cheapest lever while the sleep current dominates.
for interval in (60, 180, 600, 1800):
    print(f"every {interval:4d} s: {battery_life_hours(profile, interval, profile.deep_sleep_current_ma) / 24:5.1f} days")

# %%
bigger = replace(profile, battery_capacity_mah=3400.0)
print(f"3400 mAh, deep sleep: {battery_life_hours(bigger, 180.0, bigger.deep_sleep_current_ma) / 24:.1f} days")
