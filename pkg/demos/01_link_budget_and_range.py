"""Link budget and range: how far a hive node can sit from the master node.

Run with ``python demos/01_link_budget_and_range.py``.
"""

# %%
# The mean received power is transmit power plus antenna gain minus the
# log-distance path loss.  Both presets are anchored at 150 m.
from hivemon.experiments import range_sweep
from hivemon.rfsim import channel_preset, link_budget_dbm, path_loss_db
from hivemon.scenario import SweepConfig

urban = channel_preset("urban")
rural = channel_preset("rural")
for name, ch in (("urban", urban), ("rural", rural)):
    print(f"{name:5s}  n={ch.path_loss_exponent:.3f}  PL(150 m)={path_loss_db(150, ch):.1f} dB  "
          f"RSSI(150 m)={link_budget_dbm(150, ch):.1f} dBm")

# %%
# Shadowing spreads each packet around the mean; a packet survives when its
# RSSI clears the -100 dBm sensitivity.  Sweeping distance shows where the
# delivery ratio falls off.
for ch, label in ((urban, "urban"), (rural, "rural")):
    rows = range_sweep(SweepConfig(min_m=80, max_m=160, step_m=10, packets=2000, channel=ch, seed=1))
    print(f"\n{label}")
    for r in rows:
        bar = "#" * int(round(r["pdr"] * 40))
        print(f"  {r['distance_m']:5.0f} m  {r['mean_rssi_dbm']:7.1f} dBm  {r['pdr']:5.3f} {bar}")

# %%
# Raising sigma widens the transition band but keeps the 50 % point where the
# mean link budget meets the sensitivity.
wide = channel_preset("urban", shadowing_sigma_db=4.0)
rows = range_sweep(SweepConfig(min_m=100, max_m=170, step_m=10, channel=wide))
print("\nsigma = 4 dB:", " ".join(f"{r['distance_m']:.0f}m:{r['pdr']:.2f}" for r in rows))
