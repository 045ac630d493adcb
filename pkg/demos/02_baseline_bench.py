"""Baseline bench test: three nodes a few metres from the master node.

Runs the full pipeline (node, LoRa, gateway, MQTT broker, cloud) for 90
simulated minutes and summarises delivery, RSSI and end-to-end latency.
"""

# %%
from hivemon import load_config, run

cfg = load_config("baseline")
report = run(cfg)
totals = report.data["totals"]
print(f"{cfg.name}: {totals['delivered']}/{totals['sent']} delivered, {totals['stored']} stored")

# %%
# Per-node signal strength.  Each node keeps its own random stream, so adding
# a node never perturbs the others.
for node_id, node in report.data["nodes"].items():
    rssi = node["rssi_dbm"]
    print(f"  {node_id}: {node['distance_m']:.0f} m  RSSI {rssi['mean']:.1f} +/- {rssi['std']:.1f} dBm  "
          f"energy {node['energy_mah']:.1f} mAh")

# %%
# Latency from sampling to display, and where it goes.
lat = report.data["latency_s"]
print(f"latency mean {lat['mean']:.2f} s, std {lat['std']:.2f} s, max {lat['max']:.2f} s")
for part, seconds in sorted(lat["components_mean"].items(), key=lambda kv: -kv[1]):
    print(f"  {part:20s} {seconds:6.3f} s")

# %%
# Same seed, same bytes.
assert run(cfg).to_json() == report.to_json()
print("rerun is byte-identical")
