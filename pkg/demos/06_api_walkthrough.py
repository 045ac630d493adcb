"""REST walkthrough: run the pipeline live and query it over HTTP.

Starts an accelerated simulation of the baseline scenario with the API on a
free port, then issues the same calls a dashboard would make.
"""

# %%
import json
import threading
import time
import urllib.request

from hivemon import load_config
from hivemon.cli import serve

stop = threading.Event()
ready = threading.Event()
info = {}


def on_ready(address, token):
    info.update(host=address[0], port=address[1], token=token)
    ready.set()


worker = threading.Thread(target=serve, args=(load_config("baseline"), 0, 600.0, stop), kwargs={"ready": on_ready})
worker.start()
ready.wait(10)
time.sleep(2.0)  # about 20 simulated minutes


def get(path):
    req = urllib.request.Request(f"http://{info['host']}:{info['port']}{path}",
                                 headers={"Authorization": f"Bearer {info['token']}"})
    with urllib.request.urlopen(req, timeout=5) as resp:
        return json.loads(resp.read())


# %%
nodes = get("/api/nodes")
print("nodes:", [n["node_id"] for n in nodes])
latest = get(f"/api/latest/{nodes[0]['node_id']}")
print("latest:", {k: latest[k] for k in ("node_id", "temperature", "humidity", "timestamp_utc", "rssi_dbm")})
window = get(f"/api/data/{nodes[0]['node_id']}?start={latest['timestamp_utc'] - 600}&end={latest['timestamp_utc']}")
print(f"last 10 minutes: {len(window)} readings")

# %%
# Without a token the API refuses politely.
try:
    urllib.request.urlopen(f"http://{info['host']}:{info['port']}/api/nodes", timeout=5)
except urllib.error.HTTPError as exc:
    print("unauthenticated request:", exc.code)

stop.set()
worker.join()
