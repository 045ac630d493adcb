import dataclasses

import pytest
from hypothesis import given, strategies as st

from hivemon import ConfigError, EventScheduler, LatencyBudget, Simulation, load_config, run
from hivemon.engine import Injection

BASELINE = load_config("baseline")


def _short(cfg=BASELINE, **changes):
    return dataclasses.replace(cfg, **{"duration_s": 1800, **changes})


@given(st.lists(st.floats(0, 100), max_size=50))
def test_scheduler_orders_by_time_then_insertion(times):
    sched = EventScheduler()
    fired = []
    for i, t in enumerate(times):
        sched.schedule(t, lambda now, i=i: fired.append(i), "e")
    sched.run()
    assert fired == sorted(range(len(times)), key=lambda i: (times[i], i))
    assert sched.processed == len(times) and len(sched) == 0


def test_scheduler_rejects_past_and_honours_until():
    sched = EventScheduler()
    seen = []
    sched.schedule(5.0, lambda now: seen.append(now), "a")
    sched.schedule(10.0, lambda now: seen.append(now), "b")
    sched.run(until=7.0)
    assert seen == [5.0] and sched.peek_time() == 10.0
    with pytest.raises(ValueError):
        sched.schedule(4.0, lambda now: None, "late")


def test_same_seed_same_bytes():
    a, b = run(_short(), seed=3), run(_short(), seed=3)
    assert a.to_json() == b.to_json() and a.to_csv() == b.to_csv()
    assert run(_short(), seed=4).to_json() != a.to_json()


def test_zero_duration_gives_empty_report():
    report = run(_short(duration_s=0))
    assert report.data["totals"]["sent"] == 0 and report.rows == []
    assert report.to_csv().count("\n") == 1


def test_configuration_errors():
    with pytest.raises(ConfigError) as info:
        Simulation(_short(nodes=()))
    assert info.value.path == "nodes"
    with pytest.raises(ConfigError):
        Simulation(_short(nodes=BASELINE.nodes[:1] * 2))
    with pytest.raises(ConfigError):
        LatencyBudget(wifi_mqtt_mean_s=0.1, wifi_mqtt_jitter_s=0.2)


def _accounting(report):
    for node in report.data["nodes"].values():
        parts = node["delivered"] + node["lost_range"] + node["lost_collision"] + node["rejected"] + node["in_flight"]
        assert parts == node["sent"]
        assert node["stored"] <= node["delivered"]


def test_every_message_accounted_and_latency_decomposes():
    sim = Simulation(_short(), seed=7)
    report = sim.run()
    _accounting(report)
    budget = sim.config.latency
    committed = [t for t in sim.traces if t.committed_at is not None]
    assert committed
    for t in committed:
        assert sum(t.components(budget).values()) == pytest.approx(t.latency_s, abs=1e-9)
        assert t.outcome == "stored" and t.status == "delivered"
    assert report.data["totals"]["in_flight"] == 0


def test_short_outage_loses_nothing():
    clean = run(_short(), seed=5).data["totals"]
    report = run(_short().with_outage(600, 90), seed=5)
    totals = report.data["totals"]
    assert totals["stored"] == totals["delivered"] == clean["delivered"]
    assert report.data["gateway"]["cache_overflow"] == 0
    late = [r for r in report.rows if 600 <= r["sample_time_s"] < 690]
    assert late and all(r["outcome"] == "stored" for r in late)
    assert max(r["latency_s"] for r in late) > 30


def test_long_outage_overflows_cache():
    gateway = dataclasses.replace(BASELINE.gateway, cache_capacity=3)
    report = run(_short(gateway=gateway).with_outage(0, 1500), seed=5)
    data = report.data
    assert data["gateway"]["cache_overflow"] > 0
    assert data["totals"]["evicted"] == sum(r["outcome"] == "evicted" for r in report.rows)
    assert data["totals"]["stored"] == data["totals"]["delivered"] - data["totals"]["evicted"]


def test_shared_offset_collides_every_attempt():
    a, b = BASELINE.nodes[:2]
    nodes = (dataclasses.replace(a, start_offset_s=0.0), dataclasses.replace(b, start_offset_s=0.0))
    report = run(_short(nodes=nodes), seed=1)
    for node in report.data["nodes"].values():
        assert node["lost_collision"] == node["sent"] == 10
        assert node["transmissions"] == 3 * node["sent"]


def test_injection_raises_alert():
    inj = Injection(BASELINE.nodes[0].node_id, {"temperature": 38.6}, 0, 400)
    report = run(_short(injections=(inj,)), seed=2)
    alerts = [a for a in report.data["alerts"] if a["parameter"] == "temperature"]
    assert len(alerts) == 1 and alerts[0]["tier"] == "critical" and alerts[0]["dispatched"]
    assert 0 < alerts[0]["dispatch_latency_s"] < 2.0
