"""Command-line entry point: ``hivemon <verb> ...``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import signal
import sys
import threading
import time
from pathlib import Path

from .cloud import PortInUse, make_http_server
from .engine import DRAIN_LIMIT_S, ConfigError, Simulation
from .experiments import COLLISION_COLUMNS, SWEEP_COLUMNS, battery_report, collision_study, range_sweep
from .nodesim import EnergyProfile
from .rfsim import CHANNEL_PRESETS
from .scenario import (
    BatteryConfig,
    CollisionConfig,
    ScenarioConfig,
    SweepConfig,
    _channel,
    load_config,
)

SECRET_ENV = "HIVEMON_SECRET"
EXIT_CONFIG = 2
EXIT_PORT = 3


def _round(x):
    return round(x, 6) if isinstance(x, float) else x


def _table_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _round(r[k]) for k in columns})
    return buf.getvalue()


def _table_json(rows: list[dict]) -> str:
    return json.dumps([{k: _round(v) for k, v in r.items()} for r in rows], indent=2) + "\n"


def _emit(text: str, args, filename: str | None) -> None:
    sys.stdout.write(text)
    if args.out_dir and filename:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / filename).write_text(text, encoding="utf-8")


def _with_seed(cfg, args):
    return dataclasses.replace(cfg, seed=args.seed) if args.seed is not None else cfg


def _parse_outage(text: str) -> tuple[float, float]:
    try:
        start, duration = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected START:DURATION in seconds") from None
    if start < 0 or duration <= 0:
        raise argparse.ArgumentTypeError("need START >= 0 and DURATION > 0")
    return start, duration


# -- verbs ----------------------------------------------------------------------------------

def _run_simulation(cfg: ScenarioConfig, args) -> int:
    for start, duration in args.outage or ():
        cfg = cfg.with_outage(start, duration)
    report = Simulation(cfg).run()
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / (cfg.report_path or f"{cfg.name}-report.json")).write_text(report.to_json(), encoding="utf-8")
        (out / (cfg.csv_path or f"{cfg.name}-readings.csv")).write_text(report.to_csv(), encoding="utf-8")
    sys.stdout.write(report.to_csv() if args.format == "csv" else report.to_json())
    return 0


def _run_sweep(cfg: SweepConfig, args) -> int:
    rows = range_sweep(cfg)
    fmt = args.format or "csv"
    _emit(_table_csv(rows, SWEEP_COLUMNS) if fmt == "csv" else _table_json(rows), args, f"{cfg.name}.{fmt}")
    return 0


def _run_collision(cfg: CollisionConfig, args) -> int:
    rows = collision_study(cfg)
    fmt = args.format or "csv"
    _emit(_table_csv(rows, COLLISION_COLUMNS) if fmt == "csv" else _table_json(rows), args, f"{cfg.name}.{fmt}")
    return 0


def _run_battery(cfg: BatteryConfig, args) -> int:
    result = battery_report(cfg)
    fmt = args.format or "json"
    if fmt == "csv":
        text = _table_csv([result], tuple(result))
    else:
        text = json.dumps({k: _round(v) for k, v in result.items()}, indent=2) + "\n"
    _emit(text, args, f"{cfg.name}.{fmt}")
    return 0


def cmd_run(args) -> int:
    cfg = _with_seed(load_config(args.scenario), args)
    if isinstance(cfg, ScenarioConfig):
        return _run_simulation(cfg, args)
    if isinstance(cfg, SweepConfig):
        return _run_sweep(cfg, args)
    if isinstance(cfg, CollisionConfig):
        return _run_collision(cfg, args)
    return _run_battery(cfg, args)


def cmd_range_sweep(args) -> int:
    if args.preset not in CHANNEL_PRESETS:
        raise ConfigError(f"unknown preset {args.preset!r}", "preset")
    overrides = {} if args.sigma is None else {"shadowing_sigma_db": args.sigma}
    cfg = SweepConfig(
        name=f"range-{args.preset}",
        min_m=args.min, max_m=args.max, step_m=args.step, packets=args.packets,
        preset=args.preset, channel=_channel({"preset": args.preset, **overrides}),
        seed=args.seed or 0,
    )
    return _run_sweep(cfg, args)


def cmd_collision_study(args) -> int:
    try:
        n_list = tuple(int(x) for x in args.n.split(","))
    except ValueError:
        raise ConfigError("expected comma-separated integers", "n") from None
    cfg = CollisionConfig(n_list=n_list, interval_s=args.interval, airtime_s=args.airtime,
                          trials=args.trials, seed=args.seed or 0)
    return _run_collision(cfg, args)


def cmd_battery(args) -> int:
    overrides = {
        k: v for k, v in {
            "active_current_ma": args.active_ma,
            "active_duration_s": args.active_s,
            "sleep_current_ma": args.sleep_ma,
            "battery_capacity_mah": args.capacity,
        }.items() if v is not None
    }
    try:
        energy = dataclasses.replace(EnergyProfile(), **overrides)
        cfg = BatteryConfig(energy=energy, interval_s=args.interval, sleep_current_ma=args.deep_sleep_ma)
        return _run_battery(cfg, args)
    except ValueError as exc:
        raise ConfigError(str(exc), "battery") from exc


def serve(cfg: ScenarioConfig, port: int, speed: float, stop: threading.Event, host: str = "127.0.0.1",
          ready=None) -> Simulation:
    """Run the pipeline against an accelerated clock with the REST API live.

    Returns the simulation once ``stop`` is set.  ``ready`` (if given) is
    called with the bound (host, port) and a freshly issued token.
    """
    sim = Simulation(cfg)
    server = make_http_server(sim.cloud, host, port)
    thread = threading.Thread(target=server.serve_forever, name="hivemon-http", daemon=True)
    thread.start()
    try:
        if ready is not None:
            ready(server.server_address[:2], sim.cloud.issue_token("operator"))
        t0 = time.monotonic()
        end = sim.horizon + DRAIN_LIMIT_S
        while not stop.is_set():
            target = min((time.monotonic() - t0) * speed, end)
            sim.run_until(target)
            stop.wait(0.02)
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)
    return sim


def cmd_serve(args) -> int:
    secret = os.environ.get(SECRET_ENV)
    if not secret:
        print(f"error: set {SECRET_ENV} to the API signing secret", file=sys.stderr)
        return EXIT_CONFIG
    cfg = _with_seed(load_config(args.scenario), args)
    if not isinstance(cfg, ScenarioConfig):
        raise ConfigError("serve needs a simulation scenario", "kind")
    cfg = dataclasses.replace(cfg, secret=secret.encode())
    for start, duration in args.outage or ():
        cfg = cfg.with_outage(start, duration)

    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())

    def ready(address, token):
        print(f"serving {cfg.name} on http://{address[0]}:{address[1]} at {args.speed}x", file=sys.stderr)
        print(f"token: {token}", file=sys.stderr, flush=True)

    sim = serve(cfg, args.port, args.speed, stop, args.host, ready)
    report = sim.report()
    print(f"stopped at virtual t={sim.sched.now:.1f}s; stored={report.data['totals']['stored']}", file=sys.stderr)
    return 0


# -- parser ------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hivemon", description="Beehive telemetry pipeline simulator")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out-dir", default=None, help="also write outputs into this directory")
    p.add_argument("--format", choices=("json", "csv"), default=None, help="stdout format")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run a scenario file or bundled scenario")
    r.add_argument("scenario")
    r.add_argument("--outage", type=_parse_outage, action="append", metavar="START:DURATION")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("range-sweep", help="PDR and RSSI against distance")
    s.add_argument("--min", type=float, default=0.0)
    s.add_argument("--max", type=float, default=170.0)
    s.add_argument("--step", type=float, default=10.0)
    s.add_argument("--packets", type=int, default=1000)
    s.add_argument("--preset", default="urban")
    s.add_argument("--sigma", type=float, default=None, help="shadowing sigma override (dB)")
    s.set_defaults(func=cmd_range_sweep)

    c = sub.add_parser("collision-study", help="Monte Carlo collision loss against closed forms")
    c.add_argument("--n", default="2,5,10,20")
    c.add_argument("--interval", type=float, default=180.0)
    c.add_argument("--airtime", type=float, default=1.8)
    c.add_argument("--trials", type=int, default=10_000)
    c.set_defaults(func=cmd_collision_study)

    b = sub.add_parser("battery", help="average current and battery life")
    b.add_argument("--active-ma", type=float)
    b.add_argument("--active-s", type=float)
    b.add_argument("--sleep-ma", type=float)
    b.add_argument("--deep-sleep-ma", type=float, help="use this sleep current instead (deep sleep)")
    b.add_argument("--capacity", type=float)
    b.add_argument("--interval", type=float, default=180.0)
    b.set_defaults(func=cmd_battery)

    v = sub.add_parser("serve", help=f"live pipeline with the REST API (secret from ${SECRET_ENV})")
    v.add_argument("scenario")
    v.add_argument("--port", type=int, default=8080)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--speed", type=float, default=60.0, help="virtual seconds per wall second")
    v.add_argument("--outage", type=_parse_outage, action="append", metavar="START:DURATION")
    v.set_defaults(func=cmd_serve)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PortInUse as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PORT


if __name__ == "__main__":
    sys.exit(main())
