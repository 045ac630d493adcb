"""Declarative scenario files (TOML, ``schema_version = 1``).

A file declares its ``kind``:

* ``simulation`` (default): a full pipeline run, see :class:`ScenarioConfig`.
* ``range-sweep``: PDR and mean RSSI against distance.
* ``collision-study``: Monte Carlo collision loss against the closed forms.
* ``battery``: duty-cycle energy model and event-driven depletion.

Unknown keys are rejected and every error names the offending field path.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .engine import ConfigError, Injection, LatencyBudget, Outage
from .cloud.service import infer_placement
from .gateway import GatewayConfig
from .model import NodeRole, Placement, SensorReading, Thresholds
from .nodesim import EnergyProfile, NodeConfig, SensorModelParams
from .rfsim import CHANNEL_PRESETS, ChannelParams, LoraAirParams, channel_preset

SCHEMA_VERSION = 1
KINDS = ("simulation", "range-sweep", "collision-study", "battery")
DEFAULT_SECRET = b"hivemon-simulation"

__all__ = [
    "BatteryConfig", "CollisionConfig", "ConfigError", "KINDS", "ScenarioConfig", "SweepConfig",
    "bundled_scenarios", "load_config", "parse_config",
]


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    duration_s: float
    nodes: tuple[NodeConfig, ...]
    seed: int = 0
    start_epoch: int = 1_753_984_800  # 2025-07-31 18:00 UTC
    utc_offset_hours: float = 0.0
    channel: ChannelParams = ChannelParams()
    air: LoraAirParams = LoraAirParams()
    gateway: GatewayConfig = GatewayConfig()
    ntp_offset_s: float = 0.0
    ntp_jitter_s: float = 0.0
    broker_resend_timeout_s: float = 10.0
    latency: LatencyBudget = LatencyBudget()
    thresholds: Thresholds = Thresholds()
    external_thresholds: Thresholds | None = None
    injections: tuple[Injection, ...] = ()
    outages: tuple[Outage, ...] = ()
    report_path: str | None = None
    csv_path: str | None = None
    notes: tuple[str, ...] = ()
    secret: bytes = DEFAULT_SECRET

    def with_outage(self, start_s: float, duration_s: float) -> "ScenarioConfig":
        return dataclasses.replace(self, outages=self.outages + (Outage(start_s, duration_s),))


@dataclass(frozen=True)
class SweepConfig:
    name: str = "range-sweep"
    min_m: float = 0.0
    max_m: float = 170.0
    step_m: float = 10.0
    packets: int = 1000
    preset: str = "urban"
    channel: ChannelParams = field(default_factory=ChannelParams)
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.min_m < self.max_m:
            raise ConfigError("min_m must be below max_m", "sweep.min_m")
        if self.step_m <= 0:
            raise ConfigError("must be > 0", "sweep.step_m")
        if self.packets < 1:
            raise ConfigError("must be >= 1", "sweep.packets")
        if self.min_m < 0:
            raise ConfigError("must be >= 0", "sweep.min_m")


@dataclass(frozen=True)
class CollisionConfig:
    name: str = "collision-study"
    n_list: tuple[int, ...] = (2, 5, 10, 20)
    interval_s: float = 180.0
    airtime_s: float = 1.8
    trials: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trials < 1000:
            raise ConfigError("at least 1000 trials are required", "study.trials")
        if not self.n_list or min(self.n_list) < 1:
            raise ConfigError("node counts must be >= 1", "study.n_list")
        if self.airtime_s <= 0 or self.interval_s <= 0:
            raise ConfigError("airtime_s and interval_s must be positive", "study")


@dataclass(frozen=True)
class BatteryConfig:
    name: str = "battery"
    energy: EnergyProfile = EnergyProfile()
    interval_s: float = 180.0
    sleep_current_ma: float | None = None
    seed: int = 0


# -- generic table -> dataclass conversion ----------------------------------------------

def _check_keys(table: dict, allowed, path: str) -> None:
    for key in table:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", where)


def _coerce(value, annotation, default, path: str):
    """Light type check against the field's annotation and default."""
    hint = annotation if not isinstance(annotation, str) else None
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType) and type(None) in typing.get_args(hint):
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
        origin = typing.get_origin(hint)
    expects_tuple = isinstance(default, tuple) or hint is tuple or origin is tuple
    if expects_tuple:
        if not isinstance(value, list):
            raise ConfigError("expected an array", path)
        return tuple(value)
    if isinstance(default, bool) or hint is bool:
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", path)
        return value
    if isinstance(default, (int, float)) or hint in (int, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("expected a number", path)
        if (isinstance(default, int) and not isinstance(default, bool) and hint is not float) or hint is int:
            if isinstance(value, float) and not value.is_integer():
                raise ConfigError("expected an integer", path)
            return int(value)
        return float(value)
    if isinstance(default, str) or hint is str:
        if not isinstance(value, str):
            raise ConfigError("expected a string", path)
    return value


def _build(cls, table: dict, path: str, base=None, skip=()):
    if not isinstance(table, dict):
        raise ConfigError("expected a table", path)
    specs = {f.name: f for f in fields(cls) if f.name not in skip}
    _check_keys(table, specs, path)
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for key, value in table.items():
        f = specs[key]
        default = getattr(base, key) if base is not None else (
            f.default if f.default is not dataclasses.MISSING else None
        )
        kwargs[key] = _coerce(value, hints.get(key), default, f"{path}.{key}" if path else key)
    try:
        return dataclasses.replace(base, **kwargs) if base is not None else cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path or cls.__name__) from exc


# -- sections -------------------------------------------------------------------------------

def _channel(table: dict | None, path: str = "channel") -> ChannelParams:
    table = dict(table or {})
    preset = table.pop("preset", "urban")
    if preset not in CHANNEL_PRESETS:
        raise ConfigError(f"unknown preset {preset!r} (choose from {', '.join(CHANNEL_PRESETS)})", f"{path}.preset")
    return _build(ChannelParams, table, path, base=channel_preset(preset))


_NODE_KEYS = {
    "node_id", "placement", "obstructions", "position", "distance_m", "gps_jitter_m", "sample_interval_s",
    "max_tx_retries", "start_offset_s", "clock_skew_s", "sensor", "energy",
}


def _node(table: dict, path: str, defaults: dict) -> NodeConfig:
    if not isinstance(table, dict):
        raise ConfigError("expected a table", path)
    merged = {**defaults, **table}
    _check_keys(merged, _NODE_KEYS, path)
    if "node_id" not in merged:
        raise ConfigError("missing node_id", path)
    try:
        # same fallback the cloud applies to unregistered nodes
        placement = Placement(merged.pop("placement", infer_placement(str(merged["node_id"])).value))
    except ValueError:
        raise ConfigError("placement must be 'internal' or 'external'", f"{path}.placement") from None
    obstructions = merged.pop("obstructions", 1 if placement is Placement.INTERNAL else 0)
    try:
        role = NodeRole(placement, obstructions)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), f"{path}.obstructions") from exc
    sensor = _build(SensorModelParams, merged.pop("sensor", {}), f"{path}.sensor")
    energy = _build(EnergyProfile, merged.pop("energy", {}), f"{path}.energy")
    node_id = merged["node_id"]
    try:
        SensorReading(node_id, 0.0, 0.0, 0, 0.0, 0.0, 0.0, 0)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), f"{path}.node_id") from exc
    base = NodeConfig(node_id=node_id, role=role, sensor_model=sensor, energy=energy)
    merged.pop("node_id")
    return _build(NodeConfig, merged, path, base=base)


def _thresholds(table: dict | None, path: str) -> Thresholds:
    return _build(Thresholds, table or {}, path)


_SIM_KEYS = {
    "schema_version", "kind", "name", "duration_s", "seed", "start_epoch", "utc_offset_hours", "notes",
    "channel", "air", "gateway", "broker", "latency", "thresholds", "thresholds_external", "node_defaults",
    "nodes", "injections", "outages", "output",
}


def _simulation(doc: dict) -> ScenarioConfig:
    _check_keys(doc, _SIM_KEYS, "")
    for key in ("name", "duration_s"):
        if key not in doc:
            raise ConfigError("required", key)
    nodes_raw = doc.get("nodes", [])
    if not isinstance(nodes_raw, list) or not nodes_raw:
        raise ConfigError("scenario needs at least one [[nodes]] entry", "nodes")
    defaults = doc.get("node_defaults", {})
    if not isinstance(defaults, dict):
        raise ConfigError("expected a table", "node_defaults")
    nodes = tuple(_node(n, f"nodes[{i}]", defaults) for i, n in enumerate(nodes_raw))
    ids = [n.node_id for n in nodes]
    if len(set(ids)) != len(ids):
        raise ConfigError("node ids must be unique", "nodes")

    gateway_table = dict(doc.get("gateway", {}))
    ntp_offset = gateway_table.pop("ntp_offset_s", 0.0)
    ntp_jitter = gateway_table.pop("ntp_jitter_s", 0.0)
    broker = doc.get("broker", {})
    _check_keys(broker, {"resend_timeout_s"}, "broker")

    injections = []
    for i, inj in enumerate(doc.get("injections", [])):
        p = f"injections[{i}]"
        _check_keys(inj, {"node_id", "from_s", "to_s", "values"}, p)
        if inj.get("node_id") not in ids:
            raise ConfigError(f"unknown node {inj.get('node_id')!r}", f"{p}.node_id")
        values = inj.get("values", {})
        if not isinstance(values, dict) or not values:
            raise ConfigError("expected a non-empty table of reading fields", f"{p}.values")
        _check_keys(values, {f.name for f in fields(SensorReading)} - {"node_id"}, f"{p}.values")
        injections.append(Injection(inj["node_id"], dict(values), float(inj.get("from_s", 0.0)),
                                    float(inj.get("to_s", float("inf")))))
    outages = []
    for i, o in enumerate(doc.get("outages", [])):
        p = f"outages[{i}]"
        _check_keys(o, {"start_s", "duration_s"}, p)
        if o.get("duration_s", 0) <= 0 or o.get("start_s", -1) < 0:
            raise ConfigError("need start_s >= 0 and duration_s > 0", p)
        outages.append(Outage(float(o["start_s"]), float(o["duration_s"])))
    output = doc.get("output", {})
    _check_keys(output, {"report", "csv"}, "output")

    duration = doc["duration_s"]
    if isinstance(duration, bool) or not isinstance(duration, (int, float)) or duration < 0:
        raise ConfigError("expected a number >= 0", "duration_s")
    try:
        return ScenarioConfig(
            name=str(doc["name"]),
            duration_s=float(duration),
            nodes=nodes,
            seed=_coerce(doc.get("seed", 0), int, 0, "seed"),
            start_epoch=_coerce(doc.get("start_epoch", ScenarioConfig.start_epoch), int, 0, "start_epoch"),
            utc_offset_hours=_coerce(doc.get("utc_offset_hours", 0.0), float, 0.0, "utc_offset_hours"),
            channel=_channel(doc.get("channel")),
            air=_build(LoraAirParams, doc.get("air", {}), "air"),
            gateway=_build(GatewayConfig, gateway_table, "gateway"),
            ntp_offset_s=_coerce(ntp_offset, float, 0.0, "gateway.ntp_offset_s"),
            ntp_jitter_s=_coerce(ntp_jitter, float, 0.0, "gateway.ntp_jitter_s"),
            broker_resend_timeout_s=_coerce(broker.get("resend_timeout_s", 10.0), float, 0.0,
                                            "broker.resend_timeout_s"),
            latency=_build(LatencyBudget, doc.get("latency", {}), "latency"),
            thresholds=_thresholds(doc.get("thresholds"), "thresholds"),
            external_thresholds=(
                _thresholds(doc["thresholds_external"], "thresholds_external")
                if "thresholds_external" in doc else None
            ),
            injections=tuple(injections),
            outages=tuple(outages),
            report_path=output.get("report"),
            csv_path=output.get("csv"),
            notes=tuple(_coerce(doc.get("notes", []), tuple, (), "notes")),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _sweep(doc: dict) -> SweepConfig:
    _check_keys(doc, {"schema_version", "kind", "name", "seed", "sweep", "channel"}, "")
    sweep = dict(doc.get("sweep", {}))
    _check_keys(sweep, {"min_m", "max_m", "step_m", "packets", "preset"}, "sweep")
    preset = sweep.get("preset", "urban")
    channel = _channel({"preset": preset, **doc.get("channel", {})})
    base = SweepConfig(name=doc.get("name", "range-sweep"), seed=_coerce(doc.get("seed", 0), int, 0, "seed"),
                       preset=preset, channel=channel)
    return _build(SweepConfig, sweep, "sweep", base=base)


def _collision(doc: dict) -> CollisionConfig:
    _check_keys(doc, {"schema_version", "kind", "name", "seed", "study"}, "")
    base = CollisionConfig(name=doc.get("name", "collision-study"), seed=_coerce(doc.get("seed", 0), int, 0, "seed"))
    return _build(CollisionConfig, doc.get("study", {}), "study", base=base)


def _battery(doc: dict) -> BatteryConfig:
    _check_keys(doc, {"schema_version", "kind", "name", "seed", "energy", "interval_s", "sleep_current_ma"}, "")
    energy = _build(EnergyProfile, doc.get("energy", {}), "energy")
    sleep = doc.get("sleep_current_ma")
    return BatteryConfig(
        name=doc.get("name", "battery"),
        energy=energy,
        interval_s=_coerce(doc.get("interval_s", 180.0), float, 0.0, "interval_s"),
        sleep_current_ma=None if sleep is None else _coerce(sleep, float, 0.0, "sleep_current_ma"),
        seed=_coerce(doc.get("seed", 0), int, 0, "seed"),
    )


_PARSERS = {"simulation": _simulation, "range-sweep": _sweep, "collision-study": _collision, "battery": _battery}


def parse_config(doc: dict):
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"expected {SCHEMA_VERSION}, got {version!r}", "schema_version")
    kind = doc.get("kind", "simulation")
    if kind not in _PARSERS:
        raise ConfigError(f"unknown kind {kind!r} (choose from {', '.join(KINDS)})", "kind")
    return _PARSERS[kind](doc)


def parse_text(text: str):
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return parse_config(doc)


def bundled_scenarios() -> list[str]:
    root = resources.files("hivemon") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_config(name_or_path: str | Path):
    """Load a scenario from a file path, or by bundled name (``baseline``, ...)."""
    path = Path(name_or_path)
    if path.is_file():
        return parse_text(path.read_text(encoding="utf-8"))
    name = str(name_or_path)
    if name in bundled_scenarios():
        return parse_text((resources.files("hivemon") / "scenarios" / f"{name}.toml").read_text(encoding="utf-8"))
    raise ConfigError(f"no such scenario file or bundled scenario: {name}")
