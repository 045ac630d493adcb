"""Application tier: ingest, alerting, notification and the REST surface."""

from __future__ import annotations

import errno
import json
import threading
import time
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from ..model import EnrichedReading, PayloadError, Placement, Thresholds, Tier, decode_enriched
from .alerts import AlertEvent, AlertEngine, Parameter, classify
from .auth import AuthError, bearer, issue_token, verify_token
from .notify import DispatchRecord, MemorySink, WebhookSink, notify
from .retention import retention_sweep
from .store import Store, StoredReading

INT64_MAX = 2**63 - 1


class PortInUse(OSError):
    pass


def infer_placement(node_id: str) -> Placement:
    """Fallback when a node was never registered: an ``int`` token in its id marks it internal."""
    return Placement.INTERNAL if "int" in node_id.lower().replace("_", "-").split("-") else Placement.EXTERNAL


class CloudService:
    def __init__(
        self,
        secret: bytes,
        db_path: str = ":memory:",
        thresholds: Thresholds = Thresholds(),
        external_thresholds: Thresholds | None = None,
        utc_offset_hours: float = 0.0,
        dispatch_delay_s: float = 0.0,
        clock=time.time,
    ):
        if not secret:
            raise ValueError("an auth secret is required")
        self.secret = secret
        self.store = Store(db_path)
        self.thresholds = {
            Placement.INTERNAL: thresholds,
            Placement.EXTERNAL: external_thresholds or thresholds,
        }
        if self.thresholds[Placement.INTERNAL].debounce_samples != self.thresholds[Placement.EXTERNAL].debounce_samples:
            raise ValueError("both threshold profiles must share debounce_samples")
        self.utc_offset_s = utc_offset_hours * 3600.0
        self.dispatch_delay_s = dispatch_delay_s
        self.clock = clock
        self.alerts = AlertEngine(thresholds.debounce_samples)
        self.sinks: list = []
        self.dispatches: list[DispatchRecord] = []
        self.dropped_notifications = 0
        self.rejections: Counter[str] = Counter()
        self.duplicates = 0
        self._placements: dict[str, Placement] = {}
        self._open_ids: dict[tuple[str, Parameter], int] = {}
        self._ingest_lock = threading.Lock()

    # -- configuration ------------------------------------------------------

    def register_node(self, node_id: str, placement: Placement) -> None:
        self._placements[node_id] = placement
        self.store.set_placement(node_id, placement.value)

    def placement_of(self, node_id: str) -> Placement:
        return self._placements.get(node_id) or infer_placement(node_id)

    def add_sink(self, sink) -> None:
        self.sinks.append(sink)

    def issue_token(self, subject: str, issued_at: float | None = None) -> str:
        return issue_token(subject, self.secret, int(self.clock() if issued_at is None else issued_at))

    # -- ingest and alerting ----------------------------------------------------

    def local_hour(self, timestamp_utc: int) -> float:
        return ((timestamp_utc + self.utc_offset_s) % 86_400) / 3600.0

    def ingest(self, payload: bytes, now: float | None = None, sample_time: float | None = None) -> StoredReading | None:
        """Persist one enriched message; ``None`` for duplicates and rejects.

        New rows are classified and fed to the alert engine; any alert it
        emits is stored and dispatched at ``now + dispatch_delay_s``.
        """
        try:
            enriched = decode_enriched(payload)
        except PayloadError as exc:
            self.rejections[exc.cause] += 1
            return None
        with self._ingest_lock:
            stored = self.store.insert_reading(enriched)
            if stored is None:
                self.duplicates += 1
                return None
            now = self.clock() if now is None else now
            self._evaluate(enriched, now, sample_time)
        return stored

    def _evaluate(self, e: EnrichedReading, now: float, sample_time: float | None) -> None:
        placement = self.placement_of(e.node_id)
        tiers = classify(e.reading, self.thresholds[placement], self.local_hour(e.timestamp_utc), placement)
        for param, c in tiers.items():
            key = (e.node_id, param)
            before = len(self.alerts.escalations)
            event = self.alerts.step(e.node_id, param, c.tier, e.timestamp_utc, c.value, c.bound)
            if c.tier is Tier.NORMAL:
                self._open_ids.pop(key, None)
            if len(self.alerts.escalations) > before and key in self._open_ids:
                self.store.escalate_alert(self._open_ids[key], c.tier, c.value, c.bound)
            if event is not None:
                alert_id = self.store.insert_alert(event)
                self._open_ids[key] = alert_id
                self._dispatch(AlertEvent(**{**event.__dict__, "alert_id": alert_id}), now, sample_time)

    def _dispatch(self, alert: AlertEvent, now: float, sample_time: float | None) -> None:
        records = notify(alert, self.sinks, now + self.dispatch_delay_s, sample_time)
        self.dispatches.extend(records)
        self.dropped_notifications += sum(not r.ok for r in records)

    def acknowledge(self, alert_id: int) -> bool:
        for a in self.store.alerts():
            if a.alert_id == alert_id:
                self.store.acknowledge_alert(alert_id)
                self.alerts.acknowledge(a.node_id, a.parameter)
                self._open_ids.pop((a.node_id, a.parameter), None)
                return True
        return False

    def sweep(self, archive_dir, now: float | None = None, retention_days: int = 90) -> int:
        return retention_sweep(self.store, self.clock() if now is None else now, archive_dir, retention_days)

    # -- REST -------------------------------------------------------------------

    def handle_request(self, method: str, target: str, headers: dict, body: bytes = b"") -> tuple[int, object]:
        """Route one HTTP request; returns (status, JSON-serializable body)."""
        token = bearer(headers)
        if token is None:
            return 401, {"error": "missing bearer token"}
        try:
            verify_token(token, self.secret, self.clock())
        except AuthError as exc:
            return 401, {"error": str(exc)}

        url = urlsplit(target)
        parts = [p for p in url.path.split("/") if p]
        if len(parts) < 2 or parts[0] != "api":
            return 404, {"error": "not found"}
        route, args = parts[1], parts[2:]
        query = parse_qs(url.query)

        if route == "nodes" and not args:
            return self._only(method, "GET") or (200, self.store.nodes())
        if route == "data" and len(args) == 1:
            return self._only(method, "GET") or self._get_data(args[0], query)
        if route == "latest" and len(args) == 1:
            if bad := self._only(method, "GET"):
                return bad
            latest = self.store.latest(args[0]) if self.store.node(args[0]) else None
            return (200, latest.to_dict()) if latest else (404, {"error": f"no readings for {args[0]}"})
        if route == "alerts":
            if not args:
                return self._only(method, "GET") or (200, [a.to_dict() for a in self.store.alerts()])
            if args == ["subscribe"]:
                return self._only(method, "POST") or self._subscribe(body)
            if len(args) == 2 and args[1] == "ack" and args[0].isdigit():
                if bad := self._only(method, "POST"):
                    return bad
                return (200, {"acknowledged": int(args[0])}) if self.acknowledge(int(args[0])) else (404, {"error": "unknown alert"})
        return 404, {"error": "not found"}

    @staticmethod
    def _only(method: str, allowed: str):
        return None if method == allowed else (405, {"error": f"use {allowed}"})

    def _get_data(self, node_id: str, query: dict) -> tuple[int, object]:
        if self.store.node(node_id) is None:
            return 404, {"error": f"unknown node {node_id}"}
        try:
            start = int(query.get("start", ["0"])[-1])
            end = int(query.get("end", [str(INT64_MAX)])[-1])
        except ValueError:
            return 400, {"error": "start and end must be integer epoch seconds"}
        if start > end:
            return 400, {"error": "start must not exceed end"}
        return 200, [r.to_dict() for r in self.store.readings(node_id, start, end)]

    def _subscribe(self, body: bytes) -> tuple[int, object]:
        try:
            reg = json.loads(body or b"{}")
        except ValueError:
            return 400, {"error": "body must be JSON"}
        if not isinstance(reg, dict):
            return 400, {"error": "body must be a JSON object"}
        if isinstance(reg.get("url"), str) and reg["url"].startswith(("http://", "https://")):
            sink = WebhookSink(reg["url"], name=f"webhook-{len(self.sinks)}")
        elif reg.get("sink") == "memory":
            sink = MemorySink(name=f"memory-{len(self.sinks)}")
        else:
            return 400, {"error": "expected {\"url\": \"http(s)://...\"} or {\"sink\": \"memory\"}"}
        self.add_sink(sink)
        return 201, {"subscription": sink.name}


def _handler_for(service: CloudService):
    class Handler(BaseHTTPRequestHandler):
        def _serve(self) -> None:
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            status, payload = service.handle_request(self.command, self.path, dict(self.headers), body)
            data = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        do_GET = do_POST = do_PUT = do_DELETE = _serve

        def log_message(self, format, *args):  # keep test output quiet
            pass

    return Handler


def make_http_server(service: CloudService, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    try:
        server = ThreadingHTTPServer((host, port), _handler_for(service))
    except OSError as exc:
        if exc.errno == errno.EADDRINUSE:
            raise PortInUse(f"port {port} is already in use") from exc
        raise
    server.daemon_threads = True
    return server
