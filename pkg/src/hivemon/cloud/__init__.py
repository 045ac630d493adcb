from .alerts import AlertEngine, AlertEvent, Classification, Parameter, classify, debounce_step
from .auth import TOKEN_LIFETIME_S, AuthError, issue_token, verify_token
from .notify import DispatchRecord, MemorySink, WebhookSink, notify
from .retention import ArchiveError, archive_path, read_archive, retention_sweep
from .service import CloudService, PortInUse, infer_placement, make_http_server
from .store import Store, StoredReading

__all__ = [
    "AlertEngine", "AlertEvent", "ArchiveError", "AuthError", "Classification", "CloudService",
    "DispatchRecord", "MemorySink", "Parameter", "PortInUse", "Store", "StoredReading",
    "TOKEN_LIFETIME_S", "WebhookSink", "archive_path", "classify", "debounce_step", "infer_placement",
    "issue_token", "make_http_server", "notify", "read_archive", "retention_sweep", "verify_token",
]
