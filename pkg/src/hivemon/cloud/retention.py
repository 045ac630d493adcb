"""Move aged readings from the primary store into per-node, per-day gzip archives."""

from __future__ import annotations

import datetime as dt
import gzip
import json
import os
from collections import defaultdict
from pathlib import Path

from .store import Store, StoredReading

DAY_S = 86_400


class ArchiveError(OSError):
    pass


def archive_path(root: Path, node_id: str, day: dt.date) -> Path:
    return Path(root) / node_id / f"{day.isoformat()}.json.gz"


def read_archive(path: Path) -> list[dict]:
    with gzip.open(path, "rt", encoding="utf-8") as fh:
        return json.load(fh)


def _utc_day(ts: int) -> dt.date:
    return dt.datetime.fromtimestamp(ts, tz=dt.timezone.utc).date()


def retention_sweep(store: Store, now: float, archive_dir: str | os.PathLike, retention_days: int = 90) -> int:
    """Archive and delete readings strictly older than ``retention_days``.

    All archive files are written to temporary names first; only when every
    write succeeded are they moved into place and the source rows deleted.
    A failure leaves the store untouched and raises :class:`ArchiveError`.
    Alerts are never touched.
    """
    cutoff = int(now) - retention_days * DAY_S
    rows = store.readings_before(cutoff)
    if not rows:
        return 0
    groups: dict[tuple[str, dt.date], list[StoredReading]] = defaultdict(list)
    for row in rows:
        groups[(row.node_id, _utc_day(row.timestamp_utc))].append(row)

    staged: list[tuple[Path, Path]] = []
    try:
        for (node_id, day), members in sorted(groups.items()):
            final = archive_path(Path(archive_dir), node_id, day)
            final.parent.mkdir(parents=True, exist_ok=True)
            records = {r["timestamp_utc"]: r for r in (read_archive(final) if final.exists() else [])}
            records.update({m.timestamp_utc: m.to_dict() for m in members})
            tmp = final.with_name(final.name + ".tmp")
            with gzip.open(tmp, "wt", encoding="utf-8") as fh:
                json.dump([records[k] for k in sorted(records)], fh, separators=(",", ":"))
            staged.append((tmp, final))
    except OSError as exc:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise ArchiveError(f"archive write failed, no rows removed: {exc}") from exc

    for tmp, final in staged:
        os.replace(tmp, final)
    return store.delete_readings(r.row_id for r in rows)
