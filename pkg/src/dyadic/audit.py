"""Per-round decision log and the JSONL audit trail of CLI runs."""

from __future__ import annotations

import csv
import getpass
import io
import json
import socket
import threading
from datetime import UTC, datetime
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field

from dyadic.models import AuditConfig

DEFAULT_AUDIT_PATH = Path("./audit_logs/audit.jsonl")


class DecisionEntry(BaseModel):
    round: int = Field(ge=0)
    kind: str
    detail: dict[str, Any] = Field(default_factory=dict)


class DecisionLog:
    """Append-only record of port calls, compiled constraints and samples.

    Entries carry no wall-clock data so identical runs log identical entries.
    """

    def __init__(self, entries: list[DecisionEntry] | None = None) -> None:
        self._entries: list[DecisionEntry] = list(entries or [])
        self._lock = threading.Lock()

    def record(self, round_index: int, kind: str, **detail: Any) -> DecisionEntry:
        entry = DecisionEntry(round=round_index, kind=kind, detail=detail)
        with self._lock:
            self._entries.append(entry)
        return entry

    @property
    def entries(self) -> list[DecisionEntry]:
        with self._lock:
            return list(self._entries)

    def rounds(self) -> list[int]:
        return sorted({e.round for e in self.entries})

    def __len__(self) -> int:
        return len(self.entries)


def _get_user() -> str:
    """Return the current username, or 'unknown' on failure."""
    try:
        return getpass.getuser()
    except Exception:
        return "unknown"


def _get_hostname() -> str:
    try:
        return socket.gethostname()
    except Exception:
        return "unknown"


def record_run(
    action: str,
    transcript: str,
    audit: AuditConfig,
    seed: int | None = None,
    rounds: int | None = None,
) -> Path | None:
    """Append an audit entry for a CLI action when auditing is enabled.

    Returns the audit file written to, or None when auditing is off.
    """
    if not audit.enabled:
        return None

    output_dir = Path(audit.output)
    output_dir.mkdir(parents=True, exist_ok=True)

    entry = {
        "timestamp": datetime.now(UTC).isoformat(),
        "action": action,
        "transcript": transcript,
        "seed": seed,
        "rounds": rounds,
        "user": _get_user(),
        "hostname": _get_hostname(),
    }

    audit_file = output_dir / "audit.jsonl"
    with open(audit_file, "a") as f:
        f.write(json.dumps(entry) + "\n")
    return audit_file


def read_audit_log(audit_path: Path | None = None) -> list[dict[str, Any]]:
    """Read all entries from a JSONL audit log file; a missing file yields no entries."""
    if audit_path is None:
        audit_path = DEFAULT_AUDIT_PATH

    if not audit_path.is_file():
        return []

    entries: list[dict[str, Any]] = []
    with open(audit_path) as f:
        for line in f:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries


def decision_rows(entries: list[DecisionEntry]) -> list[dict[str, Any]]:
    """Flatten decision entries for tabular export; details become a JSON string."""
    return [
        {"round": e.round, "kind": e.kind, "detail": json.dumps(e.detail, sort_keys=True)}
        for e in entries
    ]


def export_audit_log(entries: list[dict[str, Any]], fmt: str = "json") -> str:
    """Export audit entries as ``json``, ``csv``, or JSONL for any other format."""
    if fmt == "json":
        return json.dumps(entries, indent=2)

    if fmt == "csv":
        if not entries:
            return ""
        fieldnames = list(entries[0].keys())
        output = io.StringIO()
        writer = csv.DictWriter(output, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(entries)
        return output.getvalue()

    return "\n".join(json.dumps(e) for e in entries)
