"""Newline-delimited JSON diagnostics records.

One JSON object per line; every record carries ``kind`` and ``version``.
Output is byte-deterministic for identical runs except for the wall-clock
``timestamp`` field, which exists only in the header record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterator

SCHEMA_VERSION = 1


class RecordError(ValueError):
    pass


@dataclass
class DiagnosticsRecord:
    kind: str
    run_id: str
    payload: dict

    def to_line(self) -> str:
        body = {"kind": self.kind, "version": SCHEMA_VERSION, "run_id": self.run_id}
        body.update(self.payload)
        return json.dumps(body, sort_keys=True, allow_nan=True)


def emit_record(stream: IO[str], record: DiagnosticsRecord) -> None:
    """Append exactly one newline-terminated record."""
    stream.write(record.to_line())
    stream.write("\n")


def read_records(path: str, expect_version: int = SCHEMA_VERSION) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if "kind" not in obj or "version" not in obj:
                raise RecordError(f"{path}:{lineno}: record lacks kind/version fields")
            if obj["version"] != expect_version:
                raise RecordError(
                    f"{path}:{lineno}: schema version {obj['version']} != {expect_version}"
                )
            yield obj


class RecordWriter:
    """Single-writer sink that counts emitted records and closes cleanly."""

    def __init__(self, stream: IO[str], run_id: str):
        self.stream = stream
        self.run_id = run_id
        self.count = 0

    def emit(self, kind: str, **payload) -> None:
        emit_record(self.stream, DiagnosticsRecord(kind, self.run_id, payload))
        self.count += 1
