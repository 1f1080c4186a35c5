"""Line-delimited JSON event log.

One record per line with exactly four keys::

    {"epoch": int, "subsystem": str, "type": str, "payload": {...}}

Keys are sorted and separators fixed, so identical runs produce
byte-identical logs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator


class EventLog:
    def __init__(self):
        self.records: list[dict] = []

    def emit(self, epoch: int, subsystem: str, type: str, /, **payload: Any) -> dict:
        rec = {"epoch": epoch, "subsystem": subsystem, "type": type, "payload": payload}
        self.records.append(rec)
        return rec

    def of_type(self, *types: str) -> list[dict]:
        return [r for r in self.records if r["type"] in types]

    def dumps(self) -> str:
        return "".join(encode(r) + "\n" for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())


def encode(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def read_events(path: str | Path) -> list[dict]:
    return list(iter_events(Path(path).read_text().splitlines()))


def iter_events(lines: Iterable[str]) -> Iterator[dict]:
    for line in lines:
        if line.strip():
            yield json.loads(line)
