"""Append-only JSONL event log: the service's single source of truth."""

from __future__ import annotations

import json
import os
from typing import Iterator


class EventLog:
    """One JSON object per line, flushed and fsynced before acknowledging.

    A crash can leave at most one torn final line, which replay drops; every
    event that was acknowledged to a caller is therefore durable.
    """

    def __init__(self, path: str):
        self.path = path
        self._fh = open(path, "a", encoding="utf-8")

    def append(self, event: dict) -> None:
        self._fh.write(json.dumps(event, sort_keys=True, separators=(",", ":")) + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()


def replay_events(path: str) -> Iterator[dict]:
    """Parse the log, ignoring a torn trailing line; any other damage raises."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    for i, line in enumerate(lines):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            yield json.loads(stripped)
        except json.JSONDecodeError as exc:
            if i == len(lines) - 1:
                return  # torn tail from a crash mid-write
            raise ValueError(f"{path}:{i + 1}: corrupt event log line") from exc
