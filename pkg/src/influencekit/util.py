"""Shared helpers: stable hashing, deterministic uniforms, exact summation, JSONL IO."""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any, Iterable, Iterator


def stable_hash64(*parts: Any) -> int:
    """64-bit hash of the parts, stable across processes and platforms.

    Python's builtin hash() is salted per process, so everything that must be
    reproducible (pivot choices, synthetic draws, derived seeds) goes through
    this instead.
    """
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def stable_uniform(*parts: Any) -> float:
    """Deterministic draw in [0, 1) keyed by the parts."""
    return stable_hash64(*parts) / 2.0**64


def fnv1a_32(text: str) -> int:
    """FNV-1a 32-bit hash of the UTF-8 encoding of `text`."""
    h = 0x811C9DC5
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x01000193) & 0xFFFFFFFF
    return h


class ExactSum:
    """Streaming exact float accumulator (Shewchuk partials, as in math.fsum).

    The result is the correctly rounded sum of everything added, so it does
    not depend on the order items arrive in. Used where parallel reductions
    must be bit-identical to the sequential path.
    """

    __slots__ = ("_partials",)

    def __init__(self) -> None:
        self._partials: list[float] = []

    def add(self, x: float) -> None:
        partials = self._partials
        i = 0
        for y in partials:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo:
                partials[i] = lo
                i += 1
            x = hi
        partials[i:] = [x]

    def value(self) -> float:
        return math.fsum(self._partials)


def dump_jsonl_line(record: dict) -> str:
    return json.dumps(record, separators=(",", ":"), sort_keys=True)


def read_jsonl(path: str, *, skip_partial_tail: bool = False) -> Iterator[tuple[int, dict]]:
    """Yield (1-based line number, parsed object) for each non-blank line.

    With skip_partial_tail a malformed final line is ignored (a write cut off
    mid-line, e.g. by a crash); malformed lines elsewhere still raise.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            yield lineno, json.loads(stripped)
        except json.JSONDecodeError:
            if skip_partial_tail and lineno == len(lines):
                return
            raise


def write_jsonl(path: str, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dump_jsonl_line(rec) + "\n")


def format_score(x: float) -> str:
    """Render a score with 12 significant digits (stable across BLAS builds)."""
    return format(float(x), ".12g")
