"""Marked retweet cascades and parent (branching) probabilities.

A cascade is a time-ordered sequence of marked events: the original tweet at
t = 0 followed by its retweets. Every later event has exactly one latent
direct parent among the earlier events; the branching matrix gives the
probability of each candidate parent from a self-exciting intensity whose
per-event contribution is mark^b * kernel(dt), optionally damped by a
pairwise conductance between the two users.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Protocol

import numpy as np


class CascadeError(ValueError):
    """Invalid cascade data or kernel configuration."""


class ConductanceProvider(Protocol):
    """Read-only map from an ordered user pair to a damping factor in (0, 1].

    gamma(source, target) is how readily target's activity is attributed to
    source's. Implementations must be safe for concurrent queries.
    """

    def gamma(self, source_user: str, target_user: str) -> float: ...


@dataclass(frozen=True)
class Event:
    user_id: str
    t: float
    mark: float = 1.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.t) or self.t < 0:
            raise CascadeError(f"event time must be finite and >= 0, got {self.t}")
        if not math.isfinite(self.mark) or self.mark < 0:
            raise CascadeError(f"event mark must be finite and >= 0, got {self.mark}")


@dataclass(frozen=True)
class Cascade:
    cascade_id: str
    events: tuple[Event, ...]

    def __post_init__(self) -> None:
        if len(self.events) == 0:
            raise CascadeError(f"cascade {self.cascade_id!r} has no events")
        if self.events[0].t != 0.0:
            raise CascadeError(
                f"cascade {self.cascade_id!r}: first event must be at t=0, got {self.events[0].t}"
            )
        for a, b in zip(self.events, self.events[1:]):
            if b.t < a.t:
                raise CascadeError(f"cascade {self.cascade_id!r}: event times must be non-decreasing")

    def __len__(self) -> int:
        return len(self.events)

    @property
    def times(self) -> np.ndarray:
        return np.array([e.t for e in self.events], dtype=np.float64)

    @property
    def marks(self) -> np.ndarray:
        return np.array([e.mark for e in self.events], dtype=np.float64)

    @property
    def users(self) -> list[str]:
        return [e.user_id for e in self.events]


@dataclass(frozen=True)
class MemoryKernel:
    """Time-decay of an event's excitation.

    exponential: phi(dt) = exp(-r * dt)
    power_law:   phi(dt) = (dt + c) ** -(1 + r)
    """

    variant: str
    r: float
    c: float | None = None

    def __post_init__(self) -> None:
        if self.variant not in ("exponential", "power_law"):
            raise CascadeError(f"unknown kernel variant {self.variant!r}")
        if not (self.r > 0):
            raise CascadeError(f"kernel decay r must be > 0, got {self.r}")
        if self.variant == "power_law":
            if self.c is None or not (self.c > 0):
                raise CascadeError(f"power_law kernel needs cutoff c > 0, got {self.c}")
        elif self.c is not None:
            raise CascadeError("exponential kernel takes no cutoff c")

    @staticmethod
    def exponential(r: float = 1.0) -> "MemoryKernel":
        return MemoryKernel("exponential", r)

    @staticmethod
    def power_law(r: float = 1.0, c: float = 1.0) -> "MemoryKernel":
        return MemoryKernel("power_law", r, c)

    def log_eval(self, dt: np.ndarray) -> np.ndarray:
        """log phi(dt), vectorized; dt must already be >= 0."""
        if self.variant == "exponential":
            return -self.r * dt
        return -(1.0 + self.r) * np.log(dt + self.c)


@dataclass(frozen=True)
class MarkConfig:
    """Exponent applied to event marks; b = 0 turns marks off entirely."""

    b: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.b):
            raise CascadeError(f"mark exponent must be finite, got {self.b}")


def kernel_eval(kernel: MemoryKernel, dt: float) -> float:
    """Kernel value at elapsed time dt >= 0."""
    if dt < 0:
        raise CascadeError(f"kernel evaluated at negative dt {dt}")
    if kernel.variant == "exponential":
        return math.exp(-kernel.r * dt)
    return (dt + kernel.c) ** -(1.0 + kernel.r)


def _log_mark_weights(marks: np.ndarray, b: float) -> np.ndarray:
    if b == 0.0:
        return np.zeros_like(marks)
    with np.errstate(divide="ignore"):
        logm = np.log(marks)
    out = b * logm
    # mark 0 with b > 0 contributes zero weight; with b < 0 it has no finite
    # weight and the column cannot be normalized.
    if b < 0 and np.any(np.isinf(out) & (out > 0)):
        raise CascadeError("zero mark with negative mark exponent b")
    return out


def branching_matrix(
    cascade: Cascade,
    kernel: MemoryKernel,
    marks: MarkConfig = MarkConfig(),
    conductance: ConductanceProvider | None = None,
) -> np.ndarray:
    """Parent probability matrix: entry (i, j) = P(event j is a direct child of event i).

    Strictly upper triangular in index order; each column j >= 1 sums to 1.
    Candidate parents of event j are all earlier-indexed events (equal
    timestamps allowed, broken by input order). Column weights are computed
    in log space and shifted by the column max, so extreme time gaps or tiny
    power-law cutoffs cannot underflow a whole column.
    """
    n = len(cascade)
    t = cascade.times
    log_mark = _log_mark_weights(cascade.marks, marks.b)
    users = cascade.users

    p = np.zeros((n, n), dtype=np.float64)
    if n == 1:
        return p

    if conductance is None:
        log_gamma_col = None
    else:
        g = np.ones((n, n), dtype=np.float64)
        for j in range(1, n):
            for i in range(j):
                g[i, j] = conductance.gamma(users[i], users[j])
        with np.errstate(divide="ignore"):
            log_gamma_col = np.log(g)

    for j in range(1, n):
        logw = log_mark[:j] + kernel.log_eval(t[j] - t[:j])
        if log_gamma_col is not None:
            logw = logw + log_gamma_col[:j, j]
        top = np.max(logw)
        if not np.isfinite(top):
            raise CascadeError(
                f"cascade {cascade.cascade_id!r}: no candidate parent of event {j} has positive weight"
            )
        w = np.exp(logw - top)
        p[:j, j] = w / w.sum()
    return p


def validate_parent_matrix(p: np.ndarray, atol: float = 1e-9) -> None:
    """Raise unless p is a valid parent probability matrix."""
    n = p.shape[0]
    if p.shape != (n, n):
        raise CascadeError(f"parent matrix must be square, got {p.shape}")
    if np.any(p < -atol) or np.any(p > 1 + atol):
        raise CascadeError("parent matrix entries must lie in [0, 1]")
    if np.any(np.tril(p) != 0):
        raise CascadeError("parent matrix must be strictly upper triangular")
    if n >= 2:
        sums = p[:, 1:].sum(axis=0)
        if np.any(np.abs(sums - 1.0) > atol):
            j = int(np.argmax(np.abs(sums - 1.0))) + 1
            raise CascadeError(f"column {j} sums to {sums[j - 1]}, expected 1")


def cascade_from_record(record: dict) -> Cascade:
    """Build a Cascade from one parsed input record."""
    try:
        cascade_id = str(record["cascade_id"])
        raw_events = record["events"]
    except (KeyError, TypeError) as exc:
        raise CascadeError(f"record missing field: {exc}") from exc
    if not isinstance(raw_events, list) or not raw_events:
        raise CascadeError(f"cascade {cascade_id!r}: events must be a non-empty list")
    events = []
    for ev in raw_events:
        try:
            events.append(Event(str(ev["user"]), float(ev["t"]), float(ev.get("mark", 1.0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise CascadeError(f"cascade {cascade_id!r}: bad event {ev!r}: {exc}") from exc
    return Cascade(cascade_id, tuple(events))


def read_cascades(path: str, *, skip_bad: bool = False) -> Iterator[Cascade]:
    """Stream cascades from a line-delimited file of {cascade_id, events:[{user,t,mark}]}.

    Malformed lines raise CascadeError tagged with the line number, or are
    skipped (with a count available to the caller via logging) when skip_bad.
    """
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                record = json.loads(stripped)
                yield cascade_from_record(record)
            except (json.JSONDecodeError, CascadeError) as exc:
                if skip_bad:
                    continue
                raise CascadeError(f"{path}:{lineno}: {exc}") from exc


def write_cascades(path: str, cascades: Iterable[Cascade]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in cascades:
            record = {
                "cascade_id": c.cascade_id,
                "events": [{"user": e.user_id, "t": e.t, "mark": e.mark} for e in c.events],
            }
            fh.write(json.dumps(record, separators=(",", ":")) + "\n")
