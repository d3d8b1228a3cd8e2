"""Deterministic corpus generators shared by CLI and acceptance tests."""

import json

import numpy as np


def make_corpus(path: str, n_cascades: int, seed: int, max_events: int = 12,
                n_users: int = 40) -> None:
    """Write a reproducible cascade file: sizes, gaps, users, marks all seeded."""
    rng = np.random.default_rng(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n_cascades):
            n = int(rng.integers(1, max_events + 1))
            t = 0.0
            events = []
            for k in range(n):
                if k > 0:
                    t += float(np.round(rng.exponential(30.0), 3))
                events.append({
                    "user": f"user{int(rng.integers(n_users)):03d}",
                    "t": t,
                    "mark": int(rng.integers(1, 10_000)),
                })
            fh.write(json.dumps({"cascade_id": f"c{i:05d}", "events": events}) + "\n")
