import numpy as np
import pytest

from influencekit.cascades import Cascade, Event
from influencekit.util import stable_uniform


class RandomConductance:
    """Deterministic pseudo-random damping in [beta, 1] per ordered user pair."""

    def __init__(self, beta: float = 0.18, seed: int = 0):
        self.beta = beta
        self.seed = seed

    def gamma(self, source_user: str, target_user: str) -> float:
        if source_user == target_user:
            return 1.0
        u = stable_uniform("rand-cond", self.seed, source_user, target_user)
        return self.beta + (1.0 - self.beta) * u


def random_cascade(rng: np.random.Generator, n: int, n_users: int | None = None,
                   allow_ties: bool = False) -> Cascade:
    """Cascade with random gaps and marks; optionally with tied timestamps."""
    if n_users is None:
        n_users = max(2, n // 2 + 1)
    times = [0.0]
    for _ in range(n - 1):
        gap = 0.0 if (allow_ties and rng.random() < 0.3) else float(rng.exponential(2.0))
        times.append(times[-1] + gap)
    events = tuple(
        Event(f"u{rng.integers(n_users)}", t, float(rng.uniform(0.0, 50.0)))
        for t in times
    )
    return Cascade(f"casc-{rng.integers(1 << 30)}", events)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
