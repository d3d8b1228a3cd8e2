"""Per-cascade influence scores from parent probabilities.

Every event is endowed with one unit of capital. Under the capital policy a
retweet pays a share alpha of everything it holds to its direct parent and
keeps the rest (the cascade initiator keeps everything); with the policy off
each event simply counts the events downstream of it. The accumulation
matrix M holds, in entry (i, k), the capital event i expects to retain out
of event k's endowment over all possible parent assignments; row sums are
tweet influence and a user's influence is the mean over their tweets.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from .cascades import (
    Cascade,
    ConductanceProvider,
    MarkConfig,
    MemoryKernel,
    branching_matrix,
    kernel_eval,
)
from .util import ExactSum

DEFAULT_MAX_EVENTS = 20_000


class EngineError(ValueError):
    """Invalid influence-engine inputs."""


@dataclass(frozen=True)
class CapitalPolicy:
    """How each event's unit endowment is split along diffusion edges."""

    mode: str
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("none", "social_capital"):
            raise EngineError(f"unknown capital mode {self.mode!r}")
        if self.mode == "social_capital":
            if self.alpha is None or not (0.0 < self.alpha < 1.0):
                raise EngineError(f"alpha must lie strictly in (0, 1), got {self.alpha}")
        elif self.alpha is not None:
            raise EngineError("capital mode 'none' takes no alpha")

    @staticmethod
    def none() -> "CapitalPolicy":
        return CapitalPolicy("none")

    @staticmethod
    def social_capital(alpha: float) -> "CapitalPolicy":
        return CapitalPolicy("social_capital", alpha)

    @property
    def transfer(self) -> float:
        """Share of capital sent along one diffusion edge."""
        return self.alpha if self.mode == "social_capital" else 1.0

    def keep(self, index: int) -> float:
        """Share of its own holdings an event retains; `index` is 1-based."""
        if self.mode == "none" or index == 1:
            return 1.0
        return 1.0 - self.alpha


def capital_share(policy: CapitalPolicy, i: int, j: int) -> float:
    """Share of event j's capital that ends up at event i (1-based, i <= j)."""
    if i < 1 or i > j:
        raise EngineError(f"capital_share requires 1 <= i <= j, got i={i}, j={j}")
    if policy.mode == "none":
        return 1.0
    if i < j:
        return policy.alpha
    return 1.0 if i == 1 else 1.0 - policy.alpha


def accumulate(p_prime: np.ndarray, policy: CapitalPolicy) -> np.ndarray:
    """Accumulation matrix M for one cascade.

    With T(i, j) = p'(i, j) * transfer share, column j of M is the settled
    sub-matrix applied to T's column: M[:j, j] = M[:j, :j] @ T[:j, j], and
    M[j, j] is the event's own kept share. Columns are dense sub-matrix /
    vector products, so the O(n^3) total runs at BLAS speed.
    """
    n = p_prime.shape[0]
    if p_prime.shape != (n, n):
        raise EngineError(f"parent matrix must be square, got {p_prime.shape}")
    diag = np.fromiter((policy.keep(j + 1) for j in range(n)), dtype=np.float64, count=n)
    T = p_prime * policy.transfer
    M = np.zeros((n, n), dtype=np.float64)
    if n == 0:
        return M
    M[0, 0] = diag[0]
    for j in range(1, n):
        M[:j, j] = M[:j, :j] @ T[:j, j]
        M[j, j] = diag[j]
    return M


def tweet_influence(M: np.ndarray) -> np.ndarray:
    """Row sums of the accumulation matrix: total capital each event retains."""
    return M.sum(axis=1)


@dataclass(frozen=True)
class TweetInfluence:
    cascade_id: str
    index: int
    user_id: str
    score: float


@dataclass(frozen=True)
class UserInfluence:
    user_id: str
    score: float
    tweet_count: int


class UserInfluenceAccumulator:
    """Streaming per-user mean of tweet scores.

    Keeps an exact running sum per user (count + Shewchuk partials), so the
    result is identical no matter what order scores arrive in and the corpus
    never has to be held in memory.
    """

    def __init__(self) -> None:
        self._sums: dict[str, ExactSum] = {}
        self._counts: dict[str, int] = {}

    def add(self, user_id: str, score: float) -> None:
        acc = self._sums.get(user_id)
        if acc is None:
            acc = self._sums[user_id] = ExactSum()
            self._counts[user_id] = 0
        acc.add(score)
        self._counts[user_id] += 1

    def results(self) -> dict[str, UserInfluence]:
        return {
            user: UserInfluence(user, self._sums[user].value() / count, count)
            for user, count in self._counts.items()
        }


def user_influence(tweet_scores: Iterable[TweetInfluence]) -> dict[str, UserInfluence]:
    """Mean tweet influence per user over a stream of scored tweets."""
    acc = UserInfluenceAccumulator()
    for item in tweet_scores:
        acc.add(item.user_id, item.score)
    return acc.results()


def score_cascade(
    cascade: Cascade,
    kernel: MemoryKernel,
    marks: MarkConfig = MarkConfig(),
    conductance: ConductanceProvider | None = None,
    policy: CapitalPolicy = CapitalPolicy.none(),
    max_events: int = DEFAULT_MAX_EVENTS,
) -> list[TweetInfluence]:
    """Branching + accumulation + row sums for one cascade."""
    if len(cascade) > max_events:
        raise EngineError(
            f"cascade {cascade.cascade_id!r} has {len(cascade)} events, above the cap of "
            f"{max_events}; raise max_events explicitly to accept the O(n^3) cost"
        )
    p = branching_matrix(cascade, kernel, marks, conductance)
    scores = tweet_influence(accumulate(p, policy))
    return [
        TweetInfluence(cascade.cascade_id, idx, ev.user_id, float(s))
        for idx, (ev, s) in enumerate(zip(cascade.events, scores), start=1)
    ]


def score_corpus(
    cascades: Iterable[Cascade],
    kernel: MemoryKernel,
    marks: MarkConfig = MarkConfig(),
    conductance: ConductanceProvider | None = None,
    policy: CapitalPolicy = CapitalPolicy.none(),
    threads: int = 1,
    max_events: int = DEFAULT_MAX_EVENTS,
    per_tweet: Callable[[TweetInfluence], None] | None = None,
) -> dict[str, UserInfluence]:
    """Score a stream of cascades and aggregate per user.

    Cascades are independent, so they are scored on a thread pool; results
    are folded back in input order and user sums are exact, which makes the
    output identical to the threads=1 path.
    """

    def work(c: Cascade) -> list[TweetInfluence]:
        return score_cascade(c, kernel, marks, conductance, policy, max_events)

    acc = UserInfluenceAccumulator()

    def fold(results: Iterator[list[TweetInfluence]]) -> None:
        for items in results:
            for item in items:
                acc.add(item.user_id, item.score)
                if per_tweet is not None:
                    per_tweet(item)

    if threads <= 1:
        fold(map(work, cascades))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fold(pool.map(work, cascades, chunksize=16))
    return acc.results()


def brute_force_influence(
    cascade: Cascade,
    kernel: MemoryKernel,
    marks: MarkConfig = MarkConfig(),
    conductance: ConductanceProvider | None = None,
    policy: CapitalPolicy = CapitalPolicy.none(),
    max_enumeration: int = 7,
) -> np.ndarray:
    """Exact influence by enumerating every parent assignment (test oracle).

    Walks all (n-1)! ways of wiring each retweet to an earlier event. For
    each wiring, capital is propagated bottom-up: an event's holdings are its
    endowment plus the transfer share of each child's holdings, and it
    retains its kept share of the total. The returned scores are the
    probability-weighted average of those retained amounts.

    Everything here is computed from scratch (including the parent
    probabilities, via direct normalization), so it shares no code with the
    iterative path it exists to check.
    """
    n = len(cascade)
    if n > max_enumeration:
        raise EngineError(f"brute force enumerates (n-1)! structures; refusing n={n}")
    t = cascade.times
    zeta = cascade.marks
    users = cascade.users
    b = marks.b

    p = np.zeros((n, n))
    for j in range(1, n):
        w = np.empty(j)
        for i in range(j):
            mark_w = 1.0 if b == 0.0 else zeta[i] ** b
            g = 1.0 if conductance is None else conductance.gamma(users[i], users[j])
            w[i] = mark_w * kernel_eval(kernel, t[j] - t[i]) * g
        total = w.sum()
        if not (total > 0) or not np.isfinite(total):
            raise EngineError(f"event {j} has no candidate parent with positive weight")
        p[:j, j] = w / total

    share = policy.transfer
    keep = np.array([policy.keep(i + 1) for i in range(n)])
    scores = np.zeros(n)
    for parents in itertools.product(*(range(j) for j in range(1, n))):
        prob = 1.0
        for child, parent in enumerate(parents, start=1):
            prob *= p[parent, child]
        held = np.ones(n)
        for child in range(n - 1, 0, -1):
            held[parents[child - 1]] += share * held[child]
        scores += prob * held * keep
    return scores
