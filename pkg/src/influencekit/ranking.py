"""Pairwise-comparison ranking: noisy Bradley-Terry fitting and quicksort pair selection.

Targets carry a latent intensity theta; a judge shown targets i and j picks j
with probability sigmoid((theta_j - theta_i) / noise). Quicksort decides
which pairs are worth asking about: every comparison involves the partition
pivot, so a full run costs O(n log n) questions and never repeats a pair.
Pooled answers from one or more runs are fed to a penalized maximum
likelihood fit to recover the intensities.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
from scipy.special import expit

from .util import format_score, stable_hash64

FIT_PENALTY = 1e-4
FIT_GRAD_TOL = 1e-8
FIT_MAX_ITER = 10_000


class RankingError(ValueError):
    """Invalid ranking inputs or broken oracle contract."""


class OracleError(RuntimeError):
    """The comparison oracle failed mid-run; partial records are preserved."""

    def __init__(self, message: str, records: list["ComparisonRecord"]):
        super().__init__(message)
        self.records = records


@dataclass(frozen=True)
class ComparisonRecord:
    run_id: int
    left: str
    right: str
    winner: str
    worker_id: str = "synthetic"
    question_id: int = 0
    timestamp: float | None = None

    def __post_init__(self) -> None:
        if self.left == self.right:
            raise RankingError(f"comparison of {self.left!r} against itself")
        if self.winner not in (self.left, self.right):
            raise RankingError(f"winner {self.winner!r} is neither side of the pair")

    def loser(self) -> str:
        return self.right if self.winner == self.left else self.left

    def to_json(self) -> dict:
        return {
            "run": self.run_id,
            "left": self.left,
            "right": self.right,
            "winner": self.winner,
            "worker": self.worker_id,
            "question": self.question_id,
            "ts": self.timestamp,
        }

    @staticmethod
    def from_json(obj: dict) -> "ComparisonRecord":
        return ComparisonRecord(
            run_id=int(obj["run"]),
            left=str(obj["left"]),
            right=str(obj["right"]),
            winner=str(obj["winner"]),
            worker_id=str(obj.get("worker", "synthetic")),
            question_id=int(obj.get("question", 0)),
            timestamp=obj.get("ts"),
        )


class PairwiseComparisonMatrix:
    """Win counts: entry (i, j) is how often target i was favored over j."""

    def __init__(self, targets: Sequence[str]):
        if len(set(targets)) != len(targets):
            raise RankingError("duplicate target in comparison matrix")
        self.targets = tuple(targets)
        self.index = {t: i for i, t in enumerate(self.targets)}
        self.counts = np.zeros((len(targets), len(targets)), dtype=np.int64)

    def add(self, winner: str, loser: str) -> None:
        self.counts[self.index[winner], self.index[loser]] += 1

    @staticmethod
    def from_records(records: Iterable[ComparisonRecord]) -> "PairwiseComparisonMatrix":
        records = list(records)
        targets = sorted({t for r in records for t in (r.left, r.right)})
        pcm = PairwiseComparisonMatrix(targets)
        for r in records:
            pcm.add(r.winner, r.loser())
        return pcm

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class NoisyBTModel:
    """Fitted latent intensities under a fixed noise temperature."""

    theta: dict[str, float]
    lam: float
    converged: bool = True
    iterations: int = 0
    max_grad: float = 0.0

    def __post_init__(self) -> None:
        if not (self.lam > 0):
            raise RankingError(f"noise must be > 0, got {self.lam}")


def bt_probability(model: NoisyBTModel, i: str, j: str) -> float:
    """P(j is preferred over i) under the fitted model."""
    try:
        di = model.theta[i]
        dj = model.theta[j]
    except KeyError as exc:
        raise RankingError(f"unknown target {exc}") from exc
    return float(expit((dj - di) / model.lam))


def _penalized_ll(counts: np.ndarray, theta: np.ndarray, lam: float) -> float:
    d = (theta[:, None] - theta[None, :]) / lam
    # log sigmoid, stable at both tails
    log_sig = -np.logaddexp(0.0, -d)
    return float((counts * log_sig).sum() - FIT_PENALTY * (theta**2).sum())


def bt_fit(
    comparisons: PairwiseComparisonMatrix | Iterable[ComparisonRecord],
    lam: float,
) -> NoisyBTModel:
    """Maximum penalized likelihood intensities from pooled comparisons.

    Maximizes sum(log P(loser < winner)) - 1e-4 * sum(theta^2) by damped
    Newton steps (the tiny ridge keeps the optimum finite for undefeated
    targets and disconnected comparison graphs), then recenters to
    sum(theta) = 0. Convergence is max|gradient| < 1e-8 within 10,000
    iterations; a fit that stops on the iteration cap is flagged, not hidden.
    """
    if not (lam > 0):
        raise RankingError(f"noise must be > 0, got {lam}")
    pcm = (
        comparisons
        if isinstance(comparisons, PairwiseComparisonMatrix)
        else PairwiseComparisonMatrix.from_records(comparisons)
    )
    if pcm.total == 0:
        raise RankingError("no comparisons to fit")

    C = pcm.counts.astype(np.float64)
    n = C.shape[0]
    sym = C + C.T
    theta = np.zeros(n)
    ll = _penalized_ll(C, theta, lam)
    converged = False
    iterations = 0
    max_grad = np.inf
    damping = 0.0
    for iterations in range(1, FIT_MAX_ITER + 1):
        d = (theta[:, None] - theta[None, :]) / lam
        s = expit(d)
        grad = (C * (1.0 - s)).sum(axis=1) / lam - (C.T * s).sum(axis=1) / lam
        grad -= 2.0 * FIT_PENALTY * theta
        max_grad = float(np.abs(grad).max())
        if max_grad < FIT_GRAD_TOL:
            converged = True
            break
        W = sym * s * (1.0 - s) / lam**2
        H = W.copy()
        H[np.diag_indices(n)] -= W.sum(axis=1) + 2.0 * FIT_PENALTY
        # Levenberg-damped Newton: extra negative diagonal shortens the step
        # and bends it toward the gradient whenever the pure step overshoots
        # (flat tails of the likelihood make the raw Hessian nearly singular).
        while True:
            Hd = H if damping == 0.0 else H - damping * np.eye(n)
            step = np.linalg.solve(Hd, -grad)
            cand = theta + step
            ll_cand = _penalized_ll(C, cand, lam)
            if ll_cand > ll or (ll_cand == ll and damping > 1e8):
                theta, ll = cand, ll_cand
                damping = damping / 8.0 if damping > 1e-12 else 0.0
                break
            damping = max(damping * 8.0, 1e-6)

    theta = theta - theta.mean()
    return NoisyBTModel(
        theta={t: float(v) for t, v in zip(pcm.targets, theta)},
        lam=lam,
        converged=converged,
        iterations=iterations,
        max_grad=max_grad,
    )


class ComparisonOracle(Protocol):
    """Answers one pairwise question with the preferred target.

    Implementations may also expose prefetch(pairs), called once per quicksort
    wave in canonical order before any answer() of that wave; a live service
    uses it to enqueue the whole wave so judges can work on every open
    partition at once.
    """

    def answer(self, left: str, right: str) -> str: ...


@dataclass
class ScoreOracle:
    """Deterministic judge: the higher-scored target always wins (ties by id)."""

    scores: Mapping[str, float]

    def answer(self, left: str, right: str) -> str:
        return max((left, right), key=lambda t: (self.scores[t], t))


@dataclass
class QuicksortResult:
    order: list[str] | None  # ascending; None when the run was cut short
    records: list[ComparisonRecord]
    aborted: bool = False

    @property
    def comparisons(self) -> int:
        return len(self.records)


def quicksort_run(
    targets: Sequence[str],
    oracle: ComparisonOracle,
    rng_seed: int,
    run_id: int = 1,
    max_comparisons: int | None = None,
    worker_id: str = "synthetic",
    progress: "callable | None" = None,
) -> QuicksortResult:
    """One quicksort pass over the targets, asking the oracle per pair.

    Partitions are processed in waves: every open partition picks a pivot
    (seeded per partition, so re-running with the same seed re-picks the same
    pivots) and all of the wave's pivot-vs-item questions are issued before
    any answer is awaited. Each unordered pair is compared at most once per
    run by construction. Records come back sorted by (partition, position),
    independent of answer arrival order. A comparison budget cuts the run
    mid-wave; the partial records are kept and `aborted` is set.
    """
    items = list(targets)
    if len(set(items)) != len(items):
        raise RankingError("targets must be distinct")
    if not items:
        raise RankingError("no targets to sort")

    frontier: dict[str, list[str]] = {"": items}
    pivots: dict[str, str] = {}
    leaves: dict[str, list[str]] = {}
    keyed_records: list[tuple[str, int, ComparisonRecord]] = []
    seen_pairs: set[frozenset] = set()
    aborted = False

    def partial_records() -> list[ComparisonRecord]:
        return [r for _, _, r in sorted(keyed_records, key=lambda kr: (kr[0], kr[1]))]

    while frontier:
        if progress is not None:
            progress(len(frontier))
        wave: list[tuple[str, int, str, str]] = []  # (path, position, pivot, item)
        for path in sorted(frontier):
            part = frontier[path]
            if len(part) <= 1:
                leaves[path] = part
                continue
            rng = random.Random(stable_hash64("pivot", rng_seed, run_id, path))
            pivot = part[rng.randrange(len(part))]
            pivots[path] = pivot
            for pos, item in enumerate(part):
                if item is not pivot:
                    wave.append((path, pos, pivot, item))

        if max_comparisons is not None:
            remaining = max_comparisons - len(keyed_records)
            if remaining < len(wave):
                wave = wave[: max(0, remaining)]
                aborted = True

        pairs = [tuple(sorted((pivot, item))) for _, _, pivot, item in wave]
        prefetch = getattr(oracle, "prefetch", None)
        if prefetch is not None:
            prefetch(pairs)

        answers: dict[tuple[str, int], str] = {}
        for (path, pos, pivot, item), (left, right) in zip(wave, pairs):
            key = frozenset((pivot, item))
            if key in seen_pairs:
                raise RankingError(f"pair {sorted(key)} compared twice in run {run_id}")
            seen_pairs.add(key)
            try:
                winner = oracle.answer(left, right)
            except Exception as exc:
                raise OracleError(f"oracle failed on {left!r} vs {right!r}: {exc}",
                                  partial_records()) from exc
            if winner not in (left, right):
                raise OracleError(f"oracle returned {winner!r} for pair ({left!r}, {right!r})",
                                  partial_records())
            answers[(path, pos)] = winner
            keyed_records.append(
                (path, pos, ComparisonRecord(run_id, left, right, winner, worker_id))
            )

        if aborted:
            return QuicksortResult(None, partial_records(), aborted=True)

        next_frontier: dict[str, list[str]] = {}
        for path in sorted(frontier):
            part = frontier[path]
            if len(part) <= 1:
                continue
            pivot = pivots[path]
            below: list[str] = []
            at_or_above: list[str] = []
            for pos, item in enumerate(part):
                if item is pivot:
                    continue
                # the pivot winning means the item ranks below it
                (below if answers[(path, pos)] == pivot else at_or_above).append(item)
            if below:
                next_frontier[path + "L"] = below
            if at_or_above:
                next_frontier[path + "R"] = at_or_above
        frontier = next_frontier

    def build(path: str) -> list[str]:
        if path in leaves:
            return leaves[path]
        if path in pivots:
            return build(path + "L") + [pivots[path]] + build(path + "R")
        return []

    order = build("")
    return QuicksortResult(order, partial_records(), aborted=False)


def multi_run_rank(
    targets: Sequence[str],
    oracle: ComparisonOracle,
    runs: int,
    lam: float,
    seed: int,
) -> tuple[NoisyBTModel, list[ComparisonRecord]]:
    """Pool `runs` sequential quicksort passes and fit one model over all records."""
    if runs < 1:
        raise RankingError(f"runs must be >= 1, got {runs}")
    all_records: list[ComparisonRecord] = []
    for run_id in range(1, runs + 1):
        result = quicksort_run(
            targets, oracle, rng_seed=stable_hash64("run-seed", seed, run_id), run_id=run_id
        )
        all_records.extend(result.records)
    return bt_fit(all_records, lam), all_records


def read_comparison_log(path: str) -> list[ComparisonRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            try:
                records.append(ComparisonRecord.from_json(json.loads(stripped)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise RankingError(f"{path}:{lineno}: bad comparison record: {exc}") from exc
    return records


def write_comparison_log(path: str, records: Iterable[ComparisonRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def write_ranking_csv(path: str, model: NoisyBTModel, header_lines: Sequence[str] = ()) -> None:
    """CSV of target,theta,rank,percentile with rank 1 = highest intensity."""
    ordered = sorted(model.theta, key=lambda t: (-model.theta[t], t))
    n = len(ordered)
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("target,theta,rank,percentile\n")
        for rank, target in enumerate(ordered, start=1):
            fh.write(
                f"{target},{format_score(model.theta[target])},{rank},{format_score(rank / n)}\n"
            )
