"""Synthetic ranking experiments: noisy judges, budgets, and noise calibration.

Latent intensities are drawn from a heavy-tailed law (social metrics follow
rich-get-richer tails; follower counts in particular fit a power law with
exponent about 2.016). A synthetic judge answers pairwise questions with the
same noisy-preference probability the fitting model assumes, which lets us
ask, before spending money on real judges: given n targets, a comparison
budget, and a noise level, how good will the recovered ranking be?
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .metrics import spearman
from .ranking import ComparisonRecord, bt_fit, quicksort_run
from .util import stable_hash64, stable_uniform

logger = logging.getLogger(__name__)

DEFAULT_EXPONENT = 2.016
NORMALIZATIONS = ("raw", "log", "percentile")

NOISE_BRACKET = (1e-3, 1e3)


class SimulationError(ValueError):
    """Invalid simulation configuration."""


@dataclass(frozen=True)
class SimulationConfig:
    n_targets: int = 500
    budget: int = 30_000
    noise: float = 1.22
    exponent: float = DEFAULT_EXPONENT
    runs_cap: int = 1000
    normalization: str = "raw"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_targets < 2:
            raise SimulationError(f"need at least 2 targets, got {self.n_targets}")
        if self.budget < 1:
            raise SimulationError(f"budget must be >= 1, got {self.budget}")
        if not (self.noise > 0):
            raise SimulationError(f"noise must be > 0, got {self.noise}")
        if not (self.exponent > 1):
            raise SimulationError(f"power-law exponent must be > 1, got {self.exponent}")
        if self.runs_cap < 1:
            raise SimulationError(f"runs_cap must be >= 1, got {self.runs_cap}")
        if self.normalization not in NORMALIZATIONS:
            raise SimulationError(f"unknown normalization {self.normalization!r}")


@dataclass(frozen=True)
class AccuracyCurvePoint:
    lam: float
    expected_accuracy: float


def sample_intensities(n: int, exponent: float = DEFAULT_EXPONENT, seed: int = 0) -> np.ndarray:
    """n draws from the power law with density ~ x^-exponent on [1, inf).

    Inverse-CDF sampling from a seeded uniform stream: x = u^(-1/(exponent-1)).
    A zero uniform (which would map to infinity) is redrawn. Identical
    (n, exponent, seed) gives a bit-identical vector.
    """
    if not (exponent > 1):
        raise SimulationError(f"power-law exponent must be > 1, got {exponent}")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    while np.any(u == 0.0):
        u[u == 0.0] = rng.random(int((u == 0.0).sum()))
    return u ** (-1.0 / (exponent - 1.0))


def transform_intensities(theta: np.ndarray, normalization: str) -> np.ndarray:
    """Optional monotone reshaping of raw power-law intensities.

    raw keeps the literal draws; log compresses the tail; percentile maps to
    rank / n in (0, 1]. All three preserve the ordering, so rank metrics are
    unaffected; what changes is how pairwise gaps translate into judge
    accuracy at a given noise level.
    """
    if normalization == "raw":
        return np.asarray(theta, dtype=float)
    if normalization == "log":
        return np.log(np.asarray(theta, dtype=float))
    if normalization == "percentile":
        theta = np.asarray(theta, dtype=float)
        order = np.argsort(np.argsort(theta, kind="stable"), kind="stable")
        return (order + 1.0) / len(theta)
    raise SimulationError(f"unknown normalization {normalization!r}")


def make_targets(theta: np.ndarray) -> dict[str, float]:
    """Name a vector of intensities t00001, t00002, ..."""
    return {f"t{i + 1:05d}": float(v) for i, v in enumerate(theta)}


class SyntheticWorker:
    """Stochastic judge answering with the noisy-preference probability.

    Draws are keyed by (seed, pair, times this pair has been asked), so a
    replay of the same ask sequence reproduces the same answers regardless of
    threading, and consecutive runs see independent draws for a pair.
    """

    def __init__(self, theta: Mapping[str, float], lam: float, seed: int = 0):
        if not (lam > 0):
            raise SimulationError(f"noise must be > 0, got {lam}")
        self.theta = dict(theta)
        self.lam = lam
        self.seed = seed
        self._asked: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()

    def answer(self, left: str, right: str) -> str:
        a, b = sorted((left, right))
        with self._lock:
            count = self._asked.get((a, b), 0) + 1
            self._asked[(a, b)] = count
        p_b_wins = expit((self.theta[b] - self.theta[a]) / self.lam)
        u = stable_uniform("judge", self.seed, a, b, count)
        return b if u < p_b_wins else a


def expected_accuracy(
    theta: Mapping[str, float] | np.ndarray,
    pairs: Sequence[tuple[str, str]] | Sequence[tuple[int, int]],
    lam: float,
) -> float:
    """Mean probability of answering each pair in its correct direction.

    The correct winner of a pair is the larger-theta side; an exact tie is a
    coin flip and counts 0.5. Always lies in [0.5, 1].
    """
    if len(pairs) == 0:
        raise SimulationError("expected_accuracy needs at least one pair")
    if not (lam > 0):
        raise SimulationError(f"noise must be > 0, got {lam}")
    if isinstance(theta, Mapping):
        gaps = np.array([abs(theta[a] - theta[b]) for a, b in pairs])
    else:
        theta = np.asarray(theta, dtype=float)
        idx = np.asarray(pairs)
        gaps = np.abs(theta[idx[:, 0]] - theta[idx[:, 1]])
    return float(expit(gaps / lam).mean())


def accuracy_curve(
    theta: Mapping[str, float] | np.ndarray,
    pairs: Sequence,
    lambdas: Iterable[float],
) -> list[AccuracyCurvePoint]:
    return [AccuracyCurvePoint(lam, expected_accuracy(theta, pairs, lam)) for lam in lambdas]


def fit_noise(
    observed_accuracy: float,
    theta_proxy: Mapping[str, float] | np.ndarray,
    pairs: Sequence,
    accuracy_tol: float = 1e-4,
) -> float:
    """Invert the accuracy curve: the noise level whose expected accuracy matches.

    Expected accuracy is strictly decreasing in the noise whenever some pair
    has a real gap, so bisection on [1e-3, 1e3] applies. The bracket is
    narrowed until it is tight in noise terms (relative width 1e-6), not just
    until the accuracy error passes `accuracy_tol`: near-flat stretches of
    the curve would otherwise leave the noise estimate loose.
    """
    if observed_accuracy <= 0.5:
        raise SimulationError(
            f"observed accuracy {observed_accuracy} is indistinguishable from random guessing"
        )
    if observed_accuracy >= 1.0:
        raise SimulationError(f"observed accuracy must be < 1, got {observed_accuracy}")
    lo, hi = NOISE_BRACKET
    acc_lo = expected_accuracy(theta_proxy, pairs, lo)  # the most accurate end
    acc_hi = expected_accuracy(theta_proxy, pairs, hi)
    if observed_accuracy >= acc_lo:
        logger.warning(
            "observed accuracy %.4f is at or above the attainable maximum %.4f; "
            "returning the lower noise bracket %g",
            observed_accuracy, acc_lo, lo,
        )
        return lo
    if observed_accuracy <= acc_hi:
        logger.warning(
            "observed accuracy %.4f is at or below the noisiest bracket's %.4f; "
            "returning the upper noise bracket %g",
            observed_accuracy, acc_hi, hi,
        )
        return hi
    while hi / lo > 1.0 + 1e-6:
        mid = float(np.sqrt(lo * hi))
        if expected_accuracy(theta_proxy, pairs, mid) > observed_accuracy:
            lo = mid
        else:
            hi = mid
    lam = float(np.sqrt(lo * hi))
    err = abs(expected_accuracy(theta_proxy, pairs, lam) - observed_accuracy)
    if err > accuracy_tol:
        logger.warning("fit_noise residual accuracy error %.2e exceeds %.0e", err, accuracy_tol)
    return lam


def simulate_comparisons(
    theta: Mapping[str, float],
    lam: float,
    budget: int,
    seed: int,
    runs_cap: int = 1000,
) -> tuple[list[ComparisonRecord], int]:
    """Quicksort runs with a synthetic judge until the budget is spent.

    Runs execute back to back; the run that crosses the budget is cut
    mid-flight and its partial records are kept. Returns (records, runs
    started).
    """
    targets = sorted(theta)
    worker = SyntheticWorker(theta, lam, seed)
    records: list[ComparisonRecord] = []
    run_id = 0
    while len(records) < budget and run_id < runs_cap:
        run_id += 1
        result = quicksort_run(
            targets,
            worker,
            rng_seed=stable_hash64("sim-run", seed, run_id),
            run_id=run_id,
            max_comparisons=budget - len(records),
        )
        records.extend(result.records)
        if result.aborted:
            break
    return records, run_id


def empirical_accuracy(records: Sequence[ComparisonRecord], theta: Mapping[str, float]) -> float:
    """Fraction of recorded answers that picked the larger-theta side (ties 0.5)."""
    if not records:
        raise SimulationError("no records")
    score = 0.0
    for r in records:
        gap = theta[r.winner] - theta[r.loser()]
        score += 0.5 if gap == 0 else (1.0 if gap > 0 else 0.0)
    return score / len(records)


def budget_grid(
    n_list: Sequence[int],
    budget_list: Sequence[int],
    lam: float,
    exponent: float = DEFAULT_EXPONENT,
    replications: int = 1,
    seed: int = 0,
    normalization: str = "raw",
    runs_cap: int = 1000,
    threads: int = 1,
) -> list[dict]:
    """Mean rank correlation for every (n targets, budget) cell.

    Each replication of a cell resamples intensities, spends the budget on
    quicksort questions answered by the synthetic judge, fits the model, and
    scores Spearman(truth, estimate). Every (cell, replication) owns a
    derived seed and shares nothing, so work items can run on a thread pool
    and the grid is reproducible regardless of thread count.
    """
    if replications < 1:
        raise SimulationError(f"replications must be >= 1, got {replications}")
    cells = [(n, budget) for n in n_list for budget in budget_list]
    work = [
        (n, budget, stable_hash64("grid-cell", seed, n, budget, rep))
        for n, budget in cells
        for rep in range(replications)
    ]

    def run_item(item: tuple[int, int, int]) -> float:
        n, budget, cell_seed = item
        return _grid_cell(n, budget, lam, exponent, normalization, runs_cap, cell_seed)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(run_item, work))
    else:
        values = [run_item(item) for item in work]

    rows = []
    for idx, (n, budget) in enumerate(cells):
        cell_values = np.array(values[idx * replications:(idx + 1) * replications])
        rows.append({
            "n": n,
            "budget": budget,
            "mean_spearman": float(cell_values.mean()),
            "stddev": float(cell_values.std(ddof=1)) if replications > 1 else 0.0,
            "replications": replications,
        })
    return rows


def _grid_cell(
    n: int, budget: int, lam: float, exponent: float, normalization: str,
    runs_cap: int, cell_seed: int,
) -> float:
    raw = sample_intensities(n, exponent, seed=cell_seed % 2**32)
    theta = make_targets(transform_intensities(raw, normalization))
    records, _ = simulate_comparisons(theta, lam, budget, seed=cell_seed, runs_cap=runs_cap)
    model = bt_fit(records, lam)
    estimate = {t: model.theta.get(t, 0.0) for t in theta}
    return spearman(theta, estimate)


def calibrate_noise(
    target_accuracy: float,
    n: int,
    budget: int,
    exponent: float = DEFAULT_EXPONENT,
    normalization: str = "raw",
    seed: int = 0,
    replications: int = 3,
    tol: float = 0.002,
) -> float:
    """Noise level at which the simulated judges' realized accuracy hits the target.

    Bisects on the mean empirical accuracy of full simulated experiments
    (intensity sample + quicksort question selection included), which is what
    a real pilot measures.
    """
    if not (0.5 < target_accuracy < 1.0):
        raise SimulationError(f"target accuracy must be in (0.5, 1), got {target_accuracy}")

    def realized(lam: float) -> float:
        accs = []
        for rep in range(replications):
            rep_seed = stable_hash64("calibrate", seed, rep)
            raw = sample_intensities(n, exponent, seed=rep_seed % 2**32)
            theta = make_targets(transform_intensities(raw, normalization))
            records, _ = simulate_comparisons(theta, lam, budget, seed=rep_seed)
            accs.append(empirical_accuracy(records, theta))
        return float(np.mean(accs))

    lo, hi = NOISE_BRACKET
    for _ in range(40):
        mid = float(np.sqrt(lo * hi))
        acc = realized(mid)
        if abs(acc - target_accuracy) <= tol:
            return mid
        if acc > target_accuracy:
            lo = mid
        else:
            hi = mid
    return float(np.sqrt(lo * hi))


def sample_targets(scores: Mapping[str, float], k: int, seed: int = 0,
                   stratified: bool = True) -> list[str]:
    """Pick k users spread across the whole score distribution.

    Quantile levels are drawn on (0, 1) (stratified by default: one uniform
    draw inside each of k equal bins), pushed through the empirical inverse
    CDF of the scores, and each level claims the not-yet-chosen user with the
    nearest score. Covers both the high and low ends rather than clustering
    at the mode.
    """
    m = len(scores)
    if k > m:
        raise SimulationError(f"cannot sample {k} users from a population of {m}")
    users = sorted(scores, key=lambda u: (scores[u], u))
    values = np.array([scores[u] for u in users])
    rng = np.random.default_rng(seed)
    if stratified:
        levels = (np.arange(k) + rng.random(k)) / k
    else:
        levels = np.sort(rng.random(k))
    chosen: list[str] = []
    taken = np.zeros(m, dtype=bool)
    for u in levels:
        target_value = values[min(int(u * m), m - 1)]
        free = np.flatnonzero(~taken)
        nearest = free[np.argmin(np.abs(values[free] - target_value))]
        taken[nearest] = True
        chosen.append(users[nearest])
    return chosen
