"""Ranking-quality measures for comparing an estimated ordering to a truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.stats import rankdata


class MetricsError(ValueError):
    """Invalid metric inputs."""


@dataclass(frozen=True)
class Ranking:
    """Ordered targets, best first; rank is 1-based and percentile = rank / n."""

    order: tuple[str, ...]
    _rank: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(set(self.order)) != len(self.order):
            raise MetricsError("ranking must be a permutation (duplicate target)")
        if not self.order:
            raise MetricsError("ranking must not be empty")
        object.__setattr__(self, "_rank", {t: i for i, t in enumerate(self.order, start=1)})

    @staticmethod
    def from_scores(scores: Mapping[str, float]) -> "Ranking":
        """Best-first ordering by descending score, ties broken by target id."""
        return Ranking(tuple(sorted(scores, key=lambda t: (-scores[t], t))))

    def __len__(self) -> int:
        return len(self.order)

    def rank(self, target: str) -> int:
        return self._rank[target]

    def percentile(self, target: str) -> float:
        return self._rank[target] / len(self.order)

    def targets(self) -> frozenset[str]:
        return frozenset(self.order)


def _check_same_targets(estimate: Ranking, truth: Ranking) -> None:
    if estimate.targets() != truth.targets():
        raise MetricsError("estimate and truth rank different target sets")


def ndcg_at_k(estimate: Ranking, truth: Ranking, k: int) -> float:
    """Discounted-gain overlap of the top k, with linear gain n - true rank."""
    _check_same_targets(estimate, truth)
    n = len(truth)
    if not (1 <= k <= n):
        raise MetricsError(f"k must be in [1, {n}], got {k}")
    dcg = 0.0
    idcg = 0.0
    for p in range(1, k + 1):
        discount = math.log2(p + 1)
        dcg += (n - truth.rank(estimate.order[p - 1])) / discount
        idcg += (n - p) / discount
    if idcg == 0.0:
        return 1.0  # n == 1: the only possible ranking is perfect
    return dcg / idcg


def auc_ndcg(estimate: Ranking, truth: Ranking) -> float:
    """Mean of ndcg_at_k over every cutoff k = 1..n."""
    _check_same_targets(estimate, truth)
    n = len(truth)
    return sum(ndcg_at_k(estimate, truth, k) for k in range(1, n + 1)) / n


def mape_percentile(estimate: Ranking, truth: Ranking) -> float:
    """Mean |estimated - true percentile| / true percentile over all targets."""
    _check_same_targets(estimate, truth)
    total = 0.0
    for target in truth.order:
        true_pct = truth.percentile(target)
        total += abs(estimate.percentile(target) - true_pct) / true_pct
    return total / len(truth)


ScoresLike = Union[Ranking, Mapping[str, float], Sequence[float], np.ndarray]


def _aligned(a: ScoresLike, b: ScoresLike) -> tuple[np.ndarray, np.ndarray]:
    """Coerce two score-likes onto a common target axis (higher = better)."""

    def keys(x: ScoresLike):
        if isinstance(x, Ranking):
            return x.targets()
        if isinstance(x, Mapping):
            return frozenset(x)
        return None

    ka, kb = keys(a), keys(b)
    if (ka is None) != (kb is None):
        raise MetricsError("cannot mix keyed scores with plain sequences")
    if ka is not None:
        if ka != kb:
            raise MetricsError("score maps cover different target sets")
        targets = sorted(ka)

        def vec(x: ScoresLike) -> np.ndarray:
            if isinstance(x, Ranking):
                return np.array([len(x) - x.rank(t) for t in targets], dtype=float)
            return np.array([x[t] for t in targets], dtype=float)

        return vec(a), vec(b)
    va = np.asarray(a, dtype=float)
    vb = np.asarray(b, dtype=float)
    if va.shape != vb.shape or va.ndim != 1:
        raise MetricsError(f"score vectors must be 1-d and equal length, got {va.shape} vs {vb.shape}")
    return va, vb


def spearman(a: ScoresLike, b: ScoresLike) -> float:
    """Pearson correlation of average-tied ranks."""
    va, vb = _aligned(a, b)
    ra = rankdata(va)
    rb = rankdata(vb)
    sa = ra.std()
    sb = rb.std()
    if sa == 0.0 or sb == 0.0:
        return 0.0
    return float(np.mean((ra - ra.mean()) * (rb - rb.mean())) / (sa * sb))


def _merge_count(values: list[float]) -> int:
    """Number of strict inversions, counted during a bottom-up merge sort."""
    n = len(values)
    work = list(values)
    buf = [0.0] * n
    inversions = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if work[j] < work[i]:
                    buf[k] = work[j]
                    inversions += mid - i
                    j += 1
                else:
                    buf[k] = work[i]
                    i += 1
                k += 1
            buf[k:hi] = work[i:mid] if i < mid else work[j:hi]
            work[lo:hi] = buf[lo:hi]
        width *= 2
    return inversions


def _tie_pairs(sorted_values: Sequence) -> int:
    total = 0
    run = 1
    for prev, cur in zip(sorted_values, sorted_values[1:]):
        if cur == prev:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    total += run * (run - 1) // 2
    return total


def kendall_tau(a: ScoresLike, b: ScoresLike) -> float:
    """Tie-corrected (tau-b) rank correlation in O(n log n) via merge counting."""
    va, vb = _aligned(a, b)
    n = len(va)
    if n < 2:
        return 0.0
    order = np.lexsort((vb, va))
    x = va[order]
    y = vb[order]
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(x.tolist())
    n2 = _tie_pairs(sorted(y.tolist()))
    pairs_xy = list(zip(x.tolist(), y.tolist()))
    n3 = _tie_pairs(sorted(pairs_xy))
    discordant = _merge_count(y.tolist())
    numerator = n0 - n1 - n2 + n3 - 2 * discordant
    denom_sq = (n0 - n1) * (n0 - n2)
    if denom_sq <= 0:
        return 0.0
    return numerator / math.sqrt(denom_sq)


def eval_report(estimate: Ranking, truth: Ranking) -> dict[str, float]:
    """All four measures in one machine-readable record."""
    return {
        "auc_ndcg": auc_ndcg(estimate, truth),
        "mape": mape_percentile(estimate, truth),
        "spearman": spearman(estimate, truth),
        "kendall": kendall_tau(estimate, truth),
    }
