"""Nonparametric ranking and comparison machinery.

Scott-Knott clustering with an effect-size gate: sorted groups are split
recursively at the boundary with the largest between-group sum of squares,
and a split survives only when the pooled Cohen's d across the boundary
reaches the threshold. Pairwise comparison uses the Wilcoxon signed-rank
test (exact by sign enumeration for small n, tie-corrected normal
approximation otherwise), Cliff's delta with 0.33/0.66 magnitude bands,
and Bonferroni-adjusted significance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class StatsError(ValueError):
    """Raised for degenerate or malformed statistical inputs."""


@dataclass(frozen=True)
class SampleGroup:
    group_id: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise StatsError(f"group {self.group_id!r} has no values")
        if any(not math.isfinite(v) for v in self.values):
            raise StatsError(f"group {self.group_id!r} has non-finite values")

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))


@dataclass(frozen=True)
class RankEntry:
    group_id: str
    rank: int
    mean: float


@dataclass(frozen=True)
class RankTable:
    metric_name: str
    direction: str
    entries: tuple[RankEntry, ...]

    def rank_of(self, group_id: str) -> int:
        for e in self.entries:
            if e.group_id == group_id:
                return e.rank
        raise KeyError(group_id)


@dataclass(frozen=True)
class WilcoxonResult:
    w: float
    p_value: float
    n_used: int
    n_zeros_dropped: int
    mode_used: str

    def __iter__(self):
        return iter((self.w, self.p_value))


@dataclass(frozen=True)
class CliffsDeltaResult:
    delta: float
    magnitude: str
    is_zero: bool

    def __iter__(self):
        return iter((self.delta, self.magnitude))


@dataclass(frozen=True)
class BonferroniEntry:
    p_value: float
    alpha_adjusted: float
    significant: bool


@dataclass(frozen=True)
class ComparisonResult:
    """One pairwise test: Wilcoxon W and p, adjusted alpha, Cliff's delta.

    ``no_difference`` marks the degenerate case of identical paired values,
    reported as p = 1 rather than an error so full comparison tables can
    still be emitted.
    """

    pair: tuple[str, str]
    metric_name: str
    statistic_w: float
    p_value: float
    alpha_adjusted: float
    significant: bool
    cliffs_delta: float
    magnitude: str
    delta_is_zero: bool = False
    no_difference: bool = False


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """Standardized mean difference with pooled sample-variance sd."""
    if len(a) < 2 or len(b) < 2:
        raise StatsError("cohens_d requires at least two values per sample")
    sd = _pooled_sd(a, b)
    if sd == 0.0:
        raise StatsError("zero pooled variance: effect size undefined")
    return (float(np.mean(a)) - float(np.mean(b))) / sd


def _pooled_sd(a: Sequence[float], b: Sequence[float]) -> float:
    na, nb = len(a), len(b)
    va = float(np.var(a, ddof=1))
    vb = float(np.var(b, ddof=1))
    return math.sqrt(((na - 1) * va + (nb - 1) * vb) / (na + nb - 2))


def _gate_effect(a: Sequence[float], b: Sequence[float]) -> float:
    """|d| for the split gate; degenerate spread maps to 0 or infinity.

    When both sides are constant, equal means are one population (no
    split) and different means are perfectly separated (always split).
    """
    sd = _pooled_sd(a, b)
    diff = float(np.mean(a)) - float(np.mean(b))
    if sd == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return abs(diff / sd)


def sk_esd_rank(
    groups: Sequence[SampleGroup],
    direction: str = "higher",
    d_threshold: float = 0.2,
    metric_name: str = "",
) -> RankTable:
    """Cluster groups into ranks; statistically similar groups share one.

    Groups are ordered best-first by mean (``direction`` is "higher" or
    "lower"), ties broken by group id. Each segment is split at the
    boundary maximizing the between-group sum of squares, and the split is
    kept only if the boundary effect size reaches ``d_threshold``.
    """
    if direction not in ("higher", "lower"):
        raise StatsError(f"direction must be 'higher' or 'lower', got {direction!r}")
    if not groups:
        raise StatsError("no groups to rank")
    for g in groups:
        if len(g.values) < 2:
            raise StatsError(f"group {g.group_id!r} needs at least 2 values")
    reverse = direction == "higher"
    ordered = sorted(groups, key=lambda g: ((-g.mean if reverse else g.mean), g.group_id))

    clusters: list[list[SampleGroup]] = []
    _split(ordered, d_threshold, clusters)
    entries: list[RankEntry] = []
    for rank, cluster in enumerate(clusters, start=1):
        entries.extend(RankEntry(group_id=g.group_id, rank=rank, mean=g.mean) for g in cluster)
    return RankTable(metric_name=metric_name, direction=direction, entries=tuple(entries))


def _split(segment: list[SampleGroup], d_threshold: float, clusters: list[list[SampleGroup]]) -> None:
    if len(segment) == 1:
        clusters.append(segment)
        return
    values = [np.asarray(g.values, dtype=float) for g in segment]
    total = np.concatenate(values)
    grand_mean = total.mean()

    best_i, best_bss = 0, -math.inf
    left_n, left_sum = 0, 0.0
    for i in range(1, len(segment)):
        left_n += values[i - 1].size
        left_sum += float(values[i - 1].sum())
        right_n = total.size - left_n
        right_sum = float(total.sum()) - left_sum
        bss = left_n * (left_sum / left_n - grand_mean) ** 2 + right_n * (right_sum / right_n - grand_mean) ** 2
        if bss > best_bss:
            best_bss, best_i = bss, i

    left = np.concatenate(values[:best_i])
    right = np.concatenate(values[best_i:])
    if _gate_effect(left, right) >= d_threshold:
        _split(segment[:best_i], d_threshold, clusters)
        _split(segment[best_i:], d_threshold, clusters)
    else:
        clusters.append(segment)


def wilcoxon_signed_rank(
    x: Sequence[float],
    y: Sequence[float],
    mode: str = "auto",
) -> WilcoxonResult:
    """Two-sided paired signed-rank test; W is min(W+, W-).

    Zero differences are dropped (their count is reported). ``exact``
    enumerates all 2^n sign assignments; ``approx`` uses the normal
    approximation with tie-corrected variance and a 0.5 continuity
    correction. ``auto`` picks exact for n <= 12.
    """
    if len(x) != len(y) or not x:
        raise StatsError("wilcoxon requires non-empty paired samples of equal length")
    if mode not in ("auto", "exact", "approx"):
        raise StatsError(f"unknown mode {mode!r}")

    diffs = [float(a) - float(b) for a, b in zip(x, y)]
    nonzero = [d for d in diffs if d != 0.0]
    n_zeros = len(diffs) - len(nonzero)
    n = len(nonzero)
    if n == 0:
        raise StatsError("all paired differences are zero: no test possible")

    ranks = _average_ranks([abs(d) for d in nonzero])
    w_plus = sum(r for r, d in zip(ranks, nonzero) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, nonzero) if d < 0)
    w = min(w_plus, w_minus)

    if mode == "auto":
        mode = "exact" if n <= 12 else "approx"
    if mode == "exact":
        if n > 20:
            raise StatsError(f"exact enumeration infeasible for n={n} (max 20)")
        p = _exact_p(ranks, w)
    else:
        p = _approx_p(ranks, w)
    return WilcoxonResult(w=w, p_value=p, n_used=n, n_zeros_dropped=n_zeros, mode_used=mode)


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j + 2) / 2  # ranks are 1-based
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _exact_p(ranks: Sequence[float], w_obs: float) -> float:
    """Exact two-sided p over all sign assignments of the observed ranks.

    Works on the distribution of W+ built by convolution; doubling every
    rank keeps the support integral even with .5 average ranks.
    """
    scaled = [int(round(2 * r)) for r in ranks]
    total = sum(scaled)
    dist = np.zeros(total + 1, dtype=np.float64)
    dist[0] = 1.0
    for r in scaled:
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[: total + 1 - r]
        dist = dist + shifted
    n_assignments = 2 ** len(ranks)
    w2 = int(round(2 * w_obs))
    hits = 0.0
    for w_plus2, count in enumerate(dist):
        if count and min(w_plus2, total - w_plus2) <= w2:
            hits += count
    return hits / n_assignments


def _approx_p(ranks: Sequence[float], w_obs: float) -> float:
    n = len(ranks)
    mean_w = n * (n + 1) / 4
    var_w = n * (n + 1) * (2 * n + 1) / 24
    # Tie correction over groups of equal |d|.
    counts: dict[float, int] = {}
    for r in ranks:
        counts[r] = counts.get(r, 0) + 1
    var_w -= sum(t**3 - t for t in counts.values()) / 48
    if var_w <= 0:
        raise StatsError("degenerate variance in normal approximation")
    z = (w_obs - mean_w + 0.5) / math.sqrt(var_w)
    p = math.erfc(-z / math.sqrt(2))  # = 2 * Phi(z) for z <= 0
    return min(1.0, max(p, math.ulp(0.0)))


#: Cliff's delta magnitude thresholds: small through 0.33, medium through 0.66.
CLIFFS_SMALL = 0.33
CLIFFS_MEDIUM = 0.66


def cliffs_delta(x: Sequence[float], y: Sequence[float]) -> CliffsDeltaResult:
    """Dominance effect size: (#(x>y) - #(x<y)) / (|x||y|), with magnitude."""
    if not x or not y:
        raise StatsError("cliffs_delta requires non-empty samples")
    xa = np.asarray(x, dtype=float)[:, None]
    ya = np.asarray(y, dtype=float)[None, :]
    greater = int(np.count_nonzero(xa > ya))
    less = int(np.count_nonzero(xa < ya))
    delta = (greater - less) / (len(x) * len(y))
    mag = abs(delta)
    if mag <= CLIFFS_SMALL:
        magnitude = "small"
    elif mag <= CLIFFS_MEDIUM:
        magnitude = "medium"
    else:
        magnitude = "large"
    return CliffsDeltaResult(delta=delta, magnitude=magnitude, is_zero=delta == 0.0)


def bonferroni(p_values: Sequence[float], alpha: float, m: int | None = None) -> list[BonferroniEntry]:
    """Adjust for a family of ``m`` tests (defaults to len(p_values))."""
    if not 0 < alpha < 1:
        raise StatsError(f"alpha must be in (0, 1), got {alpha}")
    if not p_values:
        raise StatsError("no p-values to adjust")
    family = m if m is not None else len(p_values)
    if family < 1:
        raise StatsError(f"family size must be >= 1, got {family}")
    out = []
    for p in p_values:
        if not 0 <= p <= 1:
            raise StatsError(f"p-value outside [0, 1]: {p}")
        adjusted = alpha / family
        out.append(BonferroniEntry(p_value=p, alpha_adjusted=adjusted, significant=p < adjusted))
    return out
