"""Cost- and statistic-driven offline detectors: RMDM, binary segmentation, PELT.

RMDM recursively splits a series at the index maximizing the two-sample
t-statistic between the left and right subsequences, accepting a split only
when its significance (a numerical approximation for the distribution of the
maximum t) exceeds a threshold. Binary segmentation and PELT both minimize a
penalized segment-cost objective; binary segmentation greedily, PELT exactly
via pruned dynamic programming.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special, stats

from ..series import ChangepointResult, RRSeries, zscore

logger = logging.getLogger(__name__)

__all__ = [
    "RmdmConfig",
    "CostPenaltyConfig",
    "COST_KINDS",
    "PENALTY_KINDS",
    "rmdm_t_statistic",
    "rmdm_significance",
    "rmdm_detect",
    "binseg_detect",
    "pelt_detect",
    "segment_cost",
    "penalty_value",
    "optimal_partition",
    "segmentation_objective",
]

COST_KINDS = ("mean", "mean_and_variance", "rms", "linear")
PENALTY_KINDS = ("aic", "bic", "hannan_quinn", "manual")

# Parameters-per-segment implied by each cost, used in the penalty formulas.
COST_NUM_PARAMS = {"mean": 1, "mean_and_variance": 2, "rms": 1, "linear": 2}
# Shortest segment on which each cost is well defined.
COST_MIN_LEN = {"mean": 1, "mean_and_variance": 2, "rms": 1, "linear": 3}

_VAR_FLOOR = 1e-12

# The significance model's exponent gamma = 4.19*ln(N) - 11.54 is positive
# only for N >= 16; shorter segments cannot be scored.
RMDM_MIN_N = 16


@dataclass(frozen=True)
class RmdmConfig:
    """RMDM parameters: significance threshold and minimum segment length."""

    p0: float = 0.95
    l0: int = 7

    def __post_init__(self) -> None:
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")
        if self.l0 < 2:
            raise ValueError("l0 must be >= 2")


@dataclass(frozen=True)
class CostPenaltyConfig:
    """Cost function and penalty selection for binary segmentation / PELT."""

    cost: str = "mean"
    penalty: str = "bic"
    beta: float | None = None  # only for penalty="manual"

    def __post_init__(self) -> None:
        if self.cost not in COST_KINDS:
            raise ValueError(f"unknown cost {self.cost!r}; expected one of {COST_KINDS}")
        if self.penalty not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty {self.penalty!r}; expected one of {PENALTY_KINDS}")
        if self.penalty == "manual":
            if self.beta is None or self.beta < 0:
                raise ValueError("manual penalty requires beta >= 0")
        elif self.beta is not None:
            raise ValueError("beta is only meaningful for penalty='manual'")

    @property
    def num_params(self) -> int:
        return COST_NUM_PARAMS[self.cost]


def penalty_value(penalty: str, p: int, n: int, beta: float | None = None) -> float:
    """Penalty beta for adding one segment: AIC 2p, BIC p*ln(N), Hannan-Quinn 2p*ln(ln(N))."""
    if penalty == "aic":
        return 2.0 * p
    if penalty == "bic":
        return p * math.log(n)
    if penalty == "hannan_quinn":
        return 2.0 * p * math.log(math.log(n))
    if penalty == "manual":
        if beta is None:
            raise ValueError("manual penalty requires beta")
        return float(beta)
    raise ValueError(f"unknown penalty {penalty!r}")


# ---------------------------------------------------------------------------
# RMDM
# ---------------------------------------------------------------------------


def _sum_sq_dev(x: np.ndarray) -> float:
    mu = x.mean()
    return float(((x - mu) ** 2).sum())


def rmdm_t_statistic(left: Sequence[float], right: Sequence[float]) -> float:
    """Two-sample t-statistic |mu1 - mu2| / sqrt(sigma_P) with pooled variance.

    sigma_P = ((V(S1) + V(S2)) / (N1 + N2 - 2)) * (1/N1 + 1/N2), where V is
    the sum of squared deviations. A zero pooled variance yields +inf when
    the means differ and 0 when they are equal.
    """
    a = np.asarray(left, dtype=np.float64)
    b = np.asarray(right, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("both sides need at least 2 samples")
    n1, n2 = a.size, b.size
    diff = abs(a.mean() - b.mean())
    pooled = (_sum_sq_dev(a) + _sum_sq_dev(b)) / (n1 + n2 - 2) * (1.0 / n1 + 1.0 / n2)
    if pooled <= 0.0:
        return math.inf if diff > 0.0 else 0.0
    return diff / math.sqrt(pooled)


def rmdm_significance(t_max: float, n: int) -> float:
    """Probability that the maximum t-statistic over a segment of length n stays below t_max.

    Uses the numerical approximation {1 - I_[nu/(nu+t^2)](d*nu, d)}^g with
    d = 0.40, nu = n - 1 and g = 4.19*ln(n) - 11.54, where I is the
    regularized incomplete beta function.
    """
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    if n < 4:
        raise ValueError("n must be >= 4")
    g = 4.19 * math.log(n) - 11.54
    if g <= 0:
        raise ValueError("series too short for significance model")
    delta = 0.40
    nu = n - 1
    if math.isinf(t_max):
        return 1.0
    x = nu / (nu + t_max * t_max)
    base = 1.0 - special.betainc(delta * nu, delta, x)
    if base <= 0.0:
        return 0.0
    return float(base**g)


def _pair_significance(t_value: float, n_total: int) -> float:
    """Ordinary two-sample t-test significance P(|T| <= t) with N-2 dof."""
    if math.isinf(t_value):
        return 1.0
    nu = n_total - 2
    return float(1.0 - 2.0 * stats.t.sf(t_value, nu))


def _rmdm_scan(x: np.ndarray, lo: int, hi: int, l0: int) -> tuple[int, float] | None:
    """Best split index and t value in segment [lo, hi), or None if too short."""
    n = hi - lo
    if n < 2 * l0:
        return None
    seg = x[lo:hi]
    cs = np.cumsum(seg)
    cq = np.cumsum(seg * seg)
    # candidate left sizes k = l0 .. n - l0 (split at local offset k)
    k = np.arange(l0, n - l0 + 1, dtype=np.float64)
    n2 = n - k
    s1 = cs[l0 - 1 : n - l0]
    q1 = cq[l0 - 1 : n - l0]
    s2 = cs[-1] - s1
    q2 = cq[-1] - q1
    v1 = np.maximum(q1 - s1 * s1 / k, 0.0)
    v2 = np.maximum(q2 - s2 * s2 / n2, 0.0)
    pooled = (v1 + v2) / (n - 2) * (1.0 / k + 1.0 / n2)
    diff = np.abs(s1 / k - s2 / n2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(pooled > 0.0, diff / np.sqrt(pooled), np.where(diff > 0.0, np.inf, 0.0))
    best = int(np.argmax(t))  # lowest index wins ties
    return lo + l0 + best, float(t[best])


def rmdm_detect(series: RRSeries, config: RmdmConfig | None = None) -> ChangepointResult:
    """Recursive mean-difference maximization.

    At each level the candidate split is the index maximizing the two-sample
    t-statistic; it is accepted when (a) the maximum-t significance exceeds
    ``p0``, (b) both halves keep at least ``l0`` beats, and (c) an ordinary
    two-sample t-test between the two halves also exceeds ``p0``. Accepted
    halves are split recursively until no further split qualifies.
    """
    from . import DetectorConfig

    config = config or RmdmConfig()
    x = series.intervals
    detector = DetectorConfig(algo="rmdm", params=config)
    if series.n < 2 * config.l0:
        logger.warning("series too short for RMDM (n=%d < 2*l0=%d)", series.n, 2 * config.l0)
        return ChangepointResult(indices=(), scores=(), detector=detector, warning="series too short")

    found: list[tuple[int, float]] = []
    stack = [(0, series.n)]
    while stack:
        lo, hi = stack.pop()
        n = hi - lo
        if n < max(2 * config.l0, RMDM_MIN_N):
            continue
        scan = _rmdm_scan(x, lo, hi, config.l0)
        if scan is None:
            continue
        j, t_max = scan
        if rmdm_significance(t_max, n) <= config.p0:
            continue
        if _pair_significance(t_max, n) <= config.p0:
            continue
        found.append((j, t_max))
        stack.append((lo, j))
        stack.append((j, hi))

    found.sort()
    return ChangepointResult(
        indices=tuple(j for j, _ in found),
        scores=tuple(t for _, t in found),
        detector=detector,
    )


# ---------------------------------------------------------------------------
# Segment costs
# ---------------------------------------------------------------------------


def segment_cost(data: Sequence[float], cost: str) -> float:
    """Cost of modeling ``data`` as a single segment.

    mean
        Sum of squared deviations from the segment mean (Gaussian
        log-likelihood with fixed unit variance, up to constants).
    mean_and_variance
        ``n * log(var)`` with both Gaussian parameters free (up to
        constants additive in n).
    rms
        ``n * log(mean(x^2))``: zero-mean Gaussian with free variance,
        i.e. change detection on the root-mean-square level.
    linear
        Residual sum of squares of the least-squares line against the
        sample index.
    """
    x = np.asarray(data, dtype=np.float64)
    if cost not in COST_KINDS:
        raise ValueError(f"unknown cost {cost!r}")
    if x.size < COST_MIN_LEN[cost]:
        raise ValueError(f"cost {cost!r} needs at least {COST_MIN_LEN[cost]} samples")
    n = x.size
    if cost == "mean":
        return _sum_sq_dev(x)
    if cost == "mean_and_variance":
        return n * math.log(max(x.var(), _VAR_FLOOR))
    if cost == "rms":
        return n * math.log(max(float((x * x).mean()), _VAR_FLOOR))
    # linear
    t = np.arange(n, dtype=np.float64)
    tc = t - t.mean()
    xc = x - x.mean()
    sxx = float((tc * tc).sum())
    sxy = float((tc * xc).sum())
    return float((xc * xc).sum()) - sxy * sxy / sxx


class _CostModel:
    """Prefix-sum evaluation of segment costs over one array.

    ``cost(a, b)`` is the cost of x[a:b] for vectorized arrays of interval
    bounds; agrees with :func:`segment_cost` on every window.
    """

    def __init__(self, x: np.ndarray, kind: str):
        self.kind = kind
        self.n = x.size
        self.min_len = COST_MIN_LEN[kind]
        self._s = np.concatenate([[0.0], np.cumsum(x)])
        self._q = np.concatenate([[0.0], np.cumsum(x * x)])
        if kind == "linear":
            t = np.arange(self.n, dtype=np.float64)
            self._st = np.concatenate([[0.0], np.cumsum(t)])
            self._sq = np.concatenate([[0.0], np.cumsum(t * t)])
            self._sxt = np.concatenate([[0.0], np.cumsum(t * x)])

    def cost(self, a, b):
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        n = (b - a).astype(np.float64)
        s = self._s[b] - self._s[a]
        q = self._q[b] - self._q[a]
        if self.kind == "mean":
            return np.maximum(q - s * s / n, 0.0)
        if self.kind == "mean_and_variance":
            v = np.maximum(q / n - (s / n) ** 2, _VAR_FLOOR)
            return n * np.log(v)
        if self.kind == "rms":
            return n * np.log(np.maximum(q / n, _VAR_FLOOR))
        st = self._st[b] - self._st[a]
        sq = self._sq[b] - self._sq[a]
        sxt = self._sxt[b] - self._sxt[a]
        sxx = sq - st * st / n
        sxy = sxt - st * s / n
        syy = np.maximum(q - s * s / n, 0.0)
        return np.maximum(syy - sxy * sxy / np.maximum(sxx, 1e-30), 0.0)


def _resolve_beta(config: CostPenaltyConfig, n: int) -> float:
    return penalty_value(config.penalty, config.num_params, n, config.beta)


def binseg_detect(series: RRSeries, config: CostPenaltyConfig | None = None) -> ChangepointResult:
    """Greedy recursive splitting: accept the best split of each segment while
    ``C(left) + C(right) + beta < C(segment)``.

    Input is standardized (z-scored) before costing so the unit-variance
    ``mean`` cost is on the scale the penalty formulas assume.
    """
    from . import DetectorConfig

    config = config or CostPenaltyConfig()
    if series.n < 4:
        raise ValueError("series length must be >= 4")
    x = zscore(series.intervals)
    model = _CostModel(x, config.cost)
    beta = _resolve_beta(config, series.n)
    m = model.min_len

    found: list[tuple[int, float]] = []
    stack = [(0, series.n)]
    while stack:
        lo, hi = stack.pop()
        if hi - lo < 2 * m:
            continue
        taus = np.arange(lo + m, hi - m + 1)
        if taus.size == 0:
            continue
        total = model.cost(np.full_like(taus, lo), taus) + model.cost(taus, np.full_like(taus, hi))
        best = int(np.argmin(total))  # lowest index wins ties
        whole = float(model.cost(lo, hi))
        gain = whole - float(total[best])
        if gain > beta:
            tau = int(taus[best])
            found.append((tau, gain - beta))
            stack.append((lo, tau))
            stack.append((tau, hi))

    found.sort()
    return ChangepointResult(
        indices=tuple(j for j, _ in found),
        scores=tuple(g for _, g in found),
        detector=DetectorConfig(algo="binseg", params=config),
    )


def _pelt_core(model: _CostModel, beta: float) -> tuple[list[int], float]:
    """Exact penalized-cost minimizer with PELT pruning (K = 0).

    Returns the changepoint list and the optimal objective
    ``sum_k C(segment_k) + beta * (#changepoints)``.

    A candidate whose prune condition fires at step s is only dropped from
    step ``s + min_len`` on (before that, s itself is not yet an admissible
    replacement), which keeps the recursion exact for costs whose minimum
    segment length exceeds 1. Pruning uses a strict inequality so tied
    candidates survive and the backtrack matches un-pruned dynamic
    programming exactly.
    """
    n = model.n
    m = model.min_len
    F = np.full(n + 1, np.inf)
    F[0] = -beta
    prev = np.zeros(n + 1, dtype=np.int64)
    cands: list[int] = [0]  # kept sorted ascending
    prune_at: dict[int, int] = {}
    for s in range(m, n + 1):
        newest = s - m  # segment [newest, s) reaches the minimum length now
        if newest > 0 and np.isfinite(F[newest]):
            cands.append(newest)
        cands = [t for t in cands if prune_at.get(t, n + 2) > s]
        ts = np.asarray(cands, dtype=np.int64)
        vals = F[ts] + model.cost(ts, np.full_like(ts, s)) + beta
        best = int(np.argmin(vals))  # lowest start wins ties
        F[s] = float(vals[best])
        prev[s] = int(ts[best])
        for t, v in zip(cands, vals):
            if v - beta > F[s] and t not in prune_at:
                prune_at[t] = s + m
    cps = []
    s = n
    while s > 0:
        t = int(prev[s])
        if t == 0:
            break
        cps.append(t)
        s = t
    cps.reverse()
    return cps, float(F[n])


def pelt_detect(series: RRSeries, config: CostPenaltyConfig | None = None) -> ChangepointResult:
    """Exact minimizer of the penalized segmentation objective via PELT.

    Same standardization and cost conventions as :func:`binseg_detect`; the
    result is the global optimum of ``sum_k C(S_k) + beta * (#cps)``.
    """
    from . import DetectorConfig

    config = config or CostPenaltyConfig()
    if series.n < 4:
        raise ValueError("series length must be >= 4")
    x = zscore(series.intervals)
    model = _CostModel(x, config.cost)
    beta = _resolve_beta(config, series.n)
    cps, _ = _pelt_core(model, beta)
    return ChangepointResult(
        indices=tuple(cps),
        scores=None,
        detector=DetectorConfig(algo="pelt1" if config.cost != "rms" else "pelt2", params=config),
    )


def optimal_partition(x: np.ndarray, config: CostPenaltyConfig) -> tuple[list[int], float]:
    """Un-pruned optimal-partitioning dynamic program (oracle-grade, O(n^2)).

    Operates on the array as given (no standardization); same cost model as
    the PELT path.
    """
    model = _CostModel(np.asarray(x, dtype=np.float64), config.cost)
    beta = _resolve_beta(config, model.n)
    n = model.n
    m = model.min_len
    F = np.full(n + 1, np.inf)
    F[0] = -beta
    prev = np.zeros(n + 1, dtype=np.int64)
    for s in range(m, n + 1):
        ts = np.arange(0, s - m + 1, dtype=np.int64)
        ok = np.isfinite(F[ts])
        ts = ts[ok]
        if ts.size == 0:
            continue
        vals = F[ts] + model.cost(ts, np.full_like(ts, s)) + beta
        best = int(np.argmin(vals))
        F[s] = float(vals[best])
        prev[s] = int(ts[best])
    cps = []
    s = n
    while s > 0:
        t = int(prev[s])
        if t == 0:
            break
        cps.append(t)
        s = t
    cps.reverse()
    return cps, float(F[n])


def segmentation_objective(x: np.ndarray, changepoints: Sequence[int], config: CostPenaltyConfig) -> float:
    """Penalized cost of a given segmentation under the config's cost/penalty."""
    x = np.asarray(x, dtype=np.float64)
    model = _CostModel(x, config.cost)
    beta = _resolve_beta(config, x.size)
    bounds = [0, *sorted(int(c) for c in changepoints), x.size]
    total = 0.0
    for a, b in zip(bounds, bounds[1:]):
        total += float(model.cost(a, b))
    return total + beta * (len(bounds) - 2)
