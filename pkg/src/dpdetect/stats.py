"""Hypergeometric tails, binomial thinning and the thinned Fisher p-values."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .core import InvalidParameterError, Phase, stream
from .runner import count_event

#: default number of thinning draws averaged per p-value
DEFAULT_RESAMPLES = 10

# pmf terms further than this many standard deviations beyond the summation
# start are below exp(-72) of the first term and are skipped
_TAIL_SDS = 12.0


@dataclass(frozen=True)
class CountPair:
    c1: int
    c2: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameterError("n must be positive")
        if not (0 <= self.c1 <= self.n and 0 <= self.c2 <= self.n):
            raise InvalidParameterError(f"counts ({self.c1}, {self.c2}) must lie in [0, {self.n}]")


@dataclass(frozen=True)
class PValuePair:
    p_top: float
    p_bot: float
    counts: Optional[CountPair] = None

    @property
    def min_p(self) -> float:
        return min(self.p_top, self.p_bot)


def _lchoose(n, k):
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def _tail_sum(lo: int, hi: int, M: int, K: int, s: int) -> float:
    """Sum of the hypergeometric pmf over the integer range [lo, hi]."""
    if hi < lo:
        return 0.0
    x = np.arange(lo, hi + 1, dtype=float)
    logp = _lchoose(K, x) + _lchoose(M - K, s - x) - _lchoose(M, s)
    return float(np.exp(logp).sum())


def hypergeom_cdf(k: int, M: int, K: int, s: int) -> float:
    """P(X <= k) for X ~ Hypergeometric(population M, successes K, draws s).

    The pmf is accumulated in log space over the smaller of the two tails,
    so the result is accurate for populations in the millions. ``k`` may be
    an array, in which case the whole support is evaluated once.
    """
    if M < 1:
        raise InvalidParameterError("population must be positive")
    if not 0 <= K <= M:
        raise InvalidParameterError(f"successes K={K} must lie in [0, M={M}]")
    if not 0 <= s <= M:
        raise InvalidParameterError(f"draws s={s} must lie in [0, M={M}]")
    lo = max(0, s - (M - K))
    hi = min(K, s)
    if np.ndim(k) > 0:
        return _cdf_many(np.asarray(k), lo, hi, M, K, s)
    if k < lo:
        return 0.0
    if k >= hi:
        return 1.0
    k = int(k)
    mean = s * K / M
    sd = math.sqrt(s * (K / M) * (1 - K / M) * (M - s) / max(M - 1, 1))
    width = int(_TAIL_SDS * sd) + 50
    if k < mean:
        return min(1.0, _tail_sum(max(lo, k - width), k, M, K, s))
    upper = _tail_sum(k + 1, min(hi, k + 1 + width), M, K, s)
    return max(0.0, 1.0 - upper)


def _cdf_many(ks: np.ndarray, lo: int, hi: int, M: int, K: int, s: int) -> np.ndarray:
    x = np.arange(lo, hi + 1, dtype=float)
    pmf = np.exp(_lchoose(K, x) + _lchoose(M - K, s - x) - _lchoose(M, s))
    lower = np.cumsum(pmf)
    above = np.concatenate([np.cumsum(pmf[::-1])[::-1][1:], [0.0]])  # P(X > x)
    idx = np.clip(ks - lo, 0, hi - lo).astype(np.int64)
    out = np.where(ks < s * K / M, lower[idx], 1.0 - above[idx])
    out = np.clip(out, 0.0, 1.0)
    out[ks < lo] = 0.0
    out[ks >= hi] = 1.0
    return out


def fisher_tail(c1: int, c2: int, n: int) -> float:
    """One-sided Fisher p-value for H0: p1 <= p2 given counts out of n each."""
    return 1.0 - hypergeom_cdf(c1 - 1, 2 * n, n, c1 + c2)


def thin(c, epsilon: float, rng: np.random.Generator, size=None):
    """Keep each of ``c`` successes independently with probability exp(-epsilon)."""
    return rng.binomial(c, math.exp(-epsilon), size=size)


def pvalue(c1: int, c2: int, n: int, epsilon: float, rng: np.random.Generator,
           resamples: int = DEFAULT_RESAMPLES) -> float:
    """Thinned Fisher p-value for H0: P(M(D1) in E) <= e^epsilon * P(M(D2) in E).

    ``c1`` is thinned ``resamples`` times and the resulting Fisher tail
    probabilities are averaged.
    """
    CountPair(c1, c2, n)
    if epsilon < 0:
        raise InvalidParameterError("epsilon must be non-negative")
    if resamples < 1:
        raise InvalidParameterError("resamples must be positive")
    if c1 == 0:
        return 1.0
    total = 0.0
    for ct in thin(c1, epsilon, rng, size=resamples):
        total += 1.0 - hypergeom_cdf(int(ct) - 1, 2 * n, n, int(ct) + c2)
    return min(1.0, total / resamples)


def pvalue_pair(c1: int, c2: int, n: int, epsilon: float, rng: np.random.Generator,
                resamples: int = DEFAULT_RESAMPLES) -> PValuePair:
    return PValuePair(pvalue(c1, c2, n, epsilon, rng, resamples),
                      pvalue(c2, c1, n, epsilon, rng, resamples),
                      CountPair(c1, c2, n))


def approx_z(c1, c2, n: int, epsilon: float):
    """Normal-approximation z-score of the thinned count excess (vectorised).

    Large positive values mean strong evidence that c1 is more than e^epsilon
    times c2. Used only to rank candidates before exact scoring.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    q = math.exp(-epsilon)
    t = c1 * q
    s = t + c2
    var = s * (2 * n - s) / (4.0 * max(2 * n - 1, 1)) + c1 * q * (1 - q) / 4.0
    return (t - s / 2.0) / np.sqrt(var + 0.25)


def hypothesis_test(mechanism, args, epsilon: float, pair, event, n: int, seed: int = 0, *,
                    point: int = 0, resamples: int = DEFAULT_RESAMPLES,
                    workers: int = 1) -> PValuePair:
    """Run the mechanism ``n`` times per side on fresh streams and test both directions."""
    if n < 1:
        raise InvalidParameterError("n must be positive")
    try:
        c1 = count_event(mechanism, pair.d1.as_array(), args, event, n, seed,
                         (point, Phase.DETECT, 0), workers)
        c2 = count_event(mechanism, pair.d2.as_array(), args, event, n, seed,
                         (point, Phase.DETECT, 1), workers)
    except InvalidParameterError:
        raise
    except Exception as exc:
        raise RuntimeError(f"{getattr(mechanism, 'name', mechanism)} failed while testing "
                           f"{event} on {pair.category.value}: {exc}") from exc
    return pvalue_pair(c1, c2, n, epsilon, stream(seed, point, Phase.DETECT_THIN), resamples)
