"""Statistical and information-theoretic kernels for certification."""

from __future__ import annotations

import math
from typing import Literal

import numpy as np
from scipy import optimize, special, stats

from .errors import InvalidArgumentError

# Probabilities handed to gaussian_quantile are clamped to [EPS, 1 - EPS].
QUANTILE_EPS = 1e-12

LN2 = math.log(2.0)

Probability = float


def gaussian_cdf(x: float) -> Probability:
    """Standard normal CDF."""
    if not math.isfinite(x):
        raise InvalidArgumentError(f"gaussian_cdf needs a finite input, got {x}")
    return float(special.ndtr(x))


def gaussian_quantile(p: Probability) -> float:
    """
    Inverse standard normal CDF.

    Raises:
        InvalidArgumentError: If p is not strictly inside (0, 1).
    """
    if not (0.0 < p < 1.0):
        raise InvalidArgumentError(
            f"gaussian_quantile domain is (0, 1), got {p}; clamp first"
        )
    return float(special.ndtri(p))


def clamp_probability(p: float, eps: float = QUANTILE_EPS) -> Probability:
    """Clamp into [eps, 1 - eps] so the quantile stays finite."""
    return min(max(p, eps), 1.0 - eps)


def _check_counts(k: int, n: int) -> None:
    if n < 0 or k < 0 or k > n:
        raise InvalidArgumentError(f"need 0 <= k <= n, got k={k}, n={n}")


def _log_pmf(j: np.ndarray, n: int, p: float) -> np.ndarray:
    log_choose = special.gammaln(n + 1) - special.gammaln(j + 1) - special.gammaln(n - j + 1)
    return log_choose + special.xlogy(j, p) + special.xlog1py(n - j, -p)


def binomial_cdf(k: int, n: int, p: Probability) -> Probability:
    """P(X <= k) for X ~ Binomial(n, p), summed in log space."""
    _check_counts(k, n)
    if not (0.0 <= p <= 1.0):
        raise InvalidArgumentError(f"p must lie in [0, 1], got {p}")
    if k == n:
        return 1.0
    j = np.arange(k + 1, dtype=np.float64)
    return float(min(1.0, math.exp(special.logsumexp(_log_pmf(j, n, p)))))


def binomial_upper_tail(k: int, n: int, p: Probability) -> Probability:
    """P(X >= k), summed directly so small tails keep their precision."""
    _check_counts(k, n)
    if k == 0:
        return 1.0
    j = np.arange(k, n + 1, dtype=np.float64)
    return float(min(1.0, math.exp(special.logsumexp(_log_pmf(j, n, p)))))


def clopper_pearson_lower(
    k: int,
    n: int,
    alpha: Probability,
    method: Literal["beta", "bisect"] = "beta",
) -> Probability:
    """
    One-sided (1 - alpha) Clopper-Pearson lower bound on a binomial proportion.

    The bound p solves P(X >= k | n, p) = alpha. Both methods honour the same
    contract: "beta" uses the inverse regularized incomplete beta, "bisect"
    inverts the exact log-space tail by bisection.
    """
    _check_counts(k, n)
    if n == 0:
        raise InvalidArgumentError("n must be at least 1")
    if not (0.0 < alpha < 1.0):
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    if k == 0:
        return 0.0

    if method == "beta":
        return float(stats.beta.ppf(alpha, k, n - k + 1))
    if method == "bisect":
        return float(optimize.bisect(
            lambda p: binomial_upper_tail(k, n, p) - alpha,
            0.0, 1.0, xtol=1e-15, maxiter=200,
        ))
    raise InvalidArgumentError(f"unknown method '{method}'")


def binomial_two_sided_pvalue(k_a: int, k_b: int) -> Probability:
    """Two-sided exact test of k_a successes in k_a + k_b trials against p = 1/2."""
    if k_b < 0 or k_a < k_b:
        raise InvalidArgumentError(f"need k_a >= k_b >= 0, got ({k_a}, {k_b})")
    if k_a + k_b == 0:
        raise InvalidArgumentError("both counts are zero")
    return float(min(1.0, stats.binomtest(k_a, k_a + k_b, 0.5).pvalue))


def validate_simplex(probs: np.ndarray, name: str = "probs") -> np.ndarray:
    """Return probs as a float array, checking it is a probability vector."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidArgumentError(f"{name} must be a non-empty vector")
    if np.any(arr < 0) or not math.isclose(float(arr.sum()), 1.0, abs_tol=1e-9):
        raise InvalidArgumentError(f"{name} is not on the simplex")
    return arr


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence in nats, bounded by ln 2."""
    p = validate_simplex(p, "p")
    q = validate_simplex(q, "q")
    if p.shape != q.shape:
        raise InvalidArgumentError(f"length mismatch: {p.size} vs {q.size}")
    m = 0.5 * (p + q)
    js = 0.5 * special.rel_entr(p, m).sum() + 0.5 * special.rel_entr(q, m).sum()
    return float(min(max(js, 0.0), LN2))
