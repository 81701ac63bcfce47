"""Monte Carlo randomized smoothing: sampling, PREDICT, CERTIFY and radii."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidArgumentError
from .model import NetworkParams, classify_batch
from .numerics import (
    binomial_two_sided_pvalue,
    clamp_probability,
    clopper_pearson_lower,
    gaussian_quantile,
)

ABSTAIN = -1

# Noise is drawn in fixed-size blocks, each from its own derived stream,
# so the count vector does not depend on how blocks are spread over workers.
SAMPLE_BLOCK = 4096

# Stream tags keep selection, estimation, dataset and variance draws disjoint.
STREAM_SELECTION = 0
STREAM_ESTIMATION = 1
STREAM_DATASET = 2
STREAM_VARIANCE_BASE = 16


@dataclass(frozen=True)
class SmoothingParams:
    """sigma, N, n0 and alpha of CERTIFY, plus the master seed."""
    sigma: float
    n: int
    n0: int = 100
    alpha: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgumentError(f"sigma must be positive, got {self.sigma}")
        if not (self.n >= self.n0 >= 1):
            raise InvalidArgumentError(f"need n >= n0 >= 1, got n={self.n}, n0={self.n0}")
        if not (0.0 < self.alpha < 1.0):
            raise InvalidArgumentError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.seed < 0:
            raise InvalidArgumentError(f"seed must be non-negative, got {self.seed}")

    def snapshot(self) -> dict:
        return asdict(self)


@dataclass
class CertOutcome:
    """
    Result of one certification.

    predicted is the class chosen by the selection pass (or ABSTAIN);
    count_top is the top class of the counts used for the bound.
    """
    decision: int
    radius: float
    p_a_lower: float
    elapsed: float
    predicted: int = ABSTAIN
    count_top: int = ABSTAIN

    @property
    def abstained(self) -> bool:
        return self.decision == ABSTAIN


def derive_rng(master_seed: int, example_id: int, stream: int, block: int) -> np.random.Generator:
    """Counter-based Philox generator keyed on (seed, example, stream, block)."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(example_id, stream, block))
    return np.random.Generator(np.random.Philox(seq))


def _count_block(
    f: NetworkParams,
    x: np.ndarray,
    sigma: float,
    size: int,
    seed: int,
    example_id: int,
    stream: int,
    block: int,
) -> np.ndarray:
    rng = derive_rng(seed, example_id, stream, block)
    noisy = x + rng.standard_normal((size, x.shape[0])) * sigma
    return np.bincount(classify_batch(f, noisy), minlength=f.num_classes)


def sample_counts(
    f: NetworkParams,
    x: np.ndarray,
    sigma: float,
    n: int,
    seed: int,
    example_id: int = 0,
    stream: int = STREAM_ESTIMATION,
    workers: int = 1,
) -> np.ndarray:
    """
    Class counts of f over n Gaussian perturbations of x.

    Args:
        f: Base classifier
        x: Clean input (d,)
        sigma: Noise standard deviation
        n: Number of noisy samples
        seed: Master seed
        example_id: Distinguishes per-example streams
        stream: Stream tag (selection, estimation, ...)
        workers: Threads the blocks are spread over; does not change the result

    Returns:
        Integer vector of length k summing to n.
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != f.input_dim:
        raise InvalidArgumentError(
            f"input has shape {x.shape}, base classifier expects ({f.input_dim},)"
        )

    sizes = [min(SAMPLE_BLOCK, n - start) for start in range(0, n, SAMPLE_BLOCK)]
    jobs = [(f, x, sigma, size, seed, example_id, stream, block) for block, size in enumerate(sizes)]

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(lambda job: _count_block(*job), jobs))
    else:
        partials = [_count_block(*job) for job in jobs]

    return np.sum(partials, axis=0).astype(np.int64)


def top_two(counts: np.ndarray) -> tuple[int, int]:
    """Indices of the two largest counts; ties go to the lowest index."""
    order = np.argsort(-np.asarray(counts), kind="stable")
    second = int(order[1]) if len(order) > 1 else int(order[0])
    return int(order[0]), second


def predict_from_counts(counts: np.ndarray, alpha: float) -> int:
    """Top class if the top-two split is significant at level alpha, else ABSTAIN."""
    c_a, c_b = top_two(counts)
    count_a = int(counts[c_a])
    count_b = int(counts[c_b]) if c_b != c_a else 0
    if count_a + count_b == 0:
        return ABSTAIN
    if binomial_two_sided_pvalue(count_a, count_b) <= alpha:
        return c_a
    return ABSTAIN


def predict(
    f: NetworkParams,
    x: np.ndarray,
    params: SmoothingParams,
    example_id: int = 0,
    workers: int = 1,
) -> int:
    """PREDICT with n0 selection samples."""
    counts = sample_counts(
        f, x, params.sigma, params.n0, params.seed,
        example_id=example_id, stream=STREAM_SELECTION, workers=workers,
    )
    return predict_from_counts(counts, params.alpha)


def radius_from_lower(p_a_lower: float, sigma: float) -> float:
    """sigma * Phi^-1(p_A); only meaningful for p_A > 1/2."""
    return sigma * gaussian_quantile(clamp_probability(p_a_lower))


def certify_mc(
    f: NetworkParams,
    x: np.ndarray,
    params: SmoothingParams,
    example_id: int = 0,
    workers: int = 1,
) -> CertOutcome:
    """
    Monte Carlo CERTIFY.

    The selection pass (n0 samples) picks the candidate class; a fresh
    estimation pass (n samples) bounds its probability from below.
    """
    start = time.perf_counter()
    selection = sample_counts(
        f, x, params.sigma, params.n0, params.seed,
        example_id=example_id, stream=STREAM_SELECTION, workers=workers,
    )
    c_hat = top_two(selection)[0]
    estimation = sample_counts(
        f, x, params.sigma, params.n, params.seed,
        example_id=example_id, stream=STREAM_ESTIMATION, workers=workers,
    )
    p_a_lower = clopper_pearson_lower(int(estimation[c_hat]), params.n, params.alpha)

    if p_a_lower > 0.5:
        decision, radius = c_hat, radius_from_lower(p_a_lower, params.sigma)
    else:
        decision, radius = ABSTAIN, 0.0

    return CertOutcome(
        decision=decision,
        radius=radius,
        p_a_lower=p_a_lower,
        elapsed=time.perf_counter() - start,
        predicted=c_hat,
        count_top=top_two(estimation)[0],
    )


def radius_two_sided(p_a_lower: float, p_b_upper: float, sigma: float) -> float:
    """sigma/2 * (Phi^-1(p_A) - Phi^-1(p_B)) for p_A >= p_B."""
    if not (0.0 < p_b_upper < 1.0 and 0.0 < p_a_lower < 1.0):
        raise InvalidArgumentError("probabilities must lie in (0, 1)")
    if p_a_lower < p_b_upper:
        raise InvalidArgumentError(
            f"need p_a_lower >= p_b_upper, got {p_a_lower} < {p_b_upper}"
        )
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    return 0.5 * sigma * (gaussian_quantile(p_a_lower) - gaussian_quantile(p_b_upper))
