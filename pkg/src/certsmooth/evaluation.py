"""
Evaluation harness.

Certified accuracy and ACR tables, the surrogate-vs-sampling estimation
report, the count-resampling variance study and the timing benchmark.
"""

from __future__ import annotations

import csv
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .certifiers import BaseCertifier, MonteCarloCertifier, SurrogateCertifier
from .data import LabeledExample
from .errors import ArtifactMissingError, FormatError, InvalidArgumentError
from .model import NetworkParams
from .smoothing import ABSTAIN, STREAM_VARIANCE_BASE, SmoothingParams, sample_counts

LOG_COLUMNS = ["idx", "label", "predict", "radius", "correct", "time_ms", "method"]
DEFAULT_RADII = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5]

# A cell is flagged when its median is below this many clock ticks.
RESOLUTION_FACTOR = 10


# === Certification logs ===

@dataclass
class CertRow:
    example_id: int
    label: int
    decision: int
    radius: float
    correct: bool
    elapsed_ms: float
    method: str


@dataclass
class CertificationLog:
    rows: list[CertRow] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    def by_id(self) -> dict[int, CertRow]:
        return {r.example_id: r for r in self.rows}


def certify_examples(
    certifier: BaseCertifier,
    examples: list[LabeledExample],
    workers: int = 1,
    record_time: bool = True,
    progress: Callable[[int, int], None] | None = None,
) -> CertificationLog:
    """
    Certify every example and collect a log in input order.

    Args:
        certifier: Backend to run
        examples: Test inputs with labels
        workers: Examples certified concurrently
        record_time: When False, time_ms is written as 0 so logs are byte-stable
        progress: Called with (done, total)
    """
    def run(example: LabeledExample) -> CertRow:
        outcome = certifier.certify(example.x, example_id=example.id)
        return CertRow(
            example_id=example.id,
            label=example.label,
            decision=outcome.decision,
            radius=outcome.radius,
            correct=outcome.decision != ABSTAIN and outcome.decision == example.label,
            elapsed_ms=outcome.elapsed * 1000.0 if record_time else 0.0,
            method=certifier.name,
        )

    rows = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for i, row in enumerate(pool.map(run, examples), start=1):
            rows.append(row)
            if progress:
                progress(i, len(examples))
    return CertificationLog(rows=rows, params=certifier.params.snapshot())


def save_log(log: CertificationLog, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for r in log.rows:
            writer.writerow([
                r.example_id, r.label, r.decision, f"{r.radius:.9g}",
                int(r.correct), f"{r.elapsed_ms:.3f}", r.method,
            ])


def load_log(path: str | Path) -> CertificationLog:
    path = Path(path)
    if not path.exists():
        raise ArtifactMissingError(f"Certification log not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t")
        header = next(reader, None)
        if header != LOG_COLUMNS:
            raise FormatError("header", f"{path}: expected {LOG_COLUMNS}, got {header}")
        rows = []
        for line_no, values in enumerate(reader, start=2):
            if len(values) != len(LOG_COLUMNS):
                raise FormatError("row", f"{path}:{line_no} has {len(values)} fields")
            try:
                rows.append(CertRow(
                    example_id=int(values[0]),
                    label=int(values[1]),
                    decision=int(values[2]),
                    radius=float(values[3]),
                    correct=values[4] == "1",
                    elapsed_ms=float(values[5]),
                    method=values[6],
                ))
            except ValueError as e:
                raise FormatError("row", f"{path}:{line_no}: {e}") from e
    return CertificationLog(rows=rows)


# === Certified accuracy ===

def certified_accuracy(log: CertificationLog, r: float) -> float:
    """Fraction of rows classified correctly with radius >= r."""
    if r < 0:
        raise InvalidArgumentError(f"radius must be non-negative, got {r}")
    if not log.rows:
        return 0.0
    return sum(1 for row in log.rows if row.correct and row.radius >= r) / len(log.rows)


def average_certified_radius(log: CertificationLog) -> float:
    """Mean radius, counting abstentions and misclassifications as 0."""
    if not log.rows:
        return 0.0
    return sum(row.radius for row in log.rows if row.correct) / len(log.rows)


def certified_accuracy_table(log: CertificationLog, radii: list[float] = DEFAULT_RADII) -> dict[str, float]:
    """One table row: accuracy at every radius plus ACR."""
    row = {f"r={r:g}": certified_accuracy(log, r) for r in radii}
    row["acr"] = average_certified_radius(log)
    return row


def save_accuracy_table(
    tables: dict[str, dict[str, float]],
    path: str | Path,
) -> None:
    """Write one row per method tag."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = next(iter(tables.values())).keys() if tables else []
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(["method", *columns])
        for method, row in tables.items():
            writer.writerow([method, *(f"{v:.4f}" for v in row.values())])


# === Estimation error ===

@dataclass
class EstimationRow:
    """Under/over-estimation of surrogate radii against sampled radii."""
    model: str
    percentage_error_under: float
    ground_acr_under: float
    underestimation_pct: float
    mean_error_under: float
    error_variance_under: float
    percentage_error_over: float
    ground_acr_over: float
    overestimation_pct: float
    mean_error_over: float
    error_variance_over: float
    tie_pct: float
    n_eligible: int


@dataclass
class EstimationReport:
    rows: list[EstimationRow] = field(default_factory=list)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        names = [f.name for f in fields(EstimationRow)]
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, delimiter="\t", lineterminator="\n")
            writer.writerow(names)
            for row in self.rows:
                values = asdict(row)
                writer.writerow([
                    values[name] if isinstance(values[name], (str, int)) else f"{values[name]:.6g}"
                    for name in names
                ])


def _eligible_pairs(
    mc_log: CertificationLog,
    surrogate_log: CertificationLog,
    r_min: float,
) -> list[tuple[float, float]]:
    """(r_sampling, r_predicted) for ids where both certify with radius >= r_min."""
    sampled = mc_log.by_id()
    predicted = surrogate_log.by_id()
    if sampled.keys() != predicted.keys():
        diff = sorted(sampled.keys() ^ predicted.keys())
        raise InvalidArgumentError(f"logs cover different examples (e.g. id {diff[0]})")

    pairs = []
    for example_id in sorted(sampled):
        s, p = sampled[example_id], predicted[example_id]
        if s.decision == ABSTAIN or p.decision == ABSTAIN:
            continue
        if s.radius >= r_min and p.radius >= r_min:
            pairs.append((s.radius, p.radius))
    return pairs


def _split_stats(pairs: list[tuple[float, float]]) -> tuple[float, float, float, float]:
    """Percentage error, ground-truth ACR, mean abs error, error variance."""
    if not pairs:
        return 0.0, 0.0, 0.0, 0.0
    sampled = np.array([s for s, _ in pairs])
    errors = np.abs(np.array([p for _, p in pairs]) - sampled)
    return (
        float(np.mean(100.0 * errors / sampled)),
        float(np.mean(sampled)),
        float(np.mean(errors)),
        float(np.var(errors)),
    )


def estimation_report(
    mc_log: CertificationLog,
    surrogate_log: CertificationLog,
    r_min: float = 0.25,
    model: str = "surrogate",
) -> EstimationReport:
    """
    Compare surrogate radii with sampled radii on eligible pairs.

    Pairs where both methods certify with radius >= r_min are split into
    under- and over-estimates; exact ties form a third bucket that is counted
    in tie_pct but excluded from both splits.

    Raises:
        InvalidArgumentError: If the logs cover different example ids.
    """
    pairs = _eligible_pairs(mc_log, surrogate_log, r_min)
    under = [(s, p) for s, p in pairs if p < s]
    over = [(s, p) for s, p in pairs if p > s]
    ties = len(pairs) - len(under) - len(over)

    def pct(count: int) -> float:
        return 100.0 * count / len(pairs) if pairs else 0.0

    pe_u, acr_u, me_u, var_u = _split_stats(under)
    pe_o, acr_o, me_o, var_o = _split_stats(over)
    return EstimationReport([EstimationRow(
        model=model,
        percentage_error_under=pe_u,
        ground_acr_under=acr_u,
        underestimation_pct=pct(len(under)),
        mean_error_under=me_u,
        error_variance_under=var_u,
        percentage_error_over=pe_o,
        ground_acr_over=acr_o,
        overestimation_pct=pct(len(over)),
        mean_error_over=me_o,
        error_variance_over=var_o,
        tie_pct=pct(ties),
        n_eligible=len(pairs),
    )])


def median_relative_error(
    mc_log: CertificationLog,
    surrogate_log: CertificationLog,
    r_min: float = 0.25,
) -> float:
    """Median |r_pred - r_sampling| / r_sampling over eligible pairs; nan if none."""
    pairs = _eligible_pairs(mc_log, surrogate_log, r_min)
    if not pairs:
        return math.nan
    return statistics.median(abs(p - s) / s for s, p in pairs)


# === Sampling variance ===

@dataclass
class VarianceStudy:
    """Counts of shape (examples, resamples, k) at N samples each."""
    counts: np.ndarray
    n: int
    sigma: float

    @property
    def per_example_variance(self) -> np.ndarray:
        """(examples, k) unbiased variance across resamples."""
        return self.counts.var(axis=1, ddof=1)

    @property
    def per_class_variance(self) -> np.ndarray:
        return self.per_example_variance.mean(axis=0)

    @property
    def normalized_pct(self) -> float:
        """Mean per-class variance as a percentage of N."""
        return float(100.0 * self.per_class_variance.mean() / self.n)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, delimiter="\t", lineterminator="\n")
            writer.writerow(["class", "mean_variance", "pct_of_n"])
            for c, v in enumerate(self.per_class_variance):
                writer.writerow([c, f"{v:.6g}", f"{100.0 * v / self.n:.6g}"])
            writer.writerow(["all", f"{self.per_class_variance.mean():.6g}", f"{self.normalized_pct:.6g}"])


def variance_study(
    f: NetworkParams,
    examples: list[LabeledExample],
    sigma: float,
    n: int,
    resamples: int,
    seed: int,
    workers: int = 1,
) -> VarianceStudy:
    """Resample the count vector of every example `resamples` times."""
    if resamples < 2:
        raise InvalidArgumentError(f"resamples must be >= 2, got {resamples}")
    if not examples:
        raise InvalidArgumentError("examples must not be empty")

    def resample(example: LabeledExample) -> np.ndarray:
        return np.stack([
            sample_counts(f, example.x, sigma, n, seed, example_id=example.id, stream=STREAM_VARIANCE_BASE + r)
            for r in range(resamples)
        ])

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        counts = np.stack(list(pool.map(resample, examples)))
    return VarianceStudy(counts=counts, n=n, sigma=sigma)


def binomial_variance_agreement(
    study: VarianceStudy,
    low: float = 0.05,
    high: float = 0.95,
    factor: float = 3.0,
) -> float:
    """
    Fraction of (example, class) cells whose empirical variance is within
    `factor` of N * p * (1 - p), over cells with p in [low, high].
    """
    p_hat = study.counts.mean(axis=1) / study.n
    mask = (p_hat >= low) & (p_hat <= high)
    if not np.any(mask):
        return math.nan
    expected = study.n * p_hat[mask] * (1 - p_hat[mask])
    ratio = study.per_example_variance[mask] / expected
    return float(np.mean((ratio >= 1.0 / factor) & (ratio <= factor)))


# === Timing ===

@dataclass
class BenchRow:
    method: str
    n: int
    median_ms: float
    min_ms: float
    max_ms: float
    repeats: int
    passes_min: int | None
    passes_max: int | None
    below_resolution: bool


@dataclass
class BenchTable:
    rows: list[BenchRow] = field(default_factory=list)

    def median(self, method: str, n: int) -> float:
        for row in self.rows:
            if row.method == method and row.n == n:
                return row.median_ms
        raise KeyError((method, n))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        names = [f.name for f in fields(BenchRow)]
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, delimiter="\t", lineterminator="\n")
            writer.writerow(names)
            for row in self.rows:
                writer.writerow([
                    row.method, row.n, f"{row.median_ms:.4f}", f"{row.min_ms:.4f}",
                    f"{row.max_ms:.4f}", row.repeats, _blank(row.passes_min), _blank(row.passes_max),
                    int(row.below_resolution),
                ])


def _blank(value: int | None) -> str:
    return "" if value is None else str(value)


def _time_cell(
    certifier: BaseCertifier,
    examples: list[LabeledExample],
    repeats: int,
    warmup: int,
    counter: NetworkParams | None,
) -> tuple[list[float], list[int]]:
    """Timings and, when `counter` is given, its forward passes per timed repeat."""
    timings = []
    passes = []
    for i in range(warmup + repeats):
        example = examples[i % len(examples)]
        before = counter.forward_calls if counter is not None else 0
        start = time.perf_counter()
        certifier.certify(example.x, example_id=example.id)
        elapsed = time.perf_counter() - start
        if i >= warmup:
            timings.append(elapsed)
            if counter is not None:
                passes.append(counter.forward_calls - before)
    return timings, passes


def bench(
    f: NetworkParams,
    h: NetworkParams,
    examples: list[LabeledExample],
    params: SmoothingParams,
    n_sweep: list[int],
    repeats: int = 20,
    warmup: int = 2,
) -> BenchTable:
    """
    Median certification time per (method, N), single-threaded.

    Only the certify call is timed; model loading and I/O are outside.
    """
    if list(n_sweep) != sorted(n_sweep) or not n_sweep:
        raise InvalidArgumentError(f"n_sweep must be non-empty and ascending, got {n_sweep}")
    if repeats < 1 or not examples:
        raise InvalidArgumentError("need repeats >= 1 and at least one example")

    resolution = time.get_clock_info("perf_counter").resolution
    table = BenchTable()
    for n in n_sweep:
        cell_params = replace(params, n=n, n0=min(params.n0, n))
        certifiers: list[tuple[BaseCertifier, NetworkParams | None]] = [
            (MonteCarloCertifier(f, cell_params, workers=1), None),
            (SurrogateCertifier(f, h, cell_params, workers=1), h),
        ]
        for certifier, counter in certifiers:
            timings, passes = _time_cell(certifier, examples, repeats, warmup, counter)
            median = statistics.median(timings)
            table.rows.append(BenchRow(
                method=certifier.name,
                n=n,
                median_ms=median * 1000.0,
                min_ms=min(timings) * 1000.0,
                max_ms=max(timings) * 1000.0,
                repeats=repeats,
                passes_min=min(passes) if passes else None,
                passes_max=max(passes) if passes else None,
                below_resolution=median < RESOLUTION_FACTOR * resolution,
            ))
            print(f"[Bench] {certifier.name:<10} N={n:<7} median {median * 1000.0:9.3f} ms")
    return table
