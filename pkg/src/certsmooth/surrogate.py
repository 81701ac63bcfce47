"""
Surrogate certification.

A surrogate network h learns to predict the normalized Monte Carlo class
counts of the base classifier from the clean input. At certification time
N * h(x) replaces the N-sample estimation pass, so the cost no longer
depends on N; a small n0-sample PREDICT pass still gates every radius.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .data import LabeledExample
from .errors import (
    ArtifactMissingError,
    CheckpointError,
    ConfigurationError,
    FormatError,
    InvalidArgumentError,
)
from .model import (
    NetworkParams,
    TrainConfig,
    TrainStep,
    forward,
    forward_batch,
    init_params,
    loss_value,
    train,
)
from .numerics import clopper_pearson_lower
from .smoothing import (
    ABSTAIN,
    STREAM_DATASET,
    CertOutcome,
    SmoothingParams,
    predict,
    radius_from_lower,
    sample_counts,
    top_two,
)

DATASET_MAGIC = "CSDS"
DATASET_VERSION = 1


@dataclass(frozen=True)
class CountsHeader:
    k: int
    n_total: int
    sigma: float
    master_seed: int
    format_version: int = DATASET_VERSION

    def render(self) -> str:
        return (
            f"{DATASET_MAGIC} {self.format_version} k={self.k} N={self.n_total} "
            f"sigma={self.sigma!r} seed={self.master_seed}"
        )


@dataclass
class CountsRecord:
    """Class counts of one example; sum(counts) == n_total."""
    example_id: int
    label: int
    counts: np.ndarray
    n_total: int
    sigma: float

    def render(self) -> str:
        return ",".join(str(int(v)) for v in (self.example_id, self.label, *self.counts))


@dataclass
class CountsDataset:
    header: CountsHeader
    records: list[CountsRecord] = field(default_factory=list)

    def validate(self) -> None:
        seen: set[int] = set()
        for r in self.records:
            if r.example_id in seen:
                raise FormatError("id", f"duplicate example id {r.example_id}")
            seen.add(r.example_id)
            if len(r.counts) != self.header.k:
                raise FormatError("counts", f"record {r.example_id} has {len(r.counts)} classes, header says {self.header.k}")
            if int(np.sum(r.counts)) != self.header.n_total:
                raise FormatError("counts", f"record {r.example_id} sums to {int(np.sum(r.counts))}, header says N={self.header.n_total}")

    def render(self) -> str:
        return "\n".join([self.header.render(), *(r.render() for r in self.records)]) + "\n"


# === File format ===

def _parse_header(line: str) -> CountsHeader:
    parts = line.split()
    if len(parts) != 6 or parts[0] != DATASET_MAGIC:
        raise FormatError("header", f"expected '{DATASET_MAGIC} <version> k= N= sigma= seed=', got {line!r}")
    try:
        version = int(parts[1])
    except ValueError:
        raise FormatError("version", f"not an integer: {parts[1]!r}")
    if version != DATASET_VERSION:
        raise FormatError("version", f"unsupported version {version}")

    values = {}
    for token, key in zip(parts[2:], ("k", "N", "sigma", "seed")):
        name, _, raw = token.partition("=")
        if name != key or not raw:
            raise FormatError(key, f"expected '{key}=<value>', got {token!r}")
        values[key] = raw
    try:
        return CountsHeader(
            k=int(values["k"]),
            n_total=int(values["N"]),
            sigma=float(values["sigma"]),
            master_seed=int(values["seed"]),
            format_version=version,
        )
    except ValueError as e:
        raise FormatError("header", str(e)) from e


def _parse_record(line: str, header: CountsHeader) -> CountsRecord:
    try:
        values = [int(v) for v in line.split(",")]
    except ValueError:
        raise FormatError("record", f"non-integer field in {line!r}")
    if len(values) != header.k + 2:
        raise FormatError("record", f"expected {header.k + 2} fields, got {len(values)}")
    return CountsRecord(
        example_id=values[0],
        label=values[1],
        counts=np.array(values[2:], dtype=np.int64),
        n_total=header.n_total,
        sigma=header.sigma,
    )


def _read_dataset(path: Path) -> CountsDataset:
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f if line.strip()]
    if not lines:
        raise FormatError("header", f"{path} is empty")
    header = _parse_header(lines[0])
    return CountsDataset(header, [_parse_record(line, header) for line in lines[1:]])


def _read_partial(path: Path) -> CountsDataset:
    """Like _read_dataset, but a torn final record is discarded."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f if line.strip()]
    if not lines:
        raise FormatError("header", f"{path} is empty")
    header = _parse_header(lines[0])
    records = []
    for i, line in enumerate(lines[1:], start=2):
        try:
            record = _parse_record(line, header)
            if int(record.counts.sum()) != header.n_total:
                raise FormatError("counts", f"record {record.example_id} does not sum to N")
            records.append(record)
        except FormatError:
            if i == len(lines):
                break
            raise
    return CountsDataset(header, records)


def save_counts_dataset(dataset: CountsDataset, path: str | Path) -> None:
    dataset.validate()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dataset.render())


def load_counts_dataset(path: str | Path) -> CountsDataset:
    """
    Raises:
        ArtifactMissingError: If the file does not exist.
        FormatError: If header or records are malformed.
    """
    path = Path(path)
    if not path.exists():
        raise ArtifactMissingError(f"Counts dataset not found: {path}")
    dataset = _read_dataset(path)
    dataset.validate()
    return dataset


def checkpoint_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".partial")


# === Dataset construction ===

def _append_record(handle, record: CountsRecord) -> None:
    handle.write(record.render() + "\n")
    handle.flush()


def build_counts_dataset(
    f: NetworkParams,
    examples: list[LabeledExample],
    sigma: float,
    n: int,
    seed: int,
    path: str | Path | None = None,
    resume: bool = False,
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> CountsDataset:
    """
    Sample one count vector per example.

    With a path, every finished record is appended to `<path>.partial`; on
    success the full dataset is written to path and the partial file removed.
    With resume=True, records already in the partial file are kept and their
    examples skipped.

    Raises:
        CheckpointError: On I/O failure; names the last completed example id.
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    if not examples:
        raise InvalidArgumentError("examples must not be empty")

    header = CountsHeader(k=f.num_classes, n_total=n, sigma=float(sigma), master_seed=seed)
    done: dict[int, CountsRecord] = {}
    partial = checkpoint_path(path) if path is not None else None

    resuming = partial is not None and resume and partial.exists()
    if resuming:
        previous = _read_partial(partial)
        if previous.header != header:
            raise ConfigurationError(
                f"Checkpoint {partial} was written with '{previous.header.render()}', "
                f"current run is '{header.render()}'"
            )
        done = {r.example_id: r for r in previous.records}
        print(f"[Sampling] Resuming with {len(done)} completed examples")

    pending = [e for e in examples if e.id not in done]

    def sample(example: LabeledExample) -> CountsRecord:
        counts = sample_counts(f, example.x, sigma, n, seed, example_id=example.id, stream=STREAM_DATASET)
        return CountsRecord(example.id, example.label, counts, n, float(sigma))

    last_id: int | None = max(done) if done else None
    handle = None
    try:
        if partial is not None:
            # Rewritten from the parsed records so a torn last line is dropped.
            partial.parent.mkdir(parents=True, exist_ok=True)
            handle = open(partial, "w", encoding="utf-8", newline="\n")
            handle.write(header.render() + "\n")
            for example in examples:
                if example.id in done:
                    handle.write(done[example.id].render() + "\n")
            handle.flush()

        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            for record in pool.map(sample, pending):
                if handle is not None:
                    _append_record(handle, record)
                done[record.example_id] = record
                last_id = record.example_id
                if progress:
                    progress(len(done), len(examples))
    except OSError as e:
        raise CheckpointError(last_id, e) from e
    finally:
        if handle is not None:
            handle.close()

    dataset = CountsDataset(header, [done[e.id] for e in examples])
    if path is not None:
        try:
            save_counts_dataset(dataset, path)
            os.remove(partial)
        except OSError as e:
            raise CheckpointError(last_id, e) from e
    return dataset


# === Training ===

def normalized_targets(dataset: CountsDataset) -> np.ndarray:
    """Counts divided by N: one simplex row per record."""
    counts = np.stack([r.counts for r in dataset.records]).astype(np.float64)
    return counts / dataset.header.n_total


def _aligned_inputs(dataset: CountsDataset, examples: list[LabeledExample]) -> np.ndarray:
    by_id = {e.id: e for e in examples}
    missing = [r.example_id for r in dataset.records if r.example_id not in by_id]
    if missing:
        raise ConfigurationError(f"{len(missing)} dataset ids have no example (first: {missing[0]})")
    return np.stack([by_id[r.example_id].x for r in dataset.records])


def train_surrogate(
    dataset: CountsDataset,
    examples: list[LabeledExample],
    hidden: list[int],
    cfg: TrainConfig,
    callback: Callable[[TrainStep], None] | None = None,
) -> NetworkParams:
    """
    Fit h to the normalized counts with the JS loss.

    Args:
        dataset: Sampled counts
        examples: Provide the inputs for the dataset ids
        hidden: Hidden layer widths
        cfg: Optimiser settings
    """
    if not dataset.records:
        raise InvalidArgumentError("dataset is empty")
    inputs = _aligned_inputs(dataset, examples)
    layer_dims = [inputs.shape[1], *hidden, dataset.header.k]
    h = init_params(layer_dims, head="simplex", seed=cfg.seed)
    return train(h, inputs, normalized_targets(dataset), "js", cfg, callback=callback)


def mean_js(h: NetworkParams, dataset: CountsDataset, examples: list[LabeledExample]) -> float:
    """Mean JS divergence between h and the normalized counts."""
    inputs = _aligned_inputs(dataset, examples)
    return loss_value(forward_batch(h, inputs), normalized_targets(dataset), "js")


# === Certification ===

def reconstruct_counts(probs: np.ndarray, n: int) -> np.ndarray:
    """
    Integer counts summing to n from n * probs by largest remainder.

    Remainder ties go to the lowest class index.
    """
    scaled = np.asarray(probs, dtype=np.float64) * n
    counts = np.floor(scaled).astype(np.int64)
    shortfall = n - int(counts.sum())
    if shortfall > 0:
        order = np.argsort(-(scaled - counts), kind="stable")
        counts[order[:shortfall]] += 1
    elif shortfall < 0:
        # floating error pushed the floors over n
        order = np.argsort(scaled - counts, kind="stable")
        for idx in order:
            if shortfall == 0:
                break
            if counts[idx] > 0:
                counts[idx] -= 1
                shortfall += 1
    return counts


def accelerated_certify(
    f: NetworkParams,
    h: NetworkParams,
    x: np.ndarray,
    params: SmoothingParams,
    example_id: int = 0,
    workers: int = 1,
) -> CertOutcome:
    """
    Certify x with one surrogate forward pass.

    PREDICT on f (n0 samples) picks the class; counts = N * h(x) replace the
    estimation pass. A radius is returned only when the surrogate's top class
    agrees with PREDICT and the lower bound on p_A exceeds 1/2.

    Raises:
        ConfigurationError: If f and h disagree on the number of classes.
    """
    if f.num_classes != h.num_classes:
        raise ConfigurationError(
            f"base classifier has {f.num_classes} classes, surrogate has {h.num_classes}"
        )
    if f.input_dim != h.input_dim:
        raise ConfigurationError(
            f"base classifier takes d={f.input_dim}, surrogate takes d={h.input_dim}"
        )

    start = time.perf_counter()
    c_hat = predict(f, x, params, example_id=example_id, workers=workers)
    counts = reconstruct_counts(forward(h, x), params.n)
    c_top = top_two(counts)[0]

    p_a_lower = clopper_pearson_lower(int(counts[c_top]), params.n, params.alpha)
    if c_hat == ABSTAIN or c_top != c_hat or p_a_lower <= 0.5:
        decision, radius = ABSTAIN, 0.0
    else:
        decision, radius = c_hat, radius_from_lower(p_a_lower, params.sigma)

    return CertOutcome(
        decision=decision,
        radius=radius,
        p_a_lower=p_a_lower,
        elapsed=time.perf_counter() - start,
        predicted=c_hat,
        count_top=c_top,
    )
