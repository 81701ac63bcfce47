"""Synthetic classification tasks and split files."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import ArtifactMissingError, FormatError, InvalidArgumentError

Generator = Literal["blobs", "shells"]


@dataclass(eq=False)
class LabeledExample:
    """A feature vector with its class label."""
    id: int
    x: np.ndarray
    label: int


def _blobs(rng: np.random.Generator, n: int, d: int, k: int, separation: float, blob_std: float):
    # Orthonormal directions put centers at radius separation*std/sqrt(2)
    # exactly separation*std apart; with k > d they are only nearly so.
    if k <= d:
        q, _ = np.linalg.qr(rng.standard_normal((d, k)))
        directions = q.T
    else:
        directions = rng.standard_normal((k, d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    centers = directions * separation * blob_std / math.sqrt(2.0)
    labels = rng.integers(0, k, size=n)
    points = centers[labels] + rng.standard_normal((n, d)) * blob_std
    return points, labels


def _shells(rng: np.random.Generator, n: int, d: int, k: int, separation: float, blob_std: float):
    labels = rng.integers(0, k, size=n)
    directions = rng.standard_normal((n, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = (labels + 1) * separation * blob_std + rng.standard_normal(n) * blob_std * 0.25
    return directions * radii[:, None], labels


_GENERATORS = {"blobs": _blobs, "shells": _shells}


def make_splits(
    generator: Generator,
    d: int,
    k: int,
    n_train: int,
    n_test: int,
    separation: float,
    blob_std: float,
    seed: int,
) -> tuple[list[LabeledExample], list[LabeledExample]]:
    """
    Draw train and test splits from one task.

    Train ids are 0..n_train-1 and test ids continue from n_train.
    """
    if generator not in _GENERATORS:
        raise InvalidArgumentError(f"unknown generator '{generator}'")
    if d < 1 or k < 2 or n_train < 1 or n_test < 1:
        raise InvalidArgumentError("need d >= 1, k >= 2 and non-empty splits")

    rng = np.random.default_rng(seed)
    points, labels = _GENERATORS[generator](rng, n_train + n_test, d, k, separation, blob_std)
    examples = [LabeledExample(i, points[i], int(labels[i])) for i in range(n_train + n_test)]
    return examples[:n_train], examples[n_train:]


def stack(examples: list[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    """(n, d) inputs and (n,) labels."""
    return np.stack([e.x for e in examples]), np.array([e.label for e in examples], dtype=np.int64)


def save_examples(path: str | Path, examples: list[LabeledExample], header: str = "") -> None:
    """Write `id,label,x0..` rows; 17 significant digits round-trip exactly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = examples[0].x.shape[0]
    rows = np.column_stack([
        np.array([e.id for e in examples], dtype=np.float64),
        np.array([e.label for e in examples], dtype=np.float64),
        np.stack([e.x for e in examples]),
    ])
    columns = "id,label," + ",".join(f"x{i}" for i in range(d))
    fmt = ["%d", "%d"] + ["%.17g"] * d
    np.savetxt(path, rows, fmt=fmt, delimiter=",", header=f"{header}\n{columns}".strip(), comments="# ")


def load_examples(path: str | Path) -> list[LabeledExample]:
    path = Path(path)
    if not path.exists():
        raise ArtifactMissingError(f"Split file not found: {path}")
    try:
        rows = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except ValueError as e:
        raise FormatError("rows", f"{path}: {e}") from e
    if rows.shape[0] == 0 or rows.shape[1] < 3:
        raise FormatError("columns", f"{path} has no feature columns")
    return [LabeledExample(int(r[0]), r[2:].copy(), int(r[1])) for r in rows]
