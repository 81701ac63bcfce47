"""
Feed-forward network used as both the base classifier f and the surrogate h.

ReLU hidden layers, softmax output. Training is mini-batch Adam with a
step-decay learning-rate schedule; gradients are computed by hand-written
backpropagation and can be checked against central finite differences.
"""

from __future__ import annotations

import math
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from scipy import special

from .errors import ArtifactMissingError, FormatError, InvalidArgumentError, TrainingDivergedError

Head = Literal["classifier", "simplex"]
Loss = Literal["cross_entropy", "js"]

# Floor applied to probabilities inside logarithms.
PROB_FLOOR = 1e-12

WEIGHTS_MAGIC = b"CSNW"
WEIGHTS_VERSION = 1
_HEADS: tuple[Head, ...] = ("classifier", "simplex")


@dataclass(eq=False)
class NetworkParams:
    """Weights of f (head="classifier") or h (head="simplex")."""
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: Head = "classifier"
    # Number of single-input forward() calls, safe across threads.
    forward_calls: int = field(default=0, compare=False, repr=False)
    _calls_lock: threading.Lock = field(default_factory=threading.Lock, init=False, compare=False, repr=False)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    def same_as(self, other: NetworkParams) -> bool:
        """Bitwise equality of architecture, head and every weight."""
        return (
            self.layer_dims == other.layer_dims
            and self.head == other.head
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )

    def copy(self) -> NetworkParams:
        return NetworkParams(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            head=self.head,
        )

    def validate(self) -> None:
        """Check layer shapes and finiteness."""
        if len(self.layer_dims) < 2 or any(d < 1 for d in self.layer_dims):
            raise InvalidArgumentError(f"bad layer_dims {self.layer_dims}")
        if self.head not in _HEADS:
            raise InvalidArgumentError(f"unknown head '{self.head}'")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise InvalidArgumentError("layer count does not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != expected or b.shape != (expected[1],):
                raise InvalidArgumentError(f"layer {i} has shape {w.shape}, expected {expected}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InvalidArgumentError(f"layer {i} has non-finite weights")


@dataclass
class TrainConfig:
    """Optimiser settings; defaults follow the surrogate training recipe."""
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    lr_step: int = 20
    lr_gamma: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.lr_step < 1:
            raise InvalidArgumentError("epochs, batch_size and lr_step must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise InvalidArgumentError("Adam betas must lie in (0, 1)")
        if not (0 < self.lr_gamma <= 1):
            raise InvalidArgumentError("lr_gamma must lie in (0, 1]")


@dataclass
class AdamState:
    """First/second moment accumulators, ordered as weights then biases."""
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: NetworkParams) -> AdamState:
        tensors = params.weights + params.biases
        return cls(
            m=[np.zeros_like(t) for t in tensors],
            v=[np.zeros_like(t) for t in tensors],
        )


@dataclass
class Gradients:
    """Loss gradient w.r.t. every parameter, plus the output logits."""
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    logits: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([g.ravel() for g in self.weights + self.biases])


@dataclass
class TrainStep:
    """Passed to the training callback after every mini-batch."""
    epoch: int
    batch: int
    loss: float
    lr: float


# === Construction ===

def init_params(layer_dims: list[int], head: Head = "classifier", seed: int = 0) -> NetworkParams:
    """He-initialised network with zero biases."""
    rng = np.random.default_rng(seed)
    weights = [
        rng.standard_normal((fan_in, fan_out)) * math.sqrt(2.0 / fan_in)
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:])
    ]
    biases = [np.zeros(d) for d in layer_dims[1:]]
    params = NetworkParams(list(layer_dims), weights, biases, head)
    params.validate()
    return params


def zero_params(layer_dims: list[int], head: Head = "classifier") -> NetworkParams:
    """All-zero network; its output is uniform for every input."""
    return NetworkParams(
        layer_dims=list(layer_dims),
        weights=[np.zeros((a, b)) for a, b in zip(layer_dims[:-1], layer_dims[1:])],
        biases=[np.zeros(d) for d in layer_dims[1:]],
        head=head,
    )


# === Forward ===

def _softmax(logits: np.ndarray) -> np.ndarray:
    return special.softmax(logits, axis=-1)


def _forward_cache(params: NetworkParams, inputs: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Return the per-layer activations (input first) and the output logits."""
    activations = [inputs]
    h = inputs
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if i == last:
            return activations, z
        h = np.maximum(z, 0.0)
        activations.append(h)
    raise InvalidArgumentError("network has no layers")


def _check_inputs(params: NetworkParams, inputs: np.ndarray) -> np.ndarray:
    arr = np.asarray(inputs, dtype=np.float64)
    if arr.shape[-1] != params.input_dim:
        raise InvalidArgumentError(
            f"input has dimension {arr.shape[-1]}, network expects {params.input_dim}"
        )
    return arr


def forward_batch(params: NetworkParams, inputs: np.ndarray) -> np.ndarray:
    """Softmax outputs for a (batch, d) input matrix."""
    inputs = _check_inputs(params, np.atleast_2d(inputs))
    _, logits = _forward_cache(params, inputs)
    return _softmax(logits)


def forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Softmax output for a single input vector."""
    x = _check_inputs(params, x)
    if x.ndim != 1:
        raise InvalidArgumentError("forward takes a single vector; use forward_batch")
    with params._calls_lock:
        params.forward_calls += 1
    _, logits = _forward_cache(params, x[None, :])
    return _softmax(logits)[0]


def classify_batch(params: NetworkParams, inputs: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties go to the lowest index."""
    inputs = _check_inputs(params, np.atleast_2d(inputs))
    _, logits = _forward_cache(params, inputs)
    return np.argmax(logits, axis=1)


def classify(params: NetworkParams, x: np.ndarray) -> int:
    return int(np.argmax(forward(params, x)))


# === Losses and gradients ===

def _as_targets(targets: np.ndarray, num_classes: int) -> np.ndarray:
    """Integer labels become one-hot rows; simplex rows pass through."""
    targets = np.asarray(targets)
    if targets.ndim == 1 and np.issubdtype(targets.dtype, np.integer):
        return np.eye(num_classes)[targets]
    targets = np.atleast_2d(targets).astype(np.float64)
    if targets.shape[-1] != num_classes:
        raise InvalidArgumentError(
            f"targets have {targets.shape[-1]} classes, network has {num_classes}"
        )
    return targets


def loss_value(probs: np.ndarray, targets: np.ndarray, loss: Loss) -> float:
    """Mean loss over rows of (batch, k) probabilities and targets."""
    if loss == "cross_entropy":
        per_row = -np.sum(targets * np.log(np.maximum(probs, PROB_FLOOR)), axis=1)
    elif loss == "js":
        m = 0.5 * (probs + targets)
        per_row = 0.5 * (special.rel_entr(probs, m).sum(axis=1) + special.rel_entr(targets, m).sum(axis=1))
    else:
        raise InvalidArgumentError(f"unknown loss '{loss}'")
    return float(per_row.mean())


def _logit_gradient(probs: np.ndarray, targets: np.ndarray, loss: Loss) -> np.ndarray:
    """d(mean loss)/d(logits) for a batch."""
    batch = probs.shape[0]
    if loss == "cross_entropy":
        return (probs - targets) / batch
    # dJS/dp_i = 0.5 * ln(p_i / m_i), then back through the softmax Jacobian.
    m = 0.5 * (probs + targets)
    g = 0.5 * np.log(np.maximum(probs, PROB_FLOOR) / np.maximum(m, PROB_FLOOR))
    centered = g - np.sum(probs * g, axis=1, keepdims=True)
    return probs * centered / batch


def _backward(
    params: NetworkParams,
    activations: list[np.ndarray],
    logit_grad: np.ndarray,
) -> Gradients:
    grad_w: list[np.ndarray] = [np.empty(0)] * len(params.weights)
    grad_b: list[np.ndarray] = [np.empty(0)] * len(params.biases)
    delta = logit_grad
    for i in range(len(params.weights) - 1, -1, -1):
        grad_w[i] = activations[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (activations[i] > 0)
    return Gradients(weights=grad_w, biases=grad_b, logits=logit_grad)


def _loss_and_gradients(
    params: NetworkParams,
    inputs: np.ndarray,
    targets: np.ndarray,
    loss: Loss,
) -> tuple[float, Gradients]:
    activations, logits = _forward_cache(params, inputs)
    probs = _softmax(logits)
    value = loss_value(probs, targets, loss)
    return value, _backward(params, activations, _logit_gradient(probs, targets, loss))


def analytic_gradient(
    params: NetworkParams,
    x: np.ndarray,
    target: np.ndarray | int,
    loss: Loss,
) -> Gradients:
    """
    Backpropagated gradient of the loss for one example or a batch.

    Args:
        params: Network
        x: Input vector (d,) or matrix (batch, d)
        target: Class index / integer labels, or simplex target row(s)
        loss: "cross_entropy" or "js"
    """
    inputs = _check_inputs(params, np.atleast_2d(x))
    if np.isscalar(target):
        target = np.array([target])
    targets = _as_targets(target, params.num_classes)
    _, grads = _loss_and_gradients(params, inputs, targets, loss)
    return grads


def finite_difference_gradient(
    params: NetworkParams,
    x: np.ndarray,
    target: np.ndarray | int,
    loss: Loss,
    h: float = 1e-5,
) -> Gradients:
    """Central finite-difference estimate of analytic_gradient."""
    inputs = _check_inputs(params, np.atleast_2d(x))
    if np.isscalar(target):
        target = np.array([target])
    targets = _as_targets(target, params.num_classes)
    probe = params.copy()

    def evaluate() -> float:
        return loss_value(forward_batch(probe, inputs), targets, loss)

    def estimate(tensors: list[np.ndarray]) -> list[np.ndarray]:
        result = []
        for tensor in tensors:
            grad = np.zeros_like(tensor)
            for idx in np.ndindex(tensor.shape):
                original = tensor[idx]
                tensor[idx] = original + h
                up = evaluate()
                tensor[idx] = original - h
                down = evaluate()
                tensor[idx] = original
                grad[idx] = (up - down) / (2 * h)
            result.append(grad)
        return result

    grad_w = estimate(probe.weights)
    grad_b = estimate(probe.biases)
    _, logits = _forward_cache(probe, inputs)
    return Gradients(weights=grad_w, biases=grad_b, logits=np.full_like(logits, np.nan))


# === Optimisation ===

def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Step decay: multiply by lr_gamma every lr_step epochs."""
    return cfg.learning_rate * cfg.lr_gamma ** (epoch // cfg.lr_step)


def adam_step(
    params: NetworkParams,
    grads: Gradients,
    state: AdamState,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float = 1e-8,
) -> None:
    """In-place bias-corrected Adam update."""
    state.step += 1
    tensors = params.weights + params.biases
    gradients = grads.weights + grads.biases
    correction1 = 1 - beta1 ** state.step
    correction2 = 1 - beta2 ** state.step
    for i, (param, grad) in enumerate(zip(tensors, gradients)):
        state.m[i] = beta1 * state.m[i] + (1 - beta1) * grad
        state.v[i] = beta2 * state.v[i] + (1 - beta2) * grad ** 2
        m_hat = state.m[i] / correction1
        v_hat = state.v[i] / correction2
        param -= lr * m_hat / (np.sqrt(v_hat) + eps)


def train(
    params: NetworkParams,
    inputs: np.ndarray,
    targets: np.ndarray,
    loss: Loss,
    cfg: TrainConfig,
    noise_sigma: float = 0.0,
    callback: Callable[[TrainStep], None] | None = None,
) -> NetworkParams:
    """
    Mini-batch Adam training; returns a trained copy of params.

    Args:
        params: Starting weights (left untouched)
        inputs: (n, d) training inputs
        targets: Integer labels (cross_entropy) or (n, k) simplex rows (js)
        loss: "cross_entropy" or "js"
        cfg: Optimiser settings; cfg.seed fixes shuffling and noise
        noise_sigma: Std of fresh Gaussian noise added to every batch
        callback: Called with a TrainStep after every batch

    Raises:
        TrainingDivergedError: If a batch loss is not finite.
    """
    cfg.validate()
    params.validate()
    inputs = _check_inputs(params, np.atleast_2d(inputs))
    targets = _as_targets(targets, params.num_classes)
    if inputs.shape[0] == 0 or inputs.shape[0] != targets.shape[0]:
        raise InvalidArgumentError("inputs and targets must be non-empty and aligned")

    trained = params.copy()
    state = AdamState.zeros_like(trained)
    rng = np.random.default_rng(cfg.seed)
    n = inputs.shape[0]

    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(cfg, epoch)
        order = rng.permutation(n)
        for batch, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            batch_inputs = inputs[idx]
            if noise_sigma > 0:
                batch_inputs = batch_inputs + rng.standard_normal(batch_inputs.shape) * noise_sigma
            value, grads = _loss_and_gradients(trained, batch_inputs, targets[idx], loss)
            if not math.isfinite(value):
                raise TrainingDivergedError(epoch, batch, value)
            adam_step(trained, grads, state, lr, cfg.adam_beta1, cfg.adam_beta2)
            if callback:
                callback(TrainStep(epoch=epoch, batch=batch, loss=value, lr=lr))

    return trained


# === Persistence ===
# Layout (little endian): magic, u32 version, u8 head, u32 layer count,
# u32 dims[layer count + 1], then per layer row-major float64 weights and biases.

def save_weights(params: NetworkParams, path: str | Path) -> None:
    params.validate()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_layers = len(params.weights)
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<IBI", WEIGHTS_VERSION, _HEADS.index(params.head), n_layers))
        f.write(struct.pack(f"<{n_layers + 1}I", *params.layer_dims))
        for w, b in zip(params.weights, params.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def _read_exact(f, size: int, field_name: str) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise FormatError(field_name, f"truncated (wanted {size} bytes, got {len(data)})")
    return data


def load_weights(path: str | Path) -> NetworkParams:
    """
    Load a weight file written by save_weights.

    Raises:
        ArtifactMissingError: If the file does not exist.
        FormatError: Bad magic, version, head, dims or truncated data.
    """
    if not Path(path).exists():
        raise ArtifactMissingError(f"Weight file not found: {path}")
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != WEIGHTS_MAGIC:
            raise FormatError("magic", f"{path} is not a certsmooth weight file")
        version, head_code, n_layers = struct.unpack("<IBI", _read_exact(f, 9, "header"))
        if version != WEIGHTS_VERSION:
            raise FormatError("version", f"unsupported version {version}")
        if head_code >= len(_HEADS):
            raise FormatError("head", f"unknown head code {head_code}")
        if n_layers < 1:
            raise FormatError("layer_count", f"invalid layer count {n_layers}")
        dims = list(struct.unpack(f"<{n_layers + 1}I", _read_exact(f, 4 * (n_layers + 1), "layer_dims")))
        if any(d < 1 for d in dims):
            raise FormatError("layer_dims", f"non-positive dimension in {dims}")

        weights, biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            w = np.frombuffer(_read_exact(f, 8 * fan_in * fan_out, f"weights[{i}]"), dtype="<f8")
            b = np.frombuffer(_read_exact(f, 8 * fan_out, f"biases[{i}]"), dtype="<f8")
            weights.append(w.reshape(fan_in, fan_out).astype(np.float64))
            biases.append(b.astype(np.float64))
        if f.read(1):
            raise FormatError("trailer", "unexpected bytes after last layer")

    params = NetworkParams(dims, weights, biases, _HEADS[head_code])
    try:
        params.validate()
    except InvalidArgumentError as e:
        raise FormatError("weights", str(e)) from e
    return params
