"""Dense tanh multilayer perceptron with a single identity output.

The network is a regressor producing one raw score per sample; labels are
obtained by thresholding that score (default 0.5). Training is plain
mini-batch gradient descent on the mean squared error, so soft targets in
[0, 1] (teacher scores) and hard 0/1 labels go through the same code path.

Inference (`forward`, `predict`, `accuracy`, `measure_inference`) runs through
the kernels in :mod:`ids_adapt.kernels` and never mutates the model, so a
model can be shared read-only between threads. `train` needs exclusive access.
"""

from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import kernels
from .exceptions import ConfigurationError, DivergenceError, EvaluationError, ShapeError

FORMAT_VERSION = 1
BYTES_PER_PARAM = 8
# Fixed bookkeeping charged per weight matrix (array header, shape, pointer).
LAYER_OVERHEAD_BYTES = 128


@dataclass
class Mlp:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    rng_seed: int = 0
    metadata: dict[str, Any] = field(default_factory=dict)

    hidden_activation = "tanh"
    output_activation = "identity"

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        self.weights = [np.ascontiguousarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.ascontiguousarray(b, dtype=np.float64) for b in self.biases]
        self.validate()

    def validate(self) -> None:
        """Raise if shapes or values break the network invariants."""
        sizes = self.layer_sizes
        if len(sizes) < 3 or any(s < 1 for s in sizes) or sizes[-1] != 1:
            raise ConfigurationError(
                f"layer_sizes must have >= 3 positive entries ending in 1, got {sizes}"
            )
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeError("need exactly one weight matrix and bias vector per layer transition")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]):
                raise ShapeError(f"weights[{i}] has shape {w.shape}, expected {(sizes[i], sizes[i + 1])}")
            if b.shape != (sizes[i + 1],):
                raise ShapeError(f"biases[{i}] has shape {b.shape}, expected {(sizes[i + 1],)}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ConfigurationError(f"layer {i} contains non-finite parameters")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def hidden_sizes(self) -> list[int]:
        return self.layer_sizes[1:-1]

    @property
    def n_params(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    def n_nonzero_params(self) -> int:
        return int(sum(np.count_nonzero(w) + np.count_nonzero(b) for w, b in zip(self.weights, self.biases)))

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.rng_seed,
            copy.deepcopy(self.metadata),
        )

    def same_parameters(self, other: "Mlp") -> bool:
        """True when both networks have bit-identical shapes and parameters."""
        if self.layer_sizes != other.layer_sizes:
            return False
        return all(
            np.array_equal(a, b) for a, b in zip(self.weights + self.biases, other.weights + other.biases)
        )

    # serialization

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "rng_seed": int(self.rng_seed),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "Mlp":
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported model format_version {version!r}")
        try:
            return cls(
                doc["layer_sizes"],
                [np.array(w, dtype=np.float64).reshape(len(w), -1) for w in doc["weights"]],
                [np.array(b, dtype=np.float64) for b in doc["biases"]],
                int(doc.get("rng_seed", 0)),
                dict(doc.get("metadata", {})),
            )
        except KeyError as exc:
            raise ConfigurationError(f"model document missing field {exc}") from None

    def to_json(self) -> str:
        """Canonical JSON text; floats use the shortest round-trippable repr."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "Mlp":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "Mlp":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 512
    max_epochs: int = 100
    patience: int = 25
    tolerance: float = 1e-4

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ConfigurationError("max_epochs must be >= 0")
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if self.max_epochs and self.patience > self.max_epochs:
            raise ConfigurationError("patience must not exceed max_epochs")
        if self.tolerance < 0:
            raise ConfigurationError("tolerance must be non-negative")


@dataclass
class TrainReport:
    epochs_run: int
    best_epoch: int
    best_val_loss: float
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stopped_early: bool = False


@dataclass(frozen=True)
class InferenceStats:
    mean_ns_per_sample: float
    memory_bytes: int
    n_params: int
    repetitions: int
    samples: int
    backend: str


def init_mlp(layer_sizes, rng_seed: int = 0) -> Mlp:
    """Create a network with scaled-uniform weights and zero biases.

    Each weight matrix is drawn from U(-a, a) with
    ``a = sqrt(6 / (fan_in + fan_out))``, which keeps tanh units away from
    saturation at the start of training.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 3 or any(s < 1 for s in sizes) or sizes[-1] != 1:
        raise ConfigurationError(
            f"layer_sizes must have >= 3 positive entries ending in 1, got {sizes}"
        )
    rng = np.random.default_rng([int(rng_seed), 0])
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, weights, biases, int(rng_seed))


def _check_inputs(model: Mlp, inputs) -> np.ndarray:
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != model.n_inputs:
        raise ShapeError(f"expected inputs with {model.n_inputs} columns, got shape {X.shape}")
    return X


def forward(model: Mlp, inputs) -> np.ndarray:
    """Raw scores, one per row. Deterministic for a given kernel backend."""
    X = _check_inputs(model, inputs)
    return kernels.dense_forward(X, model.weights, model.biases)


def predict(model: Mlp, inputs, threshold: float = 0.5) -> np.ndarray:
    return (forward(model, inputs) >= threshold).astype(np.int8)


def accuracy(model: Mlp, X, y, threshold: float = 0.5) -> float:
    y = np.asarray(y)
    if len(y) == 0 or len(X) == 0:
        raise EvaluationError("accuracy needs at least one sample")
    if len(X) != len(y):
        raise ShapeError(f"{len(X)} rows but {len(y)} labels")
    pred = predict(model, X, threshold)
    return np.count_nonzero(pred == y) / len(y)


def memory_estimate(model: Mlp) -> int:
    """Bytes needed to hold the parameters: 8 per parameter plus a fixed per-layer overhead."""
    return model.n_params * BYTES_PER_PARAM + len(model.weights) * LAYER_OVERHEAD_BYTES


def measure_inference(model: Mlp, X, repetitions: int = 3, max_samples: int = 1000) -> InferenceStats:
    """Mean wall-clock time of single-sample forward passes.

    Up to ``max_samples`` rows are pushed through the network one at a time,
    ``repetitions`` times over.
    """
    if repetitions < 1:
        raise ConfigurationError("repetitions must be >= 1")
    X = _check_inputs(model, X)[:max_samples]
    if len(X) == 0:
        raise EvaluationError("measure_inference needs at least one sample")
    rows = [np.ascontiguousarray(X[i : i + 1]) for i in range(len(X))]
    dense = kernels.dense_forward
    weights, biases = model.weights, model.biases
    total = 0
    for _ in range(repetitions):
        for row in rows:
            t0 = time.perf_counter_ns()
            dense(row, weights, biases)
            total += time.perf_counter_ns() - t0
    return InferenceStats(
        mean_ns_per_sample=total / (repetitions * len(rows)),
        memory_bytes=memory_estimate(model),
        n_params=model.n_params,
        repetitions=repetitions,
        samples=len(rows),
        backend=kernels.BACKEND,
    )


# training


def _forward_cache(model: Mlp, X: np.ndarray) -> list[np.ndarray]:
    acts = [X]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w + b
        acts.append(np.tanh(z) if i < last else z)
    return acts


def loss_and_gradients(model: Mlp, X, targets) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Mean squared error and its analytic gradient w.r.t. every weight and bias."""
    X = _check_inputs(model, X)
    t = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
    acts = _forward_cache(model, X)
    err = acts[-1] - t
    loss = float(np.mean(err**2))
    delta = 2.0 * err / len(X)
    grad_w: list[np.ndarray] = [None] * len(model.weights)  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * len(model.weights)  # type: ignore[list-item]
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = acts[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (1.0 - acts[i] ** 2)
    return loss, grad_w, grad_b


def mse(model: Mlp, X, targets) -> float:
    X = _check_inputs(model, X)
    t = np.asarray(targets, dtype=np.float64)
    return float(np.mean((_forward_cache(model, X)[-1][:, 0] - t) ** 2))


def train(model: Mlp, X_train, targets, X_val, val_targets, config: TrainConfig = TrainConfig()) -> TrainReport:
    """Fit ``model`` in place by mini-batch gradient descent on the MSE.

    The initial parameters count as epoch 0 of the early-stopping search, so
    the model never ends up with a worse validation loss than it started
    with. An epoch counts as an improvement only when the validation loss
    drops by more than ``config.tolerance``; after ``config.patience``
    epochs without one, training stops and the best parameters are restored.
    Batches are shuffled with a generator seeded from ``model.rng_seed``.
    """
    X_train = _check_inputs(model, X_train)
    X_val = _check_inputs(model, X_val)
    t_train = np.asarray(targets, dtype=np.float64).reshape(-1)
    t_val = np.asarray(val_targets, dtype=np.float64).reshape(-1)
    if len(t_train) != len(X_train) or len(t_val) != len(X_val):
        raise ShapeError("targets length must match the number of rows")
    if len(X_train) == 0 or len(X_val) == 0:
        raise EvaluationError("training and validation sets must be non-empty")

    best_loss = mse(model, X_val, t_val)
    report = TrainReport(epochs_run=0, best_epoch=0, best_val_loss=best_loss)
    if config.max_epochs == 0:
        return report

    # overflow surfaces as a non-finite loss and a DivergenceError below
    with np.errstate(over="ignore", invalid="ignore"):
        return _fit(model, X_train, t_train, X_val, t_val, config, report, best_loss)


def _fit(model, X_train, t_train, X_val, t_val, config, report, best_loss) -> TrainReport:
    rng = np.random.default_rng([int(model.rng_seed), 1])
    best_w = [w.copy() for w in model.weights]
    best_b = [b.copy() for b in model.biases]
    lr, bs = config.learning_rate, config.batch_size
    since_best = 0
    n = len(X_train)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            loss, gw, gb = loss_and_gradients(model, X_train[idx], t_train[idx])
            if not math.isfinite(loss):
                raise DivergenceError(epoch)
            total += loss * len(idx)
            for i in range(len(model.weights)):
                model.weights[i] -= lr * gw[i]
                model.biases[i] -= lr * gb[i]
        val_loss = mse(model, X_val, t_val)
        if not (math.isfinite(total) and math.isfinite(val_loss)):
            raise DivergenceError(epoch)
        report.train_loss.append(total / n)
        report.val_loss.append(val_loss)
        report.epochs_run = epoch
        if val_loss < best_loss - config.tolerance:
            best_loss = val_loss
            report.best_epoch = epoch
            best_w = [w.copy() for w in model.weights]
            best_b = [b.copy() for b in model.biases]
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                report.stopped_early = True
                break
    model.weights = best_w
    model.biases = best_b
    report.best_val_loss = best_loss
    return report
