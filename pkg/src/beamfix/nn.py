"""Minimal feed-forward network: ReLU hidden layers, identity output, MSE.

Everything is plain numpy with explicit weights so gradients can be
checked against finite differences. Training is mini-batch gradient
descent with Adam-style adaptive moments (beta1 0.9, beta2 0.999,
epsilon 1e-8) and a seeded shuffle, so runs are bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class Normalizer:
    """Per-feature affine transform: normalized = (x - shift) / scale."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        if np.any(self.scale <= 0):
            raise ValueError("normalizer scale must be positive for every feature")

    @classmethod
    def from_data(cls, data: np.ndarray, constant_feature_scale: str = "unit") -> "Normalizer":
        """Zero-mean/unit-scale transform from data statistics.

        Features with zero spread need a fallback scale. "unit" keeps them
        at 1.0, which bounds unseen categorical values at inference time.
        "negligible" uses 1e-9 * max(1, |mean|), so a constant target
        denormalizes back to the constant no matter how loosely the model
        output converges.
        """
        data = np.asarray(data, dtype=float)
        shift = data.mean(axis=0)
        std = data.std(axis=0)
        if constant_feature_scale == "unit":
            fallback = np.ones_like(std)
        elif constant_feature_scale == "negligible":
            fallback = 1e-9 * np.maximum(np.abs(shift), 1.0)
        else:
            raise ValueError(f"unknown constant_feature_scale {constant_feature_scale!r}")
        return cls(shift, np.where(std > 0, std, fallback))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.shift) / self.scale

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) * self.scale + self.shift


@dataclass
class MlpModel:
    """Explicit-weight MLP; weights[i] has shape (dims[i], dims[i+1])."""

    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_norm: Normalizer | None = None
    target_norm: Normalizer | None = None

    def copy(self) -> "MlpModel":
        return MlpModel(
            self.layer_dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.input_norm,
            self.target_norm,
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 300
    batch_size: int = 32
    seed: int = 0
    weight_init_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def init_mlp(
    layer_dims: Sequence[int],
    rng: np.random.Generator,
    weight_init_scale: float = 1.0,
) -> MlpModel:
    """Seeded uniform init in +-scale/sqrt(fan_in); biases start at zero."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"layer_dims must be >= 2 positive sizes, got {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = weight_init_scale / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases)


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Raw network output (no normalizers); accepts a vector or a batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x.reshape(1, -1) if single else x
    if a.shape[1] != model.layer_dims[0]:
        raise ValueError(
            f"input has {a.shape[1]} features, model expects {model.layer_dims[0]}"
        )
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ w + b
        if i < last:
            a = np.maximum(a, 0.0)
    return a[0] if single else a


def predict(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Forward pass through the model's input/target normalizers."""
    x = np.asarray(x, dtype=float)
    if model.input_norm is not None:
        x = model.input_norm.normalize(x)
    y = forward(model, x)
    if model.target_norm is not None:
        y = model.target_norm.denormalize(y)
    return y


def mse_loss(predictions: np.ndarray, targets: np.ndarray) -> float:
    """Mean over samples of the mean squared per-dimension error."""
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: predictions {p.shape} vs targets {t.shape}")
    return float(np.mean((p - t) ** 2))


def _forward_cached(model: MlpModel, x: np.ndarray):
    pre, acts = [], [x]
    a = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < last else z
        acts.append(a)
    return pre, acts


def _gradients(model: MlpModel, x: np.ndarray, y: np.ndarray):
    """Backprop gradients of mse_loss(forward(model, x), y)."""
    pre, acts = _forward_cached(model, x)
    grad_w = [np.empty_like(w) for w in model.weights]
    grad_b = [np.empty_like(b) for b in model.biases]
    delta = 2.0 * (acts[-1] - y) / y.size
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = acts[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return grad_w, grad_b


def train(
    model: MlpModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator | None = None,
) -> tuple[MlpModel, list[float]]:
    """Train in place with Adam; returns the model and per-epoch mean loss.

    Inputs/targets are passed through the model's normalizers (when set),
    so the recorded loss is in normalized units. Zero epochs is a no-op.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.atleast_2d(np.asarray(targets, dtype=float))
    if len(x) != len(y):
        raise ValueError(f"{len(x)} inputs but {len(y)} targets")
    if len(x) == 0:
        raise ValueError("training set is empty")
    if config.batch_size > len(x):
        raise ValueError(f"batch_size {config.batch_size} exceeds dataset size {len(x)}")
    if model.input_norm is not None:
        x = model.input_norm.normalize(x)
    if model.target_norm is not None:
        y = model.target_norm.normalize(y)
    if rng is None:
        rng = np.random.default_rng(config.seed)

    m_w = [np.zeros_like(w) for w in model.weights]
    v_w = [np.zeros_like(w) for w in model.weights]
    m_b = [np.zeros_like(b) for b in model.biases]
    v_b = [np.zeros_like(b) for b in model.biases]
    step = 0
    history: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(x))
        losses, weights_seen = [], []
        for start in range(0, len(x), config.batch_size):
            batch = order[start : start + config.batch_size]
            xb, yb = x[batch], y[batch]
            loss = mse_loss(forward(model, xb), yb)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch}, step {step}; "
                    f"lower the learning rate ({config.learning_rate})"
                )
            losses.append(loss)
            weights_seen.append(len(batch))
            grad_w, grad_b = _gradients(model, xb, yb)
            step += 1
            corr1 = 1.0 - ADAM_BETA1**step
            corr2 = 1.0 - ADAM_BETA2**step
            for i in range(len(model.weights)):
                m_w[i] = ADAM_BETA1 * m_w[i] + (1 - ADAM_BETA1) * grad_w[i]
                v_w[i] = ADAM_BETA2 * v_w[i] + (1 - ADAM_BETA2) * grad_w[i] ** 2
                model.weights[i] -= config.learning_rate * (m_w[i] / corr1) / (
                    np.sqrt(v_w[i] / corr2) + ADAM_EPSILON
                )
                m_b[i] = ADAM_BETA1 * m_b[i] + (1 - ADAM_BETA1) * grad_b[i]
                v_b[i] = ADAM_BETA2 * v_b[i] + (1 - ADAM_BETA2) * grad_b[i] ** 2
                model.biases[i] -= config.learning_rate * (m_b[i] / corr1) / (
                    np.sqrt(v_b[i] / corr2) + ADAM_EPSILON
                )
        history.append(float(np.average(losses, weights=weights_seen)))
    return model, history


def fit(
    inputs: np.ndarray,
    targets: np.ndarray,
    hidden_dims: Sequence[int],
    config: TrainConfig,
    normalize_inputs: bool = True,
    normalize_targets: bool = True,
) -> tuple[MlpModel, list[float]]:
    """Initialize (seeded), attach data-driven normalizers, and train."""
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.atleast_2d(np.asarray(targets, dtype=float))
    rng = np.random.default_rng(config.seed)
    dims = (x.shape[1], *hidden_dims, y.shape[1])
    model = init_mlp(dims, rng, config.weight_init_scale)
    if normalize_inputs:
        model.input_norm = Normalizer.from_data(x)
    if normalize_targets:
        model.target_norm = Normalizer.from_data(y, constant_feature_scale="negligible")
    return train(model, x, y, config, rng=rng)


def gradient_check(
    model: MlpModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Max relative error between backprop and central finite differences.

    Relative error per parameter is |ga - gn| / max(|ga|, |gn|, 1e-8).
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.atleast_2d(np.asarray(targets, dtype=float))
    grad_w, grad_b = _gradients(model, x, y)
    worst = 0.0
    for arrays, grads in ((model.weights, grad_w), (model.biases, grad_b)):
        for arr, grad in zip(arrays, grads):
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for j in range(flat.size):
                original = flat[j]
                flat[j] = original + step
                up = mse_loss(forward(model, x), y)
                flat[j] = original - step
                down = mse_loss(forward(model, x), y)
                flat[j] = original
                numeric = (up - down) / (2.0 * step)
                denom = max(abs(gflat[j]), abs(numeric), 1e-8)
                worst = max(worst, abs(gflat[j] - numeric) / denom)
    return worst


def _norm_to_json(norm: Normalizer | None):
    if norm is None:
        return None
    return {"shift": norm.shift.tolist(), "scale": norm.scale.tolist()}


def _norm_from_json(raw) -> Normalizer | None:
    if raw is None:
        return None
    return Normalizer(np.array(raw["shift"], dtype=float), np.array(raw["scale"], dtype=float))


def save_weights(model: MlpModel, path: str | Path) -> None:
    """Persist the model as JSON with row-major weight arrays."""
    doc = {
        "layer_dims": list(model.layer_dims),
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "hidden_activation": "relu",
        "output_activation": "identity",
        "input_norm": _norm_to_json(model.input_norm),
        "target_norm": _norm_to_json(model.target_norm),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_weights(path: str | Path) -> MlpModel:
    """Load a model saved by save_weights; outputs reproduce bit for bit."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not a valid model file: {exc}") from None
    try:
        dims = tuple(int(d) for d in doc["layer_dims"])
        weights = [np.array(w, dtype=float) for w in doc["weights"]]
        biases = [np.array(b, dtype=float) for b in doc["biases"]]
        if doc["hidden_activation"] != "relu" or doc["output_activation"] != "identity":
            raise ValueError(
                f"unsupported activations {doc['hidden_activation']}/{doc['output_activation']}"
            )
        input_norm = _norm_from_json(doc["input_norm"])
        target_norm = _norm_from_json(doc["target_norm"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: missing or malformed field: {exc}") from None
    if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
        raise ValueError(f"{path}: {len(weights)} weight arrays for {len(dims)} layer dims")
    for i, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (dims[i], dims[i + 1]):
            raise ValueError(
                f"{path}: layer {i} weights have shape {w.shape}, "
                f"expected {(dims[i], dims[i + 1])}"
            )
        if b.shape != (dims[i + 1],):
            raise ValueError(
                f"{path}: layer {i} biases have shape {b.shape}, expected {(dims[i + 1],)}"
            )
    return MlpModel(dims, weights, biases, input_norm, target_norm)
