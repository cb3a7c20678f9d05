"""Two-layer fully connected classifier and its fixed-level quantization.

Plain numpy implementation: ReLU hidden layer, softmax cross-entropy,
mini-batch SGD.  Deliberately minimal; the interesting part downstream is
what temperature does to the quantized weights, not the trainer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, TrainingError
from .seeding import make_rng


@dataclass
class Mlp:
    """Dense in -> hidden (ReLU) -> out network, weights stored column-major."""

    w1: np.ndarray  # [n_in, n_hidden]
    b1: np.ndarray  # [n_hidden]
    w2: np.ndarray  # [n_hidden, n_out]
    b2: np.ndarray  # [n_out]

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"non-finite entries in {name}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits for a batch [n, n_in]."""
        h = np.maximum(x @ self.w1 + self.b1, 0.0)
        return h @ self.w2 + self.b2

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(x), axis=1)

    def accuracy(self, x: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(x) == labels))


def init_mlp(n_in: int, n_hidden: int, n_out: int, seed: int) -> Mlp:
    """He-scaled random init, zero biases."""
    rng = make_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, n_hidden))
    w2 = rng.normal(0.0, np.sqrt(2.0 / n_hidden), size=(n_hidden, n_out))
    return Mlp(w1=w1, b1=np.zeros(n_hidden), w2=w2, b2=np.zeros(n_out))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(
    mlp: Mlp, x: np.ndarray, labels: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and its analytic gradients."""
    n = x.shape[0]
    pre = x @ mlp.w1 + mlp.b1
    h = np.maximum(pre, 0.0)
    logits = h @ mlp.w2 + mlp.b2
    probs = _softmax(logits)
    # clip only inside the log; gradients use the exact probs
    loss = float(-np.mean(np.log(np.clip(probs[np.arange(n), labels], 1e-300, None))))

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grads = {
        "w2": h.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    dh = dlogits @ mlp.w2.T
    dpre = dh * (pre > 0)
    grads["w1"] = x.T @ dpre
    grads["b1"] = dpre.sum(axis=0)
    return loss, grads


def train_mlp(
    train_set,
    epochs: int,
    learning_rate: float,
    seed: int,
    n_hidden: int = 100,
    batch_size: int = 64,
    on_epoch: Callable[[int, float], None] | None = None,
) -> Mlp:
    """Mini-batch SGD; deterministic for a given seed.

    ``train_set`` is anything with ``images`` [n, n_in] in [0, 1] and integer
    ``labels``.  Raises :class:`TrainingError` on divergence (NaN loss).
    """
    x, labels = np.asarray(train_set.images), np.asarray(train_set.labels)
    if x.shape[0] == 0:
        raise ConfigurationError("empty training set")
    n_out = int(labels.max()) + 1
    mlp = init_mlp(x.shape[1], n_hidden, n_out, seed)
    rng = make_rng(seed ^ 0x5DEECE66D)  # decouple shuffle stream from init

    n = x.shape[0]
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            batch = order[start : start + batch_size]
            loss, grads = loss_and_grads(mlp, x[batch], labels[batch])
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}")
            epoch_loss += loss * len(batch)
            mlp.w1 -= learning_rate * grads["w1"]
            mlp.b1 -= learning_rate * grads["b1"]
            mlp.w2 -= learning_rate * grads["w2"]
            mlp.b2 -= learning_rate * grads["b2"]
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss / n)
    return mlp


# ---------------------------------------------------------------------------
# Fixed-level weight quantization


@dataclass(frozen=True)
class QuantizedLayer:
    """Symmetric magnitude quantization: weight = level/(levels-1) * w_max.

    ``level_index`` is signed, in [-(levels-1), levels-1]; level 0 is an
    exact zero.  An all-zero layer has w_max 0 and all levels 0.
    """

    levels: int
    level_index: np.ndarray
    w_max: float

    def __post_init__(self):
        if self.levels < 2:
            raise ConfigurationError(f"levels must be >= 2, got {self.levels}")
        if np.abs(self.level_index).max(initial=0) > self.levels - 1:
            raise ConfigurationError("level index out of range")

    def dequantize(self) -> np.ndarray:
        return self.level_index * (self.w_max / (self.levels - 1)) if self.w_max else np.zeros_like(
            self.level_index, dtype=float
        )


@dataclass(frozen=True)
class QuantizedMlp:
    layer1: QuantizedLayer
    b1: np.ndarray
    layer2: QuantizedLayer
    b2: np.ndarray
    levels: int

    def to_mlp(self) -> Mlp:
        return Mlp(
            w1=self.layer1.dequantize(),
            b1=self.b1.copy(),
            w2=self.layer2.dequantize(),
            b2=self.b2.copy(),
        )


def quantize_layer(w: np.ndarray, levels: int) -> QuantizedLayer:
    w_max = float(np.abs(w).max(initial=0.0))
    if w_max == 0.0:
        return QuantizedLayer(levels, np.zeros(w.shape, dtype=np.int64), 0.0)
    idx = np.rint(w / w_max * (levels - 1)).astype(np.int64)
    return QuantizedLayer(levels, idx, w_max)


def quantize_weights(mlp: Mlp, levels: int = 8) -> QuantizedMlp:
    """Per-layer symmetric quantization of weights; biases stay float."""
    return QuantizedMlp(
        layer1=quantize_layer(mlp.w1, levels),
        b1=mlp.b1.copy(),
        layer2=quantize_layer(mlp.w2, levels),
        b2=mlp.b2.copy(),
        levels=levels,
    )


# ---------------------------------------------------------------------------
# Checkpoint serialization (JSON, shape header + flat weight lists)


def mlp_to_json_dict(mlp: Mlp) -> dict:
    n_in, n_hidden, n_out = mlp.shape
    return {
        "shape": [n_in, n_hidden, n_out],
        "w1": mlp.w1.ravel().tolist(),
        "b1": mlp.b1.tolist(),
        "w2": mlp.w2.ravel().tolist(),
        "b2": mlp.b2.tolist(),
    }


def mlp_from_json_dict(data: dict) -> Mlp:
    try:
        n_in, n_hidden, n_out = data["shape"]
        return Mlp(
            w1=np.asarray(data["w1"], dtype=float).reshape(n_in, n_hidden),
            b1=np.asarray(data["b1"], dtype=float),
            w2=np.asarray(data["w2"], dtype=float).reshape(n_hidden, n_out),
            b2=np.asarray(data["b2"], dtype=float),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"malformed weight checkpoint: {exc}") from exc
