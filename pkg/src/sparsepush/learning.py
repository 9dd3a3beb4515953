"""Small differentiable models with exact gradients, and the local SGD update.

Parameter layout
----------------
Parameters are one flat vector, layer by layer, each layer's weights
row-major with shape ``(fan_in, fan_out)`` followed by its biases:

``linear_regression`` / ``logistic_softmax``
    ``W (d_in, d_out)``, ``b (d_out)``
``mlp_1hidden``
    ``W1 (d_in, hidden)``, ``b1 (hidden)``, ``W2 (hidden, d_out)``, ``b2 (d_out)``;
    tanh hidden activation

The layout is fixed so compressed indices mean the same thing on every node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._backend import kernels
from .errors import InvalidArgument

__all__ = [
    "Architecture",
    "Model",
    "SgdConfig",
    "loss_and_grad",
    "sgd_step",
    "evaluate",
    "predict",
    "MODEL_KINDS",
]

MODEL_KINDS = ("linear_regression", "logistic_softmax", "mlp_1hidden")


@dataclass(frozen=True)
class Architecture:
    kind: str
    d_in: int
    d_out: int
    hidden: int = 0

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise InvalidArgument(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.d_in < 1 or self.d_out < 1:
            raise InvalidArgument("model dimensions must be positive")
        if self.kind == "mlp_1hidden" and self.hidden < 1:
            raise InvalidArgument("mlp_1hidden needs hidden >= 1")

    @property
    def num_params(self) -> int:
        if self.kind == "mlp_1hidden":
            return self.d_in * self.hidden + self.hidden + self.hidden * self.d_out + self.d_out
        return self.d_in * self.d_out + self.d_out

    @property
    def is_classifier(self) -> bool:
        return self.kind != "linear_regression"

    def init_params(self, rng: np.random.Generator, dtype=np.float64) -> np.ndarray:
        """Glorot-uniform weights and zero biases."""
        parts = []
        for fan_in, fan_out in self._layers():
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            parts.append(rng.uniform(-limit, limit, fan_in * fan_out))
            parts.append(np.zeros(fan_out))
        return np.concatenate(parts).astype(dtype)

    def _layers(self) -> list[tuple[int, int]]:
        if self.kind == "mlp_1hidden":
            return [(self.d_in, self.hidden), (self.hidden, self.d_out)]
        return [(self.d_in, self.d_out)]


@dataclass
class Model:
    arch: Architecture
    params: np.ndarray

    def __post_init__(self) -> None:
        self.params = np.asarray(self.params)
        if self.params.shape != (self.arch.num_params,):
            raise InvalidArgument(
                f"{self.arch.kind} with dims ({self.arch.d_in}, {self.arch.d_out}, {self.arch.hidden}) "
                f"needs {self.arch.num_params} parameters, got {self.params.shape}"
            )


@dataclass(frozen=True)
class SgdConfig:
    """Local optimizer settings.

    ``lr_drops`` is a list of ``(epoch, multiplier)``; from ``epoch`` on the
    learning rate is multiplied by ``multiplier`` (drops compound).
    """

    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 32
    lr_drops: tuple[tuple[int, float], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.lr > 0:
            raise InvalidArgument(f"learning rate must be positive, got {self.lr}")
        if not (0.0 <= self.momentum < 1.0):
            raise InvalidArgument(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise InvalidArgument(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.batch_size < 1:
            raise InvalidArgument(f"batch_size must be >= 1, got {self.batch_size}")
        drops = tuple(sorted((int(e), float(mult)) for e, mult in self.lr_drops))
        object.__setattr__(self, "lr_drops", drops)

    def lr_at(self, epoch: int) -> float:
        lr = self.lr
        for start, mult in self.lr_drops:
            if epoch >= start:
                lr *= mult
        return lr


def _check_batch(arch: Architecture, features: np.ndarray, targets: np.ndarray) -> None:
    if features.ndim != 2 or features.shape[0] == 0:
        raise InvalidArgument("a batch needs a non-empty (samples, d_in) feature matrix")
    if features.shape[1] != arch.d_in:
        raise InvalidArgument(f"features have {features.shape[1]} columns, model expects {arch.d_in}")
    if targets.shape[0] != features.shape[0]:
        raise InvalidArgument("features and targets disagree on the number of samples")


def _xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    norm = np.exp(shifted).sum(axis=1)
    rows = np.arange(labels.shape[0])
    loss = float(np.mean(np.log(norm) - shifted[rows, labels]))
    dlogits = np.exp(shifted) / norm[:, None]
    dlogits[rows, labels] -= 1.0
    return loss, dlogits / labels.shape[0]


def _regression_targets(arch: Architecture, targets: np.ndarray) -> np.ndarray:
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] != arch.d_out:
        raise InvalidArgument(f"targets have {y.shape[1]} outputs, model expects {arch.d_out}")
    return y


def _loss_and_grad(
    arch: Architecture, params: np.ndarray, features: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray]:
    if arch.kind == "logistic_softmax":
        x = np.ascontiguousarray(features, dtype=params.dtype)
        y = np.ascontiguousarray(targets, dtype=np.int64)
        return kernels.softmax_xent_grad(np.ascontiguousarray(params), x, y, arch.d_in, arch.d_out)

    p = params.astype(np.float64, copy=False)
    x = np.asarray(features, dtype=np.float64)
    if arch.kind == "linear_regression":
        nw = arch.d_in * arch.d_out
        w = p[:nw].reshape(arch.d_in, arch.d_out)
        b = p[nw:]
        y = _regression_targets(arch, targets)
        resid = x @ w + b - y
        loss = float(np.mean(resid**2))
        dout = 2.0 * resid / resid.size
        grad = np.concatenate([(x.T @ dout).reshape(-1), dout.sum(axis=0)])
        return loss, grad.astype(params.dtype, copy=False)

    h = arch.hidden
    o1 = arch.d_in * h
    w1 = p[:o1].reshape(arch.d_in, h)
    b1 = p[o1 : o1 + h]
    o2 = o1 + h
    w2 = p[o2 : o2 + h * arch.d_out].reshape(h, arch.d_out)
    b2 = p[o2 + h * arch.d_out :]
    act = np.tanh(x @ w1 + b1)
    loss, dlogits = _xent(act @ w2 + b2, np.asarray(targets, dtype=np.int64))
    dact = (dlogits @ w2.T) * (1.0 - act**2)
    grad = np.concatenate(
        [(x.T @ dact).reshape(-1), dact.sum(axis=0), (act.T @ dlogits).reshape(-1), dlogits.sum(axis=0)]
    )
    return loss, grad.astype(params.dtype, copy=False)


def loss_and_grad(m: Model, batch: tuple[np.ndarray, np.ndarray]) -> tuple[float, np.ndarray]:
    """Mean batch loss and its exact gradient with respect to ``m.params``.

    Classifiers use cross-entropy with integer labels. Regression uses the
    mean over samples and outputs of the squared error.
    """
    features, targets = (np.asarray(a) for a in batch)
    _check_batch(m.arch, features, targets)
    if m.arch.is_classifier:
        labels = targets.astype(np.int64)
        if labels.min() < 0 or labels.max() >= m.arch.d_out:
            raise InvalidArgument(f"labels must lie in [0, {m.arch.d_out})")
    return _loss_and_grad(m.arch, m.params, features, targets)


def sgd_step(
    x: np.ndarray, grad: np.ndarray, buf: np.ndarray, cfg: SgdConfig, epoch: int
) -> tuple[np.ndarray, np.ndarray]:
    """``buf' = momentum * buf + grad + weight_decay * x``; ``x_hat = x - lr(epoch) * buf'``.

    ``buf`` is updated in place and also returned.
    """
    x_hat = kernels.sgd_momentum(x, grad, buf, cfg.lr_at(epoch), cfg.momentum, cfg.weight_decay)
    return x_hat, buf


def predict(arch: Architecture, params: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Raw outputs: logits for classifiers, predictions for regression."""
    p = np.asarray(params, dtype=np.float64)
    x = np.asarray(features, dtype=np.float64)
    if arch.kind == "mlp_1hidden":
        h = arch.hidden
        o1 = arch.d_in * h
        act = np.tanh(x @ p[:o1].reshape(arch.d_in, h) + p[o1 : o1 + h])
        o2 = o1 + h
        return act @ p[o2 : o2 + h * arch.d_out].reshape(h, arch.d_out) + p[o2 + h * arch.d_out :]
    nw = arch.d_in * arch.d_out
    return x @ p[:nw].reshape(arch.d_in, arch.d_out) + p[nw:]


def evaluate(m: Model, test_set) -> float:
    """Accuracy for classifiers (argmax, ties to the lowest class id) or MSE for regression.

    ``test_set`` is a :class:`~sparsepush.data.LabeledDataset` or a
    ``(features, targets)`` pair.
    """
    if hasattr(test_set, "features"):
        features, targets = test_set.features, test_set.labels
    else:
        features, targets = test_set
    features = np.asarray(features)
    targets = np.asarray(targets)
    if features.shape[0] == 0:
        raise InvalidArgument("cannot evaluate on an empty test set")
    out = predict(m.arch, m.params, features)
    if m.arch.is_classifier:
        return float(np.mean(np.argmax(out, axis=1) == targets))
    y = _regression_targets(m.arch, targets)
    return float(np.mean((out - y) ** 2))


def evaluate_many(arch: Architecture, params: Sequence[np.ndarray], test_set) -> list[float]:
    """:func:`evaluate` for several parameter vectors sharing one test set."""
    return [evaluate(Model(arch, p), test_set) for p in params]
