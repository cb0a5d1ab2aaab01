"""Classifier heads trained on frozen embeddings.

A head is either a linear map ``d -> C`` or a one-hidden-layer ReLU network.
Training minimizes soft cross-entropy with decoupled-weight-decay
adaptive-moment updates and a warmup + cosine learning-rate schedule; given
a seed it is fully deterministic. Heads accept hard integer targets or
row-stochastic soft targets, which is what lets the self-training phase fit
ensembled pseudo-label distributions directly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .data import EmbeddingSet
from .errors import DivergenceError, ShapeError

ARCH_LINEAR = "linear"
ARCH_MLP = "mlp"


@dataclass(frozen=True)
class HeadConfig:
    architecture: str = ARCH_LINEAR
    hidden_width: int = 256
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 30
    batch_size: int = 32
    warmup_fraction: float = 0.025
    seed: int = 0
    label_smoothing: float = 0.0

    def __post_init__(self):
        if self.architecture not in (ARCH_LINEAR, ARCH_MLP):
            raise ShapeError(f"unknown architecture {self.architecture!r}")
        if self.architecture == ARCH_MLP and self.hidden_width < 1:
            raise ShapeError("hidden_width must be >= 1 for mlp heads")
        if self.learning_rate <= 0:
            raise ShapeError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ShapeError("weight_decay must be >= 0")
        if self.epochs < 0:
            raise ShapeError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ShapeError("batch_size must be >= 1")
        if not (0.0 <= self.warmup_fraction < 1.0):
            raise ShapeError("warmup_fraction must be in [0, 1)")
        if not (0.0 <= self.label_smoothing < 1.0):
            raise ShapeError("label_smoothing must be in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "hidden_width": self.hidden_width,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "warmup_fraction": self.warmup_fraction,
            "seed": self.seed,
            "label_smoothing": self.label_smoothing,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "HeadConfig":
        known = {f: doc[f] for f in cls.__dataclass_fields__ if f in doc}
        return cls(**known)


@dataclass(frozen=True)
class TrainTargets:
    """Hard integer labels or a row-stochastic soft-label matrix."""

    hard: np.ndarray | None = None
    soft: np.ndarray | None = None

    def __post_init__(self):
        if (self.hard is None) == (self.soft is None):
            raise ShapeError("exactly one of hard/soft targets required")
        if self.hard is not None:
            object.__setattr__(self, "hard", np.asarray(self.hard, dtype=np.int64))
        else:
            soft = np.asarray(self.soft, dtype=np.float64)
            if soft.ndim != 2:
                raise ShapeError("soft targets must be 2-D")
            if np.any(soft < 0):
                raise ShapeError("soft targets must be non-negative")
            if soft.shape[0] > 0 and np.max(np.abs(soft.sum(axis=1) - 1.0)) > 1e-6:
                raise ShapeError("soft target rows must sum to 1 within 1e-6")
            object.__setattr__(self, "soft", soft)

    def __len__(self) -> int:
        return len(self.hard) if self.hard is not None else len(self.soft)

    def as_soft(self, class_count: int, label_smoothing: float = 0.0) -> np.ndarray:
        if self.hard is not None:
            if len(self.hard) and (self.hard.min() < 0 or self.hard.max() >= class_count):
                raise ShapeError(f"hard labels must lie in [0, {class_count})")
            soft = np.zeros((len(self.hard), class_count), dtype=np.float64)
            soft[np.arange(len(self.hard)), self.hard] = 1.0
        else:
            if self.soft.shape[1] != class_count:
                raise ShapeError("soft target width must equal class_count")
            soft = self.soft.copy()
        if label_smoothing > 0.0:
            soft = (1.0 - label_smoothing) * soft + label_smoothing / class_count
        return soft


@dataclass(frozen=True)
class HeadModel:
    """Trained head parameters. Immutable and safe to share."""

    architecture: str
    input_dim: int
    class_count: int
    hidden_width: int
    params: tuple[np.ndarray, ...]
    seed: int = 0

    def __post_init__(self):
        for p in self.params:
            if not np.all(np.isfinite(p)):
                raise ShapeError("head parameters must be finite")
            p.setflags(write=False)


@dataclass(frozen=True)
class ModelOutputs:
    """Per-sample features, logits, and argmax predictions of one model."""

    features: np.ndarray
    logits: np.ndarray
    predictions: np.ndarray
    ids: np.ndarray = field(default=None)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted exponential normalization along the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=-1, keepdims=True)


def init_params(config: HeadConfig, input_dim: int, class_count: int,
                rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    """Uniform init scaled by 1/sqrt(fan_in); zero biases."""
    if config.architecture == ARCH_LINEAR:
        a = 1.0 / np.sqrt(input_dim)
        W = rng.uniform(-a, a, size=(input_dim, class_count))
        return (W, np.zeros(class_count))
    h = config.hidden_width
    a1 = 1.0 / np.sqrt(input_dim)
    W1 = rng.uniform(-a1, a1, size=(input_dim, h))
    a2 = 1.0 / np.sqrt(h)
    W2 = rng.uniform(-a2, a2, size=(h, class_count))
    return (W1, np.zeros(h), W2, np.zeros(class_count))


def train_head(train: EmbeddingSet, targets: TrainTargets, config: HeadConfig,
               class_count: int | None = None,
               backend: str | None = None) -> HeadModel:
    """Train a head on frozen features against hard or soft targets.

    ``class_count`` defaults to the training set's. Deterministic given the
    config seed: parameter init and every epoch's batch order come from one
    seeded generator, and the kernel itself is single-threaded. ``backend``
    forces the python or compiled kernel; default is the import-time pick.
    """
    C = class_count if class_count is not None else train.class_count
    if C < 1:
        raise ShapeError("class_count must be known to train a head")
    if train.n == 0:
        raise ShapeError("cannot train on an empty set")
    if len(targets) != train.n:
        raise ShapeError(
            f"targets length {len(targets)} != training rows {train.n}"
        )

    X = np.ascontiguousarray(train.features, dtype=np.float64)
    T = np.ascontiguousarray(targets.as_soft(C, config.label_smoothing))
    rng = np.random.default_rng(config.seed)
    params = tuple(np.ascontiguousarray(p)
                   for p in init_params(config, train.d, C, rng))
    if config.epochs == 0:
        return HeadModel(config.architecture, train.d, C, config.hidden_width,
                         params, seed=config.seed)

    perms = np.stack([rng.permutation(train.n) for _ in range(config.epochs)])
    perms = np.ascontiguousarray(perms, dtype=np.int64)
    batches_per_epoch = -(-train.n // config.batch_size)
    total_iters = config.epochs * batches_per_epoch
    warmup_iters = int(np.floor(config.warmup_fraction * total_iters))

    kernels = _backend.get_backend(backend)
    if config.architecture == ARCH_LINEAR:
        W, b = params
        bad = kernels.train_linear(X, T, W, b, perms, config.batch_size,
                                   config.learning_rate, config.weight_decay,
                                   warmup_iters, total_iters)
    else:
        W1, b1, W2, b2 = params
        bad = kernels.train_mlp(X, T, W1, b1, W2, b2, perms, config.batch_size,
                                config.learning_rate, config.weight_decay,
                                warmup_iters, total_iters)
    if bad >= 0:
        raise DivergenceError(bad)
    return HeadModel(config.architecture, train.d, C, config.hidden_width,
                     params, seed=config.seed)


def forward(model: HeadModel, dataset: EmbeddingSet) -> ModelOutputs:
    """Features, logits, and argmax predictions (ties to lowest class)."""
    if dataset.d != model.input_dim:
        raise ShapeError(
            f"feature dim {dataset.d} != model input dim {model.input_dim}"
        )
    X = dataset.features
    if model.architecture == ARCH_LINEAR:
        W, b = model.params
        feats = X
        logits = X @ W + b
    else:
        W1, b1, W2, b2 = model.params
        feats = np.maximum(X @ W1 + b1, 0.0)
        logits = feats @ W2 + b2
    preds = np.argmax(logits, axis=1) if len(logits) else np.zeros(0, dtype=np.int64)
    return ModelOutputs(features=feats, logits=logits,
                        predictions=preds.astype(np.int64), ids=dataset.ids)


def loss_value(model: HeadModel, features: np.ndarray, soft_targets: np.ndarray) -> float:
    """Mean soft cross-entropy of the model on a batch."""
    logits = _raw_logits(model, features)
    logq = logits - logits.max(axis=1, keepdims=True)
    logq = logq - np.log(np.exp(logq).sum(axis=1, keepdims=True))
    return float(-np.sum(soft_targets * logq) / len(features))


def _raw_logits(model: HeadModel, X: np.ndarray) -> np.ndarray:
    if model.architecture == ARCH_LINEAR:
        W, b = model.params
        return X @ W + b
    W1, b1, W2, b2 = model.params
    return np.maximum(X @ W1 + b1, 0.0) @ W2 + b2


def loss_gradient(model: HeadModel, features: np.ndarray,
                  soft_targets: np.ndarray) -> tuple[np.ndarray, ...]:
    """Analytic gradients of mean soft cross-entropy wrt each parameter.

    Decoupled weight decay is deliberately absent: the optimizer applies it
    directly to the parameters, not through the loss.
    """
    X = np.asarray(features, dtype=np.float64)
    T = np.asarray(soft_targets, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ShapeError("batch features must be 2-D with model input dim")
    if T.shape != (X.shape[0], model.class_count):
        raise ShapeError("targets must be batch x class_count")
    B = X.shape[0]
    if model.architecture == ARCH_LINEAR:
        W, b = model.params
        G = (softmax(X @ W + b) - T) / B
        return (X.T @ G, G.sum(axis=0))
    W1, b1, W2, b2 = model.params
    Z1 = X @ W1 + b1
    A1 = np.maximum(Z1, 0.0)
    G = (softmax(A1 @ W2 + b2) - T) / B
    dZ1 = (G @ W2.T) * (Z1 > 0.0)
    return (X.T @ dZ1, dZ1.sum(axis=0), A1.T @ G, G.sum(axis=0))


def save_head(model: HeadModel, path) -> None:
    """JSON header + little-endian f32 parameter blob (.head)."""
    header = {
        "architecture": model.architecture,
        "input_dim": model.input_dim,
        "class_count": model.class_count,
        "hidden_width": model.hidden_width,
        "seed": model.seed,
        "param_shapes": [list(p.shape) for p in model.params],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    chunks = [struct.pack("<I", len(blob)), blob]
    for p in model.params:
        chunks.append(np.ascontiguousarray(p, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_head(path) -> HeadModel:
    buf = Path(path).read_bytes()
    (hlen,) = struct.unpack_from("<I", buf, 0)
    header = json.loads(buf[4:4 + hlen].decode())
    offset = 4 + hlen
    params = []
    for shape in header["param_shapes"]:
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=offset)
        params.append(arr.reshape(shape).astype(np.float64))
        offset += count * 4
    return HeadModel(
        architecture=header["architecture"],
        input_dim=header["input_dim"],
        class_count=header["class_count"],
        hidden_width=header["hidden_width"],
        params=tuple(params),
        seed=header["seed"],
    )
