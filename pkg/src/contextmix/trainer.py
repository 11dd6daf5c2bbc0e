"""Small numpy classifiers trained on mixed (soft) labels.

Two architectures: a linear softmax model and a one-hidden-layer ReLU MLP.
Gradients are derived by hand; the loss is the batch mean of the soft-target
cross-entropy ``-sum_k y_k log p_k``. Training follows the usual mixing loop:
draw a minibatch, mix it, forward, backward, SGD step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .metrics import PredictionSet, summarize
from .mixers import DEFAULT_SEED, MixPolicy, mix_batch, stack_outcomes
from .sampling import RngStream


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class ModelParams:
    """Weights plus a fixed per-feature input standardisation ``(x - shift) * scale``."""

    arch: str
    input_shape: Tuple[int, int, int]
    n_classes: int
    weights: Dict[str, np.ndarray]
    shift: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None

    @property
    def input_dim(self) -> int:
        h, w, c = self.input_shape
        return h * w * c

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.arch,
            self.input_shape,
            self.n_classes,
            {k: v.copy() for k, v in self.weights.items()},
            None if self.shift is None else self.shift.copy(),
            None if self.scale is None else self.scale.copy(),
        )

    def save(self, path) -> None:
        extra = {}
        if self.shift is not None:
            extra = {"shift": self.shift, "scale": self.scale}
        with open(path, "wb") as fh:
            np.savez(
                fh,
                arch=np.array(self.arch),
                input_shape=np.array(self.input_shape),
                n_classes=np.array(self.n_classes),
                **extra,
                **{f"w_{k}": v for k, v in self.weights.items()},
            )

    @classmethod
    def load(cls, path) -> "ModelParams":
        with np.load(Path(path)) as z:
            weights = {k[2:]: z[k] for k in z.files if k.startswith("w_")}
            shift = z["shift"] if "shift" in z.files else None
            scale = z["scale"] if "scale" in z.files else None
            return cls(str(z["arch"]), tuple(int(v) for v in z["input_shape"]), int(z["n_classes"]), weights, shift, scale)


def fit_standardizer(images: np.ndarray, std_floor: float = 0.15) -> Tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and inverse std of clean training images.

    The floor keeps near-constant background pixels from being blown up.
    """
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    return x.mean(axis=0), 1.0 / np.maximum(x.std(axis=0), std_floor)


def init_params(
    arch: str,
    input_shape: Tuple[int, int, int],
    n_classes: int,
    hidden: int = 64,
    seed: int = DEFAULT_SEED,
) -> ModelParams:
    """He-style initialisation from a dedicated RNG stream."""
    gen = RngStream(seed, 0xA11).generator()
    d = int(np.prod(input_shape))
    if arch == "linear":
        weights = {"W": gen.normal(0.0, np.sqrt(1.0 / d), size=(d, n_classes)), "b": np.zeros(n_classes)}
    elif arch == "mlp":
        weights = {
            "W1": gen.normal(0.0, np.sqrt(2.0 / d), size=(d, hidden)),
            "b1": np.zeros(hidden),
            "W2": gen.normal(0.0, np.sqrt(1.0 / hidden), size=(hidden, n_classes)),
            "b2": np.zeros(n_classes),
        }
    else:
        raise ValueError(f"unknown arch {arch!r}; expected 'linear' or 'mlp'")
    return ModelParams(arch, tuple(input_shape), n_classes, weights)


def _flatten(params: ModelParams, images: np.ndarray) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    if x.shape[1] != params.input_dim:
        raise ValueError(f"model expects {params.input_dim} inputs, got {x.shape[1]}")
    if params.shift is not None:
        x = (x - params.shift) * params.scale
    return x


def logits(params: ModelParams, images: np.ndarray) -> np.ndarray:
    x = _flatten(params, images)
    w = params.weights
    if params.arch == "linear":
        return x @ w["W"] + w["b"]
    hidden = np.maximum(x @ w["W1"] + w["b1"], 0.0)
    return hidden @ w["W2"] + w["b2"]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward_loss(params: ModelParams, images: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean soft-target cross-entropy and the raw logits."""
    z = logits(params, images)
    labels = np.asarray(labels, dtype=np.float64)
    loss = float(-(labels * _log_softmax(z)).sum(axis=1).mean())
    return loss, z


def backward(params: ModelParams, images: np.ndarray, labels: np.ndarray) -> Dict[str, np.ndarray]:
    x = _flatten(params, images)
    labels = np.asarray(labels, dtype=np.float64)
    w = params.weights
    n = len(x)
    if params.arch == "linear":
        z = x @ w["W"] + w["b"]
        dz = (np.exp(_log_softmax(z)) - labels) / n
        return {"W": x.T @ dz, "b": dz.sum(axis=0)}
    pre = x @ w["W1"] + w["b1"]
    hidden = np.maximum(pre, 0.0)
    z = hidden @ w["W2"] + w["b2"]
    dz = (np.exp(_log_softmax(z)) - labels) / n
    dhidden = (dz @ w["W2"].T) * (pre > 0)
    return {"W1": x.T @ dhidden, "b1": dhidden.sum(axis=0), "W2": hidden.T @ dz, "b2": dz.sum(axis=0)}


def predict(params: ModelParams, images: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    return np.concatenate([logits(params, images[i : i + batch_size]) for i in range(0, len(images), batch_size)])


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 64
    lr: float = 0.05
    lr_decay_epochs: Tuple[int, ...] = ()
    lr_decay_factor: float = 0.1
    policy: MixPolicy = field(default_factory=lambda: MixPolicy(kind="none"))
    seed: int = DEFAULT_SEED
    shuffle: bool = True
    arch: str = "mlp"
    hidden: int = 64
    std_floor: Optional[float] = 0.15
    workers: int = 1

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay_factor ** sum(epoch >= e for e in self.lr_decay_epochs)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    top1_error: float
    macro_f1: float
    ece: float
    mixed_fraction: float

    def line(self) -> str:
        return f"{self.epoch} {self.loss:.9f} {self.top1_error:.9f} {self.macro_f1:.9f} {self.ece:.9f}"


def evaluate(params: ModelParams, images: np.ndarray, classes: np.ndarray) -> dict:
    return summarize(PredictionSet(classes, predict(params, images)))


def train_arrays(
    images: np.ndarray,
    classes: np.ndarray,
    config: TrainConfig,
    n_classes: Optional[int] = None,
    valid: Optional[Tuple[np.ndarray, np.ndarray]] = None,
    params: Optional[ModelParams] = None,
) -> Tuple[ModelParams, List[EpochLog]]:
    """Train on in-memory arrays; validation (clean images) defaults to the training set."""
    images = np.asarray(images, dtype=np.float64)
    classes = np.asarray(classes, dtype=np.int64)
    k = int(n_classes if n_classes is not None else classes.max() + 1)
    targets = np.eye(k)[classes]
    if params is None:
        params = init_params(config.arch, images.shape[1:], k, config.hidden, config.seed)
        if config.std_floor is not None:
            params.shift, params.scale = fit_standardizer(images, config.std_floor)
    else:
        params = params.copy()
    val_x, val_y = valid if valid is not None else (images, classes)
    n = len(images)
    log: List[EpochLog] = []

    for epoch in range(config.epochs):
        order = RngStream(config.seed, (0x5EED, epoch)).generator().permutation(n) if config.shuffle else np.arange(n)
        lr = config.lr_at(epoch)
        total, seen, mixed, batches = 0.0, 0, 0, 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            x, y = images[idx], targets[idx]
            if len(idx) >= 2 and config.policy.kind != "none":
                outcomes = mix_batch(
                    x, y, config.policy, epoch, config.epochs, config.seed, b, workers=config.workers
                )
                if any(not o.is_nomix for o in outcomes):
                    mixed += 1
                x, y = stack_outcomes(outcomes)
            batches += 1
            loss, _ = forward_loss(params, x, y)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = backward(params, x, y)
            for name, g in grads.items():
                params.weights[name] -= lr * g
            total += loss * len(idx)
            seen += len(idx)
        metrics = evaluate(params, val_x, val_y)
        log.append(EpochLog(epoch, total / seen, metrics["top1_error"], metrics["macro_f1"], metrics["ece"], mixed / batches))
    return params, log


def train(manifest, config: TrainConfig, valid_manifest=None) -> Tuple[ModelParams, List[EpochLog]]:
    """Train from a :class:`~contextmix.dataio.DatasetManifest`."""
    x, y = manifest.load_arrays()
    valid = valid_manifest.load_arrays() if valid_manifest is not None else None
    return train_arrays(x, y, config, manifest.n_classes, valid)


def write_epoch_log(log: Sequence[EpochLog], path) -> None:
    Path(path).write_text("".join(e.line() + "\n" for e in log), encoding="utf-8")
