"""Adam training loop for both classifier architectures.

Hyper-parameter defaults follow the production setup: Adam at learning rate
1e-5 with inverse-time decay 1e-6 per update step (lr_t = lr/(1+decay*t)).
Runs are bitwise-deterministic for a fixed config: initialization, batch
shuffling and dropout each consume their own seeded stream.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import layers as L
from .ingest import DatasetManifest
from .models import Checkpoint, ModelParams, ModelSpec, forward, init_params, model_input, p_defect
from .preprocess import Patch, load_store_patches
from .tensor import GradTape, ShapeError, Tensor


@dataclass(frozen=True)
class TrainConfig:
    arch: str = "cnn3d"
    variant: str = "full"
    learning_rate: float = 1e-5
    decay: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    dropout_rate: float = 0.5

    def __post_init__(self):
        # rate 0 is allowed so that a zero-step run provably equals its init
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.decay < 0:
            raise ValueError(f"decay must be >= 0, got {self.decay}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")

    def model_spec(self) -> ModelSpec:
        return ModelSpec(arch=self.arch, variant=self.variant, dropout_rate=self.dropout_rate)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite in epoch {epoch}")


def adam_step(value: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
              t: int, config: TrainConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One bias-corrected Adam update at global step t (1-based)."""
    if grad.shape != value.shape:
        raise ShapeError(f"gradient shape {grad.shape} != parameter shape {value.shape}")
    lr_t = config.learning_rate / (1.0 + config.decay * t)
    m_next = config.beta1 * m + (1.0 - config.beta1) * grad
    v_next = config.beta2 * v + (1.0 - config.beta2) * grad * grad
    m_hat = m_next / (1.0 - config.beta1**t)
    v_hat = v_next / (1.0 - config.beta2**t)
    value_next = value - lr_t * m_hat / (np.sqrt(v_hat) + config.eps)
    return value_next, m_next, v_next


class Adam:
    """Adam state over a named parameter set."""

    def __init__(self, config: TrainConfig, weights: dict[str, Tensor]):
        self.config = config
        self.t = 0
        self._m = {k: np.zeros_like(t.data) for k, t in weights.items()}
        self._v = {k: np.zeros_like(t.data) for k, t in weights.items()}

    def step(self, weights: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name in sorted(weights):
            value, self._m[name], self._v[name] = adam_step(
                weights[name].data, grads[name], self._m[name], self._v[name], self.t, self.config
            )
            weights[name].data = value.astype(weights[name].dtype, copy=False)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_recall: float
    val_fpr: float

    def line(self) -> str:
        return f"{self.epoch}\t{self.train_loss!r}\t{self.val_recall!r}\t{self.val_fpr!r}"


def write_training_log(path: str | Path, config: TrainConfig, rows: list[EpochLog]) -> None:
    lines = [f"# axi-training-log v1 lr_t=lr/(1+decay*t) config={asdict(config)}",
             "# epoch\ttrain_loss\tval_recall@0.5\tval_fpr@0.5"]
    lines += [r.line() for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _prepare(spec: ModelSpec, patches: list[Patch]):
    inputs = [model_input(spec, p.data) for p in patches]
    labels = np.array([1 if p.label == "defect" else 0 for p in patches], dtype=np.int64)
    return inputs, labels


def score_inputs(params: ModelParams, spec: ModelSpec, inputs: list[np.ndarray]) -> np.ndarray:
    return np.array([p_defect(forward(params, spec, Tensor(x), mode="infer")) for x in inputs])


def train_on_patches(
    train_patches: list[Patch],
    val_patches: list[Patch],
    config: TrainConfig,
) -> tuple[ModelParams, ModelSpec, list[EpochLog]]:
    """Seeded mini-batch training; returns final params and the epoch log."""
    if not train_patches:
        raise ValueError("training split is empty")
    if not val_patches:
        raise ValueError("validation split is empty")
    spec = config.model_spec()
    params = init_params(spec, seed=config.seed)
    inputs, labels = _prepare(spec, train_patches)
    val_inputs, val_labels = _prepare(spec, val_patches)

    adam = Adam(config, params.weights)
    rng_shuffle = np.random.default_rng(np.random.SeedSequence((config.seed, 1)))
    rng_dropout = np.random.default_rng(np.random.SeedSequence((config.seed, 2)))

    logs: list[EpochLog] = []
    for epoch in range(1, config.epochs + 1):
        order = rng_shuffle.permutation(len(inputs))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad_sum = {k: np.zeros_like(t.data) for k, t in params.weights.items()}
            for idx in batch:
                with GradTape() as tape:
                    logits = forward(params, spec, Tensor(inputs[idx]), mode="train", rng=rng_dropout)
                    loss = L.softmax_cross_entropy(logits, int(labels[idx]))
                tape.backward(loss)
                epoch_loss += loss.item()
                for name, tensor in params.weights.items():
                    if tensor.grad is not None:
                        grad_sum[name] += tensor.grad
                        tensor.grad = None
            grads = {k: g / len(batch) for k, g in grad_sum.items()}
            adam.step(params.weights, grads)
        epoch_loss /= len(inputs)
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(epoch)

        val_scores = score_inputs(params, spec, val_inputs)
        pred = val_scores >= 0.5
        tp = int(np.sum(pred & (val_labels == 1)))
        fn = int(np.sum(~pred & (val_labels == 1)))
        fp = int(np.sum(pred & (val_labels == 0)))
        tn = int(np.sum(~pred & (val_labels == 0)))
        recall = tp / (tp + fn) if tp + fn else float("nan")
        fpr = fp / (fp + tn) if fp + tn else float("nan")
        logs.append(EpochLog(epoch=epoch, train_loss=epoch_loss, val_recall=recall, val_fpr=fpr))
    return params, spec, logs


def train_from_store(
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    store_dir: str | Path,
    config: TrainConfig,
    checkpoint_path: str | Path,
    log_path: str | Path | None = None,
) -> Checkpoint:
    """Train on pre-extracted patches and persist checkpoint (+ log)."""
    from .models import save_checkpoint, load_checkpoint

    train_patches = load_store_patches(train_manifest, store_dir)
    val_patches = load_store_patches(val_manifest, store_dir)
    params, spec, logs = train_on_patches(train_patches, val_patches, config)
    meta = {"config": asdict(config), "n_train": len(train_patches), "n_val": len(val_patches)}
    save_checkpoint(checkpoint_path, spec, params, meta=meta)
    if log_path is not None:
        write_training_log(log_path, config, logs)
    return load_checkpoint(checkpoint_path)
