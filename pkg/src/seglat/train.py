"""Training loop: AdamW, epoch-level warmup/cosine/cooldown schedule, evaluation.

One epoch is a full seeded shuffle of the train split in mini-batches (the
final short batch is kept). After every epoch the validation split is
evaluated; the parameters with the best validation macro F1 are retained
next to the final ones.
"""

from __future__ import annotations

import fnmatch
import logging
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from seglat import tensorcore as tc
from seglat.checkpoint import Checkpoint, save_checkpoint
from seglat.dataset import DatasetManifest, ManifestEntry, Split
from seglat.errors import ConfigurationError, DataError, NonFiniteError, TrainingAborted, UsageError
from seglat.metrics import compute_metrics
from seglat.model import ModelParams, forward_batch, segment_input
from seglat.reports import EpochRecord, Metrics, append_jsonl
from seglat.seeding import substream
from seglat.tokenizer import TokenizerConfig

logger = logging.getLogger("seglat.train")

#: Parameters matching these patterns are excluded from weight decay.
DEFAULT_NO_DECAY = ("*.gain", "*.bias", "*.bo", "*.b1", "*.b2", "head.b", "latent_seed", "latents")

HISTORY_NAME = "history.jsonl"
FINAL_NAME = "final.ckpt"
BEST_NAME = "best.ckpt"


class TrainConfig(BaseModel):
    """Optimizer and schedule settings; defaults follow the reference training table."""

    model_config = ConfigDict(extra="forbid")

    base_lr: float = Field(default=2e-5, gt=0)
    min_lr: float = Field(default=1e-6, ge=0)
    weight_decay: float = Field(default=0.1, ge=0)
    epochs_total: int = Field(default=200, ge=1)
    epochs_warmup: int = Field(default=20, ge=0)
    epochs_cooldown: int = Field(default=10, ge=0)
    batch_size: int = Field(default=32, ge=1)
    seed: int = 0
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    no_decay: list[str] = Field(default_factory=lambda: list(DEFAULT_NO_DECAY))

    @model_validator(mode="after")
    def _check_phases(self) -> TrainConfig:
        if self.epochs_warmup + self.epochs_cooldown > self.epochs_total:
            raise ValueError(
                f"warmup ({self.epochs_warmup}) + cooldown ({self.epochs_cooldown}) "
                f"exceeds total epochs ({self.epochs_total})"
            )
        if self.min_lr > self.base_lr:
            raise ValueError(f"min_lr {self.min_lr} exceeds base_lr {self.base_lr}")
        return self


# ---------------------------------------------------------------------------
# Schedule and optimizer
# ---------------------------------------------------------------------------


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate for *epoch* (0-based).

    Linear warmup reaching ``base_lr`` on the last warmup epoch, cosine decay
    from ``base_lr`` to ``min_lr`` up to the cooldown, then ``min_lr``.
    """
    if not 0 <= epoch < cfg.epochs_total:
        raise UsageError(f"epoch {epoch} outside [0, {cfg.epochs_total})")
    warm = cfg.epochs_warmup
    decay_end = cfg.epochs_total - cfg.epochs_cooldown
    if epoch < warm:
        return cfg.base_lr * (epoch + 1) / warm
    if epoch >= decay_end:
        return cfg.min_lr
    if epoch == warm:
        return cfg.base_lr
    progress = (epoch - warm) / (decay_end - warm)
    return cfg.min_lr + (cfg.base_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * progress)) / 2.0


@dataclass
class OptState:
    """AdamW moment buffers and step count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def decays(name: str, no_decay: Sequence[str] = DEFAULT_NO_DECAY) -> bool:
    return not any(fnmatch.fnmatchcase(name, pattern) for pattern in no_decay)


def adamw_step(
    params: ModelParams,
    grads: Mapping[str, np.ndarray],
    state: OptState,
    lr: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    *,
    no_decay: Sequence[str] = DEFAULT_NO_DECAY,
) -> OptState:
    """One decoupled-weight-decay Adam update, applied to *params* in place.

    ``theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)``;
    tensors matching *no_decay* skip the decay term. Missing gradients count
    as zero.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingAborted(f"non-finite gradient for parameter {name} at step {state.step}")

    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - beta1) * g if m is None else beta1 * m + (1.0 - beta1) * g
        v = (1.0 - beta2) * g * g if v is None else beta2 * v + (1.0 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        if weight_decay and decays(name, no_decay):
            update = update + weight_decay * p.data
        p.data = p.data - lr * update
    return state


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EncodedSplit:
    """Segmented tokens of one split, stacked for batching."""

    segments: np.ndarray
    mask: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def encode_inputs(
    inputs: Sequence[np.ndarray],
    labels: Sequence[int],
    params: ModelParams,
    tokenizer: TokenizerConfig,
    n_segments: int,
) -> EncodedSplit:
    """Tokenize and segment model inputs; all inputs must share one shape."""
    if not inputs:
        raise ConfigurationError("cannot encode an empty split")
    shapes = {np.shape(x) for x in inputs}
    if len(shapes) != 1:
        raise DataError(f"inputs in one split must share a shape, got {sorted(shapes)}")
    segs = [segment_input(x, tokenizer, n_segments, params.cfg) for x in inputs]
    return EncodedSplit(
        segments=np.stack([s.segments for s in segs]),
        mask=np.stack([s.mask for s in segs]),
        labels=np.asarray(labels, dtype=np.int64),
    )


def encode_split(
    manifest: DatasetManifest,
    split: Split,
    params: ModelParams,
    tokenizer: TokenizerConfig,
    n_segments: int,
) -> EncodedSplit:
    entries: list[ManifestEntry] = manifest.split(split)
    if not entries:
        raise ConfigurationError(f"split {split!r} is empty")
    inputs = [manifest.load_input(e) for e in entries]
    return encode_inputs(inputs, [e.label for e in entries], params, tokenizer, n_segments)


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    return [order[i : i + batch_size] for i in range(0, order.size, batch_size)]


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def predict_split(params: ModelParams, data: EncodedSplit, batch_size: int = 32) -> np.ndarray:
    """Argmax class per sample (ties resolve to the lowest class index)."""
    preds = []
    with tc.no_grad():
        for idx in _batches(np.arange(len(data)), batch_size):
            logits = forward_batch(params, data.segments[idx], data.mask[idx]).data
            preds.append(np.argmax(logits, axis=1))
    return np.concatenate(preds)


def evaluate(params: ModelParams, data: EncodedSplit, batch_size: int = 32) -> Metrics:
    """Metrics of *params* on an encoded split."""
    if len(data) == 0:
        raise ConfigurationError("cannot evaluate an empty split")
    preds = predict_split(params, data, batch_size)
    return compute_metrics(data.labels, preds, params.cfg.n_classes)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    params: ModelParams
    best_params: ModelParams
    best_epoch: int
    history: list[EpochRecord]


def train_step(
    params: ModelParams,
    data: EncodedSplit,
    idx: np.ndarray,
    state: OptState,
    lr: float,
    cfg: TrainConfig,
) -> float:
    """Forward, backward and one optimizer update on the batch *idx*; returns its loss."""
    params.zero_grad()
    logits = forward_batch(params, data.segments[idx], data.mask[idx])
    loss = tc.cross_entropy(logits, data.labels[idx])
    tc.backward(loss)
    grads = {name: p.grad for name, p in params.items() if p.grad is not None}
    adamw_step(
        params,
        grads,
        state,
        lr,
        cfg.weight_decay,
        cfg.beta1,
        cfg.beta2,
        cfg.eps,
        no_decay=cfg.no_decay,
    )
    return loss.item()


def train(
    params: ModelParams,
    train_data: EncodedSplit,
    val_data: EncodedSplit,
    cfg: TrainConfig,
    *,
    run_dir: str | Path | None = None,
    tokenizer: TokenizerConfig | None = None,
    metadata: dict | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Train *params* in place for ``cfg.epochs_total`` epochs.

    Args:
        params: Initialized parameters; updated in place.
        train_data: Encoded train split.
        val_data: Encoded validation split.
        cfg: Optimizer and schedule settings.
        run_dir: If given, ``history.jsonl``, ``final.ckpt`` and
            ``best.ckpt`` are written there.
        tokenizer: Tokenizer config stored in checkpoints.
        metadata: Extra run metadata stored in checkpoints.
        on_epoch: Called with each epoch record.
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise ConfigurationError("train and val splits must be non-empty")
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / HISTORY_NAME).write_text("", encoding="utf-8")

    rng = substream(cfg.seed, "shuffle")
    state = OptState()
    history: list[EpochRecord] = []
    best_params = params.copy()
    best_epoch = -1
    best_f1 = -1.0

    for epoch in range(cfg.epochs_total):
        lr = lr_at_epoch(cfg, epoch)
        order = rng.permutation(len(train_data))
        total = 0.0
        try:
            for idx in _batches(order, cfg.batch_size):
                total += train_step(params, train_data, idx, state, lr, cfg) * idx.size
        except NonFiniteError as exc:
            raise TrainingAborted(f"epoch {epoch}: {exc}") from exc

        record = EpochRecord(
            epoch=epoch,
            lr=lr,
            train_loss=total / len(train_data),
            val=evaluate(params, val_data, cfg.batch_size),
        )
        history.append(record)
        if record.val.macro_f1 > best_f1:
            best_f1 = record.val.macro_f1
            best_epoch = epoch
            best_params = params.copy()
        logger.info(
            "epoch %d/%d lr=%.3g loss=%.4f val_acc=%.4f val_f1=%.4f",
            epoch + 1,
            cfg.epochs_total,
            lr,
            record.train_loss,
            record.val.accuracy,
            record.val.macro_f1,
        )
        if run_dir is not None:
            append_jsonl(run_dir / HISTORY_NAME, record)
        if on_epoch is not None:
            on_epoch(record)

    params.zero_grad()
    if run_dir is not None:
        tok = tokenizer or TokenizerConfig()
        meta = dict(metadata or {})
        save_checkpoint(run_dir / FINAL_NAME, Checkpoint(params, tok, {**meta, "epoch": epoch}))
        save_checkpoint(
            run_dir / BEST_NAME, Checkpoint(best_params, tok, {**meta, "epoch": best_epoch})
        )
    return TrainResult(
        params=params, best_params=best_params, best_epoch=best_epoch, history=history
    )


def train_from_manifest(
    params: ModelParams,
    manifest: DatasetManifest,
    tokenizer: TokenizerConfig,
    n_segments: int,
    cfg: TrainConfig,
    **kwargs,
) -> TrainResult:
    """Encode the train/val splits of *manifest* and run :func:`train`."""
    train_data = encode_split(manifest, "train", params, tokenizer, n_segments)
    val_data = encode_split(manifest, "val", params, tokenizer, n_segments)
    return train(params, train_data, val_data, cfg, tokenizer=tokenizer, **kwargs)
