"""Cross-entropy loss, the training loop, and evaluation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import OpinionPairSample, make_batches
from .errors import EmptyDataset, NonFiniteLoss, ShapeMismatch
from .metrics import MetricsReport, compute_metrics, confusion_matrix
from .model import LABEL_TO_INDEX, ModelConfig, ModelParams, build_model, forward, predict_batch
from .optim import AdamState, adam_step
from .rng import Rng
from .tensor import Tensor, backward


def cross_entropy_loss(logits: Tensor, labels, class_weights=None) -> Tensor:
    """Mean negative log-likelihood over the batch, via log-sum-exp.

    ``class_weights``, when given, holds one weight per class index
    (negative, neutral, positive); the loss becomes the weighted mean.
    """
    if logits.ndim != 2 or logits.shape[1] != 3:
        raise ShapeMismatch(f"logits must be (B, 3), got {logits.shape}")
    idx = np.array([LABEL_TO_INDEX[int(l)] for l in labels])
    b = logits.shape[0]
    if idx.shape != (b,):
        raise ShapeMismatch(f"got {idx.shape[0]} labels for {b} logit rows")
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    lse = m[:, 0] + np.log(e.sum(axis=1))
    per_sample = lse - x[np.arange(b), idx]
    if class_weights is None:
        w = np.ones(b, dtype=x.dtype)
    else:
        cw = np.asarray(class_weights, dtype=x.dtype)
        if cw.shape != (3,):
            raise ShapeMismatch(f"class_weights must have 3 entries, got {cw.shape}")
        w = cw[idx]
    w_sum = w.sum()
    loss_value = np.asarray((per_sample * w).sum() / w_sum, dtype=x.dtype)

    def bw(g):
        p = e / e.sum(axis=1, keepdims=True)
        p[np.arange(b), idx] -= 1.0
        logits._accum(p * (w / w_sum)[:, None] * float(g))

    return T._op(loss_value, (logits,), bw)


@dataclass
class TrainHistory:
    """Per-epoch record of the run."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float | None] = field(default_factory=list)
    val_accuracy: list[float | None] = field(default_factory=list)
    wall_seconds: list[float] = field(default_factory=list)
    best_epoch: int | None = None

    def records(self) -> list[dict]:
        return [
            {
                "epoch": i + 1,
                "train_loss": self.train_loss[i],
                "val_loss": self.val_loss[i],
                "val_accuracy": self.val_accuracy[i],
                "wall_seconds": self.wall_seconds[i],
            }
            for i in range(len(self.train_loss))
        ]


def _forward_eval(params, cfg, samples, batch_size, class_weights=None):
    """Loss, accuracy, and label pairs in eval mode."""
    loss_sum = 0.0
    weight_sum = 0.0
    true_all, pred_all = [], []
    for batch in make_batches(samples, batch_size):
        trace = forward(params, cfg, batch, training=False)
        loss = cross_entropy_loss(trace.logits, batch.labels, class_weights)
        idx = np.array([LABEL_TO_INDEX[int(l)] for l in batch.labels])
        if class_weights is None:
            bw = float(len(batch))
        else:
            bw = float(np.asarray(class_weights)[idx].sum())
        loss_sum += float(loss.data) * bw
        weight_sum += bw
        true_all.extend(int(l) for l in batch.labels)
        pred_all.extend(int(p) for p in predict_batch(trace))
    acc = float(np.mean(np.array(true_all) == np.array(pred_all)))
    return loss_sum / weight_sum, acc, true_all, pred_all


def train(
    cfg: ModelConfig,
    train_samples: list[OpinionPairSample],
    val_samples: list[OpinionPairSample] | None = None,
    epochs: int = 50,
    batch_size: int = 16,
    lr: float = 1e-3,
    seed: int = 0,
    class_weights=None,
    log=None,
) -> tuple[ModelParams, TrainHistory]:
    """Adam training with per-epoch seeded shuffling and dropout.

    Keeps the parameters of the best validation accuracy (ties go to the
    earlier epoch); without a validation set the final parameters win.
    A non-finite loss aborts with ``NonFiniteLoss``.
    """
    if not train_samples:
        raise EmptyDataset("training set is empty")
    params = build_model(cfg)
    state = AdamState(lr=lr)
    base = Rng(seed)
    drop_rng = base.fork(1)
    shuffle_root = base.fork(2)
    history = TrainHistory()
    best_acc = -1.0
    best_snapshot: dict[str, np.ndarray] | None = None

    for epoch in range(epochs):
        t0 = time.perf_counter()
        batches = make_batches(train_samples, batch_size, shuffle_seed=shuffle_root.fork(epoch).seed)
        loss_sum = 0.0
        seen = 0
        for batch in batches:
            params.zero_grads()
            trace = forward(params, cfg, batch, training=True, rng=drop_rng)
            loss = cross_entropy_loss(trace.logits, batch.labels, class_weights)
            value = float(loss.data)
            if not np.isfinite(value):
                raise NonFiniteLoss(f"loss became {value} at epoch {epoch + 1}")
            grads = backward(loss)
            adam_step(params, grads, state)
            loss_sum += value * len(batch)
            seen += len(batch)
        history.train_loss.append(loss_sum / seen)

        if val_samples:
            val_loss, val_acc, _, _ = _forward_eval(params, cfg, val_samples, batch_size, class_weights)
            history.val_loss.append(val_loss)
            history.val_accuracy.append(val_acc)
            if val_acc > best_acc:
                best_acc = val_acc
                best_snapshot = {name: t.data.copy() for name, t in params.named_tensors()}
                history.best_epoch = epoch + 1
        else:
            history.val_loss.append(None)
            history.val_accuracy.append(None)
        history.wall_seconds.append(time.perf_counter() - t0)
        if log is not None:
            log(epoch + 1, history)

    if best_snapshot is not None:
        for name, t in params.named_tensors():
            t.data[...] = best_snapshot[name]
    return params, history


def evaluate(
    params: ModelParams,
    cfg: ModelConfig,
    samples: list[OpinionPairSample],
    batch_size: int = 16,
) -> MetricsReport:
    """Eval-mode forward over all samples, aggregated into a report."""
    if not samples:
        raise EmptyDataset("evaluation set is empty")
    _, _, true_all, pred_all = _forward_eval(params, cfg, samples, batch_size)
    return compute_metrics(confusion_matrix(true_all, pred_all))
