"""Training loop, learning-rate schedule, evaluation and run-directory output."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NonFiniteLossError, TrainingError, UsageError
from .model import ModelParams, loss_and_grads, forward, save_checkpoint
from .nn.params import adam_step

__all__ = [
    "TrainConfig",
    "EpochStats",
    "TrainResult",
    "EvalResult",
    "decayed_lr",
    "plateaued",
    "train",
    "evaluate",
    "save_run",
    "METRICS_HEADER",
]

logger = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "lr", "train_loss", "train_acc", "val_loss", "val_acc"]


@dataclass
class TrainConfig:
    """Optimization hyperparameters.

    The learning rate starts at ``lr_initial`` and, checked every
    ``plateau_window`` epochs, is multiplied by ``lr_factor`` (floored at
    ``lr_final``) when the best validation accuracy has not improved within
    the window. Set ``decay_on_plateau`` False to decay unconditionally at
    every window boundary instead.
    """

    epochs: int = 2000
    batch_size: int = 128
    lr_initial: float = 1e-3
    lr_final: float = 1e-4
    lr_factor: float = 2.0 ** (-1.0 / 3.0)
    plateau_window: int = 100
    decay_on_plateau: bool = True
    val_fraction: float = 0.2
    seed: int = 0
    early_stop_patience: int = 0  # 0 disables early stopping

    def validate(self):
        problems = []
        if self.epochs < 0:
            problems.append(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_initial <= 0:
            problems.append(f"lr_initial must be > 0, got {self.lr_initial}")
        if self.lr_final <= 0 or self.lr_final > self.lr_initial:
            problems.append(
                f"lr_final must be in (0, lr_initial], got {self.lr_final}"
            )
        if not 0.0 < self.lr_factor <= 1.0:
            problems.append(f"lr_factor must be in (0, 1], got {self.lr_factor}")
        if self.plateau_window < 1:
            problems.append(f"plateau_window must be >= 1, got {self.plateau_window}")
        if not 0.0 <= self.val_fraction < 1.0:
            problems.append(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if self.early_stop_patience < 0:
            problems.append(f"early_stop_patience must be >= 0, got {self.early_stop_patience}")
        if problems:
            raise ConfigError("invalid train config: " + "; ".join(problems))


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainResult:
    best_params: ModelParams
    final_params: ModelParams
    history: list
    best_epoch: int
    best_val_acc: float


@dataclass
class EvalResult:
    """Overall plus per-class accuracy and the confusion matrix.

    ``per_class_accuracy`` holds NaN for classes with no test segments
    (reported as not applicable downstream); ``confusion`` rows are true
    classes, columns predictions.
    """

    overall_accuracy: float
    per_class_accuracy: np.ndarray
    confusion: np.ndarray
    support: np.ndarray


def decayed_lr(lr, config):
    """One reduction step: multiply by the factor, floored at lr_final."""
    return max(lr * config.lr_factor, config.lr_final)


def plateaued(val_accs, window):
    """True when the running-best accuracy last improved more than ``window`` epochs ago.

    ``val_accs`` is the per-epoch validation accuracy so far (epoch 1 first).
    Improvement means strictly exceeding the previous best.
    """
    if len(val_accs) < window:
        return False
    best_epoch = 0
    best = -np.inf
    for i, acc in enumerate(val_accs, start=1):
        if acc > best:
            best = acc
            best_epoch = i
    return best_epoch <= len(val_accs) - window


def _batch_indices(n, batch_size, rng):
    """A shuffled pass over range(n) in constant-size batches (last may be short)."""
    perm = rng.permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def _eval_loss_acc(params, x, y, chunk=1024):
    total_loss = 0.0
    correct = 0
    for i in range(0, len(x), chunk):
        probs, cache = forward(params, x[i : i + chunk], mode="eval")
        yi = y[i : i + chunk]
        logits = cache["logits"]
        shift = logits - logits.max(axis=1, keepdims=True)
        losses = np.log(np.exp(shift).sum(axis=1)) - shift[np.arange(len(yi)), yi]
        total_loss += float(losses.sum())
        correct += int((probs.argmax(axis=1) == yi).sum())
    return total_loss / len(x), correct / len(x)


def train(params, train_x, train_y, config, val_x=None, val_y=None, callback=None):
    """Fit ``params`` in place and track the best-validation checkpoint.

    Args:
        params: built ModelParams (modified in place; the returned
            ``best_params`` is an independent copy).
        train_x, train_y: training segments [N, L] and integer labels [N].
        config: TrainConfig.
        val_x, val_y: validation split. When omitted, ``config.val_fraction``
            of the training data is carved off under ``config.seed``.
        callback: optional ``callback(stats: EpochStats)`` per epoch.

    Returns:
        TrainResult. Raises NonFiniteLossError (carrying the best checkpoint
        so far and the partial history) if the loss or a gradient blows up.
    """
    config.validate()
    train_x = np.asarray(train_x, dtype=np.float64)
    train_y = np.asarray(train_y)
    if len(train_x) == 0:
        raise UsageError("train called with an empty training set")
    if train_x.ndim != 2 or len(train_y) != len(train_x):
        raise UsageError("train expects train_x [N, L] with matching labels")
    rng = np.random.default_rng(config.seed)

    if val_x is None and config.val_fraction > 0.0:
        n_val = int(round(config.val_fraction * len(train_x)))
        if n_val >= 1 and n_val < len(train_x):
            perm = rng.permutation(len(train_x))
            val_idx, train_idx = perm[:n_val], perm[n_val:]
            val_x, val_y = train_x[val_idx], train_y[val_idx]
            train_x, train_y = train_x[train_idx], train_y[train_idx]
    has_val = val_x is not None and len(val_x) > 0
    if has_val:
        val_x = np.asarray(val_x, dtype=np.float64)
        val_y = np.asarray(val_y)

    if params.config.standardize:
        mean = float(train_x.mean())
        std = float(train_x.std())
        params.buffers["input_mean"][0] = mean
        params.buffers["input_std"][0] = max(std, 1e-12)

    history = []
    val_acc_series = []
    best_epoch = 0
    best_val_acc = -np.inf
    best_params = None
    lr = config.lr_initial
    n = len(train_x)

    for epoch in range(1, config.epochs + 1):
        epoch_loss = 0.0
        epoch_correct = 0
        for idx in _batch_indices(n, config.batch_size, rng):
            try:
                loss, probs = loss_and_grads(params, train_x[idx], train_y[idx], mode="train", rng=rng)
            except FloatingPointError as exc:  # pragma: no cover - defensive
                raise NonFiniteLossError(str(exc), epoch, best_params, history)
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite training loss at epoch {epoch}", epoch, best_params, history
                )
            try:
                for blk in params.blocks.values():
                    adam_step(blk, lr)
            except TrainingError as exc:
                raise NonFiniteLossError(str(exc), epoch, best_params, history)
            epoch_loss += loss * len(idx)
            epoch_correct += int((probs.argmax(axis=1) == train_y[idx]).sum())
        train_loss = epoch_loss / n
        train_acc = epoch_correct / n  # estimated from the dropout-active passes

        if has_val:
            val_loss, val_acc = _eval_loss_acc(params, val_x, val_y)
        else:
            val_loss, val_acc = float("nan"), float("nan")
        stats = EpochStats(epoch, lr, train_loss, train_acc, val_loss, val_acc)
        history.append(stats)
        if callback is not None:
            callback(stats)

        if has_val:
            val_acc_series.append(val_acc)
            if val_acc > best_val_acc:
                best_val_acc = val_acc
                best_epoch = epoch
                best_params = params.copy()

        if config.early_stop_patience and has_val and epoch - best_epoch >= config.early_stop_patience:
            logger.info("early stop at epoch %d (no improvement since %d)", epoch, best_epoch)
            break

        if epoch % config.plateau_window == 0:
            if not config.decay_on_plateau or plateaued(val_acc_series, config.plateau_window):
                new_lr = decayed_lr(lr, config)
                if new_lr != lr:
                    logger.info("epoch %d: lr %.3g -> %.3g", epoch, lr, new_lr)
                lr = new_lr

    if best_params is None:  # no validation split: final weights are the checkpoint
        best_params = params.copy()
        best_epoch = len(history)
        best_val_acc = float("nan")
    return TrainResult(
        best_params=best_params,
        final_params=params,
        history=history,
        best_epoch=best_epoch,
        best_val_acc=best_val_acc,
    )


def evaluate(params, x, y, num_classes=None, chunk=1024):
    """Eval-mode accuracy breakdown over a labelled segment set."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if num_classes is None:
        num_classes = params.config.num_classes
    if len(x) == 0:
        raise UsageError("evaluate called with an empty segment set")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    for i in range(0, len(x), chunk):
        pred = forward(params, x[i : i + chunk], mode="eval")[0].argmax(axis=1)
        np.add.at(confusion, (y[i : i + chunk], pred), 1)
    support = confusion.sum(axis=1)
    with np.errstate(invalid="ignore"):
        per_class = np.where(support > 0, np.diag(confusion) / np.maximum(support, 1), np.nan)
    overall = float(np.diag(confusion).sum() / len(x))
    return EvalResult(
        overall_accuracy=overall,
        per_class_accuracy=per_class,
        confusion=confusion,
        support=support,
    )


def eval_result_to_dict(result, class_names=None):
    """JSON-ready form of an EvalResult; NaN accuracies become None."""
    per_class = [None if np.isnan(a) else float(a) for a in result.per_class_accuracy]
    out = {
        "overall_accuracy": result.overall_accuracy,
        "per_class_accuracy": per_class,
        "support": result.support.tolist(),
        "confusion": result.confusion.tolist(),
    }
    if class_names is not None:
        out["class_names"] = list(class_names)
    return out


def write_metrics_csv(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for s in history:
            writer.writerow([s.epoch, repr(s.lr), repr(s.train_loss), repr(s.train_acc),
                             repr(s.val_loss), repr(s.val_acc)])


def save_run(run_dir, result, model_params, train_config, eval_results=None,
             class_names=None, extra_config=None, checkpoint_metadata=None):
    """Write a self-contained training run directory.

    Contents: ``config.json`` (model + train config snapshot), ``metrics.csv``
    (one row per epoch), ``checkpoint.npz`` (best-validation weights) and one
    ``eval_<name>.json`` per entry of ``eval_results``.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    snapshot = {
        "model": asdict(model_params.config),
        "train": asdict(train_config),
        "best_epoch": result.best_epoch,
        "best_val_acc": None if np.isnan(result.best_val_acc) else result.best_val_acc,
    }
    if extra_config:
        snapshot.update(extra_config)
    (run_dir / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n")
    write_metrics_csv(run_dir / "metrics.csv", result.history)
    meta = dict(checkpoint_metadata or {})
    meta.setdefault("best_epoch", result.best_epoch)
    save_checkpoint(result.best_params, run_dir / "checkpoint.npz", metadata=meta)
    for name, ev in (eval_results or {}).items():
        payload = eval_result_to_dict(ev, class_names)
        (run_dir / f"eval_{name}.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n"
        )
    return run_dir
