"""Mini-batch Adam training with categorical cross-entropy."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig
from .dataset import DatasetIndex, iter_batches, load_batch
from .errors import ConfigError, StorageError, TrainingDivergedError
from .metrics import PROB_CLAMP, categorical_cross_entropy, predict_index
from .model import ClassifierModel, save_checkpoint, to_tensor

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")

__all__ = [
    "EpochRecord",
    "TrainHistory",
    "categorical_cross_entropy",
    "steps_per_epoch",
    "train",
]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainHistory:
    initial_train_loss: float
    epochs: list[EpochRecord] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epochs)


def steps_per_epoch(n_samples: int, batch_size: int) -> int:
    return math.ceil(n_samples / batch_size)


def _clamped_ce(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    probs = torch.softmax(logits, dim=1).clamp(PROB_CLAMP, 1.0)
    return torch.nn.functional.nll_loss(probs.log(), labels)


def append_history(path: Path, record: EpochRecord) -> None:
    new = not path.exists()
    try:
        with path.open("a", newline="") as fh:
            writer = csv.writer(fh)
            if new:
                writer.writerow(HISTORY_FIELDS)
            writer.writerow(
                [record.epoch]
                + [repr(getattr(record, name)) for name in HISTORY_FIELDS[1:]]
            )
    except OSError as exc:
        raise StorageError(f"cannot append to {path}: {exc}") from exc


def read_history(path: str | Path) -> list[EpochRecord]:
    with Path(path).open(newline="") as fh:
        return [
            EpochRecord(
                epoch=int(row["epoch"]),
                **{name: float(row[name]) for name in HISTORY_FIELDS[1:]},
            )
            for row in csv.DictReader(fh)
        ]


def train(
    model: ClassifierModel,
    train_idx: DatasetIndex,
    val_idx: DatasetIndex,
    config: TrainConfig,
    run_dir: str | Path | None = None,
) -> tuple[ClassifierModel, TrainHistory]:
    """Fit ``model`` in place for ``config.epochs`` epochs.

    Each epoch reshuffles the training order from the seed, takes
    ``ceil(N / batch_size)`` optimizer steps, then scores the validation set
    in inference mode. With ``run_dir`` set, history rows go to
    ``history.csv`` and checkpoints to ``checkpoints/epoch_<k>``.
    """
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ConfigError("training and validation sets must both be non-empty")
    input_size = model.config.input_size
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    optimizer = torch.optim.Adam(
        model.trainable_parameters(),
        lr=config.learning_rate,
        betas=(config.beta1, config.beta2),
        eps=config.epsilon,
    )
    run_dir = Path(run_dir) if run_dir is not None else None

    probs, labels = predict_index(model, train_idx, config.batch_size)
    history = TrainHistory(initial_train_loss=categorical_cross_entropy(probs, labels))
    log.info("initial train loss %.4f", history.initial_train_loss)

    for epoch in range(1, config.epochs + 1):
        model.train()
        order = rng.permutation(len(train_idx))
        loss_sum, correct, seen = 0.0, 0, 0
        for step, records in enumerate(iter_batches(train_idx, config.batch_size, order), 1):
            batch = load_batch(records, input_size, augment=config.augment, rng=rng)
            x = to_tensor(batch.pixels)
            y = torch.from_numpy(batch.labels)
            optimizer.zero_grad()
            logits = model(x)
            loss = _clamped_ce(logits, y)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch, step, loss.item())
            loss.backward()
            optimizer.step()
            loss_sum += loss.item() * len(y)
            correct += int((logits.argmax(dim=1) == y).sum())
            seen += len(y)

        val_probs, val_labels = predict_index(model, val_idx, config.batch_size)
        record = EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / seen,
            train_acc=correct / seen,
            val_loss=categorical_cross_entropy(val_probs, val_labels),
            val_acc=float(np.mean(val_probs.argmax(axis=1) == val_labels)),
        )
        if not math.isfinite(record.val_loss):
            raise TrainingDivergedError(epoch, 0, record.val_loss)
        history.epochs.append(record)
        log.info(
            "epoch %d/%d loss %.4f acc %.4f val_loss %.4f val_acc %.4f",
            epoch, config.epochs, record.train_loss, record.train_acc,
            record.val_loss, record.val_acc,
        )
        if run_dir is not None:
            append_history(run_dir / "history.csv", record)
            if config.save_checkpoints:
                rel = f"checkpoints/epoch_{epoch}"
                save_checkpoint(model, run_dir / rel)
                history.checkpoints.append(rel)
    model.eval()
    return model, history
