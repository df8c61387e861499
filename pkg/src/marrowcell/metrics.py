"""Confusion-matrix metrics, one-vs-rest ROC-AUC and the per-set report record.

Conventions: rows of the confusion matrix are the true class, columns the
predicted class. For class ``i`` treated one-vs-rest, TP is ``cm[i, i]``,
FN the rest of row ``i``, FP the rest of column ``i``, TN everything else.
Precision, recall and AUC are macro-averaged unless stated otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dataset import DatasetIndex, iter_batches, load_batch
from .errors import UndefinedMetricError
from .model import ClassifierModel, predict_batch

PROB_CLAMP = 1e-7


class MetricWarning(UserWarning):
    """A class was degenerate for some metric (no predictions, no support...)."""


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass(frozen=True)
class PerClassCounts:
    tp: int
    tn: int
    fp: int
    fn: int


def confusion_matrix(predicted: Sequence[int], actual: Sequence[int], k: int) -> ConfusionMatrix:
    predicted = np.asarray(predicted, dtype=np.int64).ravel()
    actual = np.asarray(actual, dtype=np.int64).ravel()
    if predicted.shape != actual.shape:
        raise ValueError(f"{len(predicted)} predictions vs {len(actual)} labels")
    for name, arr in (("predicted", predicted), ("actual", actual)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise ValueError(f"{name} class index outside [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (actual, predicted), 1)
    return ConfusionMatrix(counts)


def per_class_counts(cm: ConfusionMatrix, class_i: int) -> PerClassCounts:
    if not 0 <= class_i < cm.k:
        raise ValueError(f"class {class_i} outside [0, {cm.k})")
    tp = int(cm.counts[class_i, class_i])
    fn = int(cm.counts[class_i, :].sum()) - tp
    fp = int(cm.counts[:, class_i].sum()) - tp
    return PerClassCounts(tp=tp, tn=cm.total - tp - fn - fp, fp=fp, fn=fn)


def _require_nonempty(cm: ConfusionMatrix) -> None:
    if cm.total == 0:
        raise UndefinedMetricError("metric undefined for an empty confusion matrix")


def accuracy(cm: ConfusionMatrix) -> float:
    _require_nonempty(cm)
    return int(np.trace(cm.counts)) / cm.total


def _macro(cm: ConfusionMatrix, which: str) -> float:
    # Exact rational sum of per-class ratios, rounded to float once.
    total = Fraction(0)
    degenerate = []
    for i in range(cm.k):
        c = per_class_counts(cm, i)
        denom = c.tp + (c.fp if which == "precision" else c.fn)
        if denom == 0:
            degenerate.append(i)
        else:
            total += Fraction(c.tp, denom)
    if degenerate:
        warnings.warn(
            f"{which}: classes {degenerate} have no "
            f"{'predictions' if which == 'precision' else 'support'}; counted as 0",
            MetricWarning,
            stacklevel=3,
        )
    return float(total / cm.k)


def precision(cm: ConfusionMatrix, averaging: str = "macro") -> float:
    _require_nonempty(cm)
    if averaging == "micro":
        # single-label multiclass: sum TP / sum (TP + FP) = trace / total
        return accuracy(cm)
    return _macro(cm, "precision")


def recall(cm: ConfusionMatrix, averaging: str = "macro") -> float:
    _require_nonempty(cm)
    if averaging == "micro":
        return accuracy(cm)
    return _macro(cm, "recall")


def precision_macro(cm: ConfusionMatrix) -> float:
    return precision(cm, "macro")


def recall_macro(cm: ConfusionMatrix) -> float:
    return recall(cm, "macro")


def average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their positions."""
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    # boundaries of runs of equal scores
    starts = np.flatnonzero(np.r_[True, sorted_scores[1:] != sorted_scores[:-1]])
    ends = np.r_[starts[1:], len(scores)]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + 1 + e) / 2.0
    return ranks


def binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mann-Whitney form of ROC-AUC; ties count one half."""
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both positive and negative samples")
    rank_sum = average_ranks(np.asarray(scores, dtype=np.float64))[positive].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_macro(probabilities: np.ndarray, actual: Sequence[int]) -> float:
    probabilities = np.asarray(probabilities, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.int64)
    if probabilities.ndim != 2 or len(probabilities) != len(actual):
        raise ValueError("probabilities must be (n, k) with one row per label")
    aucs = []
    skipped = []
    for c in range(probabilities.shape[1]):
        positive = actual == c
        if positive.all() or not positive.any():
            skipped.append(c)
            continue
        aucs.append(binary_auc(probabilities[:, c], positive))
    if not aucs:
        raise UndefinedMetricError("no class has both positive and negative samples")
    if skipped:
        warnings.warn(
            f"auc: classes {skipped} lack positives or negatives; skipped",
            MetricWarning,
            stacklevel=2,
        )
    return float(np.mean(aucs))


def auc_micro(probabilities: np.ndarray, actual: Sequence[int]) -> float:
    """ROC-AUC over all (sample, class) cells flattened into one binary problem."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    onehot = np.zeros_like(probabilities, dtype=bool)
    onehot[np.arange(len(actual)), np.asarray(actual)] = True
    return binary_auc(probabilities.ravel(), onehot.ravel())


def categorical_cross_entropy(probabilities: np.ndarray, labels: Sequence[int]) -> float:
    """Mean of -ln(p_true), with p clamped to [1e-7, 1] first."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probabilities.ndim != 2 or len(probabilities) != len(labels):
        raise ValueError(
            f"{len(probabilities)} probability rows vs {len(labels)} labels"
        )
    if len(labels) == 0:
        raise UndefinedMetricError("cross-entropy of an empty batch")
    p_true = np.clip(probabilities[np.arange(len(labels)), labels], PROB_CLAMP, 1.0)
    return float(np.mean(-np.log(p_true)))


@dataclass(frozen=True)
class MetricsReport:
    set_name: str
    loss: float
    accuracy: float
    precision: float
    recall: float
    auc: float
    averaging: str = "macro"

    def __post_init__(self):
        for name in ("loss", "accuracy", "precision", "recall", "auc"):
            if not math.isfinite(getattr(self, name)):
                raise UndefinedMetricError(f"{self.set_name}: {name} is not finite")

    def as_dict(self) -> dict:
        return asdict(self)


def summarize(
    set_name: str, probabilities: np.ndarray, actual: Sequence[int], averaging: str = "macro"
) -> MetricsReport:
    """Build a report from predicted probabilities and true labels."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.int64)
    try:
        cm = confusion_matrix(probabilities.argmax(axis=1), actual, probabilities.shape[1])
        auc_fn = auc_micro if averaging == "micro" else auc_macro
        auc = auc_fn(probabilities, actual)
        return MetricsReport(
            set_name=set_name,
            loss=categorical_cross_entropy(probabilities, actual),
            accuracy=accuracy(cm),
            precision=precision(cm, averaging),
            recall=recall(cm, averaging),
            auc=auc,
            averaging=averaging,
        )
    except UndefinedMetricError as exc:
        raise UndefinedMetricError(f"{set_name} set: {exc}") from exc


def evaluate(
    model: ClassifierModel,
    index: DatasetIndex,
    set_name: str,
    batch_size: int = 32,
    averaging: str = "macro",
) -> MetricsReport:
    """Run inference over a dataset index and summarize it."""
    if len(index) == 0:
        raise UndefinedMetricError(f"{set_name} set is empty")
    probs, labels = predict_index(model, index, batch_size)
    return summarize(set_name, probs, labels, averaging)


def predict_index(model: ClassifierModel, index: DatasetIndex, batch_size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    chunks, labels = [], []
    for records in iter_batches(index, batch_size):
        batch = load_batch(records, model.config.input_size)
        chunks.append(predict_batch(model, batch))
        labels.append(batch.labels)
    return np.concatenate(chunks), np.concatenate(labels)
