"""
Classification and noise-selection metrics
"""
from typing import Tuple

import numpy as np
from sklearn import metrics as skm

from core.errors import EmptyBatchError, NotApplicableError, ShapeError


def _pair(pred, truth) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if pred.shape != truth.shape:
        raise ShapeError(f"{pred.size} predictions vs {truth.size} labels")
    if pred.size == 0:
        raise EmptyBatchError("metrics need at least one sample")
    return pred, truth


def _in_range(pred, truth, class_count: int) -> Tuple[np.ndarray, np.ndarray]:
    pred, truth = _pair(pred, truth)
    if pred.min() < 0 or truth.min() < 0 or pred.max() >= class_count or truth.max() >= class_count:
        raise ValueError(f"labels must lie in [0, {class_count})")
    return pred, truth


def accuracy(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(skm.accuracy_score(truth, pred))


def confusion_matrix(pred, truth, class_count: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes"""
    pred, truth = _in_range(pred, truth, class_count)
    return skm.confusion_matrix(truth, pred, labels=np.arange(class_count)).astype(np.int64)


def macro_prf(pred, truth, class_count: int) -> Tuple[float, float, float]:
    """Unweighted class means of precision and recall; F1 is their harmonic mean.

    A class never predicted (or never present) contributes 0 to the mean.
    """
    pred, truth = _in_range(pred, truth, class_count)
    precision, recall, _, _ = skm.precision_recall_fscore_support(
        truth, pred, labels=np.arange(class_count), average=None, zero_division=0
    )
    mp, mr = float(precision.mean()), float(recall.mean())
    # not sklearn's macro F1, which averages per-class F1 scores
    f1 = 0.0 if mp + mr == 0 else 2 * mp * mr / (mp + mr)
    return mp, mr, float(f1)


def per_class_accuracy(pred, truth, class_count: int) -> list:
    pred, truth = _in_range(pred, truth, class_count)
    _, recall, _, _ = skm.precision_recall_fscore_support(
        truth, pred, labels=np.arange(class_count), average=None, zero_division=0
    )
    return [float(r) for r in recall]


def selection_prf(weights, clean_flags) -> Tuple[float, float]:
    """Precision/recall of the {w > 0} selection against ground-truth clean flags"""
    if clean_flags is None:
        raise NotApplicableError("selection metrics need ground-truth clean flags")
    weights = np.asarray(weights, dtype=np.float64).ravel()
    clean = np.asarray(clean_flags, dtype=bool).ravel()
    if weights.shape != clean.shape:
        raise ShapeError(f"{weights.size} weights vs {clean.size} clean flags")
    if clean.size == 0:
        raise EmptyBatchError("selection metrics need at least one sample")
    precision, recall, _, _ = skm.precision_recall_fscore_support(
        clean, weights > 0, labels=[True], average=None, zero_division=0
    )
    return float(precision[0]), float(recall[0])
