"""Evaluation metrics. Classification scores are thresholded at zero (zero counts as +1)."""

from __future__ import annotations

import numpy as np


def predict_labels(scores) -> np.ndarray:
    return np.where(np.asarray(scores, dtype=np.float64) >= 0, 1.0, -1.0)


def _check(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty input")
    return a, b


def metric_accuracy(scores, labels) -> float:
    scores, labels = _check(scores, labels)
    return float(np.mean(predict_labels(scores) == labels))


def metric_f1(scores, labels, return_flag: bool = False):
    """F1 with +1 as the positive class.

    When there are neither predicted nor actual positives F1 is undefined; it
    is reported as 0 and, with ``return_flag``, the flag is True.
    """
    scores, labels = _check(scores, labels)
    pred = predict_labels(scores) > 0
    actual = labels > 0
    tp = int(np.sum(pred & actual))
    fp = int(np.sum(pred & ~actual))
    fn = int(np.sum(~pred & actual))
    undefined = tp + fp + fn == 0
    value = 0.0 if undefined else 2 * tp / (2 * tp + fp + fn)
    return (value, undefined) if return_flag else value


def metric_mse(predictions, targets) -> float:
    predictions, targets = _check(predictions, targets)
    return float(np.mean((predictions - targets) ** 2))


def metric_param_distance(w, w_star) -> float:
    w, w_star = _check(w, w_star)
    return float(np.linalg.norm(w - w_star))


METRICS = {"accuracy": metric_accuracy, "f1": metric_f1, "mse": metric_mse}
LOWER_IS_BETTER = {"mse"}


def evaluate(metric: str, scores, labels) -> float:
    try:
        fn = METRICS[metric]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}; expected one of {sorted(METRICS)}") from None
    return float(fn(scores, labels))
