"""Bayes classification through the projected class posterior.

The signal model induces p(c|y) in closed form; prediction is its
argmax.  Test features are projected deterministically (y = Phi x, no
synthetic noise: the near-noiseless measurement covariance makes
injection sub-tolerance and omission keeps evaluation repeatable).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .posterior import ProjectedModel

__all__ = ["PredictionBatch", "predict", "evaluate"]


@dataclass(frozen=True, eq=False)
class PredictionBatch:
    """Predicted class ids with the full class-posterior rows.

    accuracy is the fraction of correct predictions, or None when no
    labels were supplied.
    """

    predicted: np.ndarray
    class_posteriors: np.ndarray
    accuracy: float | None = None

    def __post_init__(self):
        post = np.asarray(self.class_posteriors, dtype=float)
        if np.abs(post.sum(axis=1) - 1.0).max() > 1e-10:
            raise ValueError("posterior rows must sum to 1")
        if not np.array_equal(self.predicted, np.argmax(post, axis=1)):
            raise ValueError("predictions must be the row argmax (lowest-index ties)")


def _posterior_rows(model, meas, Y):
    work = ProjectedModel(model, meas)
    n = Y.shape[0]
    out = np.empty((n, model.n_classes))
    chunk = 4096
    for start in range(0, n, chunk):
        log_wt, _, _ = work.posterior_logweights(Y[start : start + chunk])
        out[start : start + chunk] = np.exp(log_wt)
    return out


def predict(model, meas, y):
    """Most probable class for one measurement, with its posterior.

    Ties resolve to the lowest class index.
    """
    y = np.asarray(y, dtype=float).reshape(1, -1)
    post = _posterior_rows(model, meas, y)[0]
    return int(np.argmax(post)), post


def evaluate(model, meas, features, labels=None):
    """Classify every row of ``features`` after projecting it.

    Measurements are formed as y = Phi x; the noise precision enters
    only through the likelihood model.  When labels are given they must
    lie in [0, n_classes) and the accuracy is reported.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise ValueError(f"features must be n x {model.dim}")
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (X.shape[0],):
            raise ValueError("labels must match the number of feature rows")
        if labels.size and (labels.min() < 0 or labels.max() >= model.n_classes):
            raise ValueError(f"labels must lie in [0, {model.n_classes})")
    Y = X @ meas.projection.T
    post = _posterior_rows(model, meas, Y)
    predicted = np.argmax(post, axis=1)
    accuracy = None if labels is None else float(np.mean(predicted == labels))
    return PredictionBatch(predicted=predicted, class_posteriors=post, accuracy=accuracy)
