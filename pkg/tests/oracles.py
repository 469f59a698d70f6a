"""Independent brute-force oracles the fast implementations are checked against.

Everything here is deliberately naive (O(n^2) enumeration, full-batch
gradient descent, scalar finite differences) and shares no code with the
package internals it verifies.
"""

from __future__ import annotations

import numpy as np


def pairwise_auc(scores, labels) -> float:
    """AUC-ROC by direct enumeration of (positive, negative) pairs; ties get half credit."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def cutoff_average_precision(scores, labels) -> float:
    """Average precision by recomputing precision/recall at every distinct threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    thresholds = np.unique(scores)[::-1]
    ap = 0.0
    prev_recall = 0.0
    for t in thresholds:
        selected = scores >= t
        tp = int(((labels == 1) & selected).sum())
        precision = tp / int(selected.sum())
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def logistic_regression_auc(features, labels, steps: int = 2000, lr: float = 0.5) -> float:
    """Fit a plain full-batch logistic regression by gradient descent, return its train AUC."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    x = (x - x.mean(axis=0)) / np.maximum(x.std(axis=0), 1e-12)
    xb = np.hstack([x, np.ones((x.shape[0], 1))])
    w = np.zeros(xb.shape[1])
    for _ in range(steps):
        p = 1.0 / (1.0 + np.exp(-xb @ w))
        w -= lr * xb.T @ (p - y) / len(y)
    return pairwise_auc(xb @ w, y)


def central_difference(fn, x0: float, eps: float = 1e-6) -> float:
    """Scalar central finite difference of fn at x0."""
    return (fn(x0 + eps) - fn(x0 - eps)) / (2.0 * eps)
