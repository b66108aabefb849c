"""Softmax cross-entropy with stable log-sum-exp and float64 accumulation."""

from __future__ import annotations

import numpy as np

from ..errors import LabelOutOfRangeError, ValidationError


def _check_labels(labels, num_classes, batch):
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ValidationError([("labels", f"expected {batch} labels, got shape {labels.shape}")])
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelOutOfRangeError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    return labels.astype(np.int64)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood and the softmax probabilities.

    Loss accumulates in float64; probabilities come back in the logits dtype.
    """
    n, k = logits.shape
    labels = _check_labels(labels, k, n)
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - lse
    loss = float(-log_probs[np.arange(n), labels].mean())
    probs = np.exp(log_probs).astype(logits.dtype)
    return loss, probs


def softmax_cross_entropy_backward(probs, labels):
    """Gradient of the mean loss with respect to the logits."""
    n, k = probs.shape
    labels = _check_labels(labels, k, n)
    d = probs.astype(np.float64)
    d[np.arange(n), labels] -= 1.0
    d /= n
    return d.astype(probs.dtype)
