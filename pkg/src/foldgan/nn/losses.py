"""Loss functions."""
from __future__ import annotations

import warnings

import numpy as np

PROB_FLOOR = 1e-12


def xent_loss(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of integer labels under row distributions.

    Returns the scalar loss and its gradient with respect to ``probs``.
    Feeding that gradient back through the softmax layer that produced
    ``probs`` yields (probs - onehot) / batch with respect to the logits.
    A zero probability at the true label is clamped to 1e-12 (with a
    RuntimeWarning) instead of producing infinities.
    """
    labels = np.asarray(labels)
    n = probs.shape[0]
    idx = (np.arange(n), labels)
    p_true = probs[idx]
    if np.any(p_true < PROB_FLOOR):
        warnings.warn("clamped zero probability at true label", RuntimeWarning, stacklevel=2)
        p_true = np.maximum(p_true, PROB_FLOOR)
    loss = float(-np.mean(np.log(p_true)))
    dprobs = np.zeros_like(probs)
    dprobs[idx] = -1.0 / (n * p_true)
    return loss, dprobs
