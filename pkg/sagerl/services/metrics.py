"""
Micro-averaged F1 over node-label decisions.
"""

import logging

import numpy as np

from sagerl.services.ndmath import ShapeMismatchError

logger = logging.getLogger(__name__)


def micro_f1(predictions: np.ndarray, labels: np.ndarray, label_mode: str = "single") -> float:
    """
    Micro-F1 = 2TP / (2TP + FP + FN) pooled over every (node, label) decision.

    Both inputs are 0/1 indicator matrices. In single-label mode each row has
    one decision, so the score equals accuracy.

    Args:
        predictions: n x C predicted indicators
        labels: n x C true indicators
        label_mode: "single" or "multi" (the pooling is the same for both)

    Returns:
        F1 in [0, 1]; 0.0 with a warning when there are no positives at all

    Raises:
        ShapeMismatchError: If the matrices differ in shape
    """
    if predictions.shape != labels.shape:
        raise ShapeMismatchError(
            f"micro_f1: predictions {predictions.shape} vs labels {labels.shape}"
        )
    pred = predictions.astype(bool)
    true = labels.astype(bool)
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))

    denominator = 2 * tp + fp + fn
    if denominator == 0:
        logger.warning(f"micro_f1 ({label_mode}): no positive predictions or labels, returning 0")
        return 0.0
    return 2 * tp / denominator
