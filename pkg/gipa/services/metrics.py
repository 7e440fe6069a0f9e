import logging
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.special import expit
from scipy.stats import rankdata

from gipa.exceptions import ShapeError
from gipa.utils.validate import as_matrix, check_shape

logger = logging.getLogger(__name__)


class EvalReport(BaseModel):
    split: str
    mean_auc: Optional[float]
    per_label_auc: List[Optional[float]]
    excluded_labels: List[int]
    loss: Optional[float]


def bce_with_logits(logits, labels, mask) -> Tuple[float, np.ndarray]:
    """Mean binary cross-entropy over the masked rows and every label column.

    Returns the loss and its gradient w.r.t. the logits (zero on rows outside
    the mask).
    """
    z = as_matrix(logits, "logits")
    y = as_matrix(labels, "labels")
    check_shape(y, z.shape, "labels")
    rows = np.asarray(mask, dtype=np.int64).reshape(-1)
    if rows.size == 0:
        raise ShapeError("bce_with_logits needs a non-empty node mask")
    zm, ym = z[rows], y[rows]
    count = zm.size
    loss = np.maximum(zm, 0.0) - zm * ym + np.log1p(np.exp(-np.abs(zm)))
    grad = np.zeros_like(z)
    np.add.at(grad, rows, (expit(zm) - ym) / count)
    return float(loss.sum() / count), grad


def roc_auc(scores, labels) -> Optional[float]:
    """Mann-Whitney AUC with midranks for ties; None when only one class is present."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    positive = np.asarray(labels).reshape(-1).astype(bool)
    if scores.shape != positive.shape:
        raise ShapeError(f"{scores.shape[0]} scores for {positive.shape[0]} labels")
    num_pos = int(positive.sum())
    num_neg = positive.size - num_pos
    if num_pos == 0 or num_neg == 0:
        return None
    ranks = rankdata(scores, method="average")
    u_statistic = ranks[positive].sum() - num_pos * (num_pos + 1) / 2.0
    return float(u_statistic / (num_pos * num_neg))


def mean_roc_auc(scores, labels) -> Tuple[Optional[float], List[Optional[float]], List[int]]:
    """Per-column AUC; single-class columns are excluded from the mean."""
    scores = as_matrix(scores, "scores")
    labels = as_matrix(labels, "labels")
    check_shape(labels, scores.shape, "labels")
    per_label = [roc_auc(scores[:, c], labels[:, c]) for c in range(scores.shape[1])]
    excluded = [c for c, auc in enumerate(per_label) if auc is None]
    if excluded:
        logger.warning("excluding %d single-class label columns from the mean AUC", len(excluded))
    valid = [auc for auc in per_label if auc is not None]
    return (float(np.mean(valid)) if valid else None), per_label, excluded


def evaluation_report(split: str, logits, labels, nodes) -> EvalReport:
    nodes = np.asarray(nodes, dtype=np.int64)
    logits = as_matrix(logits, "logits")
    labels = as_matrix(labels, "labels")
    loss, _ = bce_with_logits(logits, labels, nodes)
    mean_auc, per_label, excluded = mean_roc_auc(logits[nodes], labels[nodes])
    return EvalReport(split=split, mean_auc=mean_auc, per_label_auc=per_label,
                      excluded_labels=excluded, loss=loss)
