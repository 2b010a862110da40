"""
Evaluation metrics: root mean squared error, summed totals, Pearson correlation.
"""

import logging
from typing import Dict, Sequence

import numpy as np
from scipy.stats import pearsonr

from ..utils.error_handling import ErrorCode, ValidationError

logger = logging.getLogger(__name__)


def _vectors(observed, predicted):
    obs = np.asarray(observed, dtype=float).ravel()
    pred = np.asarray(predicted, dtype=float).ravel()
    if obs.shape != pred.shape:
        raise ValidationError(
            f"length mismatch: {obs.size} observed vs {pred.size} predicted",
            field="predicted",
            code=ErrorCode.SHAPE_MISMATCH,
        )
    if obs.size == 0:
        raise ValidationError("rmse needs at least one sample", field="observed")
    return obs, pred


def rmse(observed, predicted) -> float:
    obs, pred = _vectors(observed, predicted)
    return float(np.sqrt(np.mean((obs - pred) ** 2)))


def total_rmse(per_producer: Sequence[float]) -> float:
    """Report total: the arithmetic sum of per-producer RMSEs."""
    return float(np.sum(np.asarray(per_producer, dtype=float)))


def rmse_by_producer(observed, predicted, producer_ids: Sequence[str]) -> Dict[str, float]:
    """Column-wise RMSE of [rows x producers] matrices keyed by producer id."""
    obs = np.atleast_2d(np.asarray(observed, dtype=float))
    pred = np.atleast_2d(np.asarray(predicted, dtype=float))
    if obs.shape != pred.shape or obs.shape[1] != len(producer_ids):
        raise ValidationError(
            f"shape mismatch: {obs.shape} vs {pred.shape} for {len(producer_ids)} producers",
            code=ErrorCode.SHAPE_MISMATCH,
        )
    return {pid: rmse(obs[:, j], pred[:, j]) for j, pid in enumerate(producer_ids)}


def pearson_correlation(a, b) -> float:
    """scipy's Pearson r; 0 when either vector is constant."""
    x, y = _vectors(a, b)
    if x.size < 2:
        raise ValidationError("pearson correlation needs at least two samples", field="observed")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        logger.warning("Pearson correlation undefined for a constant vector; returning 0")
        return 0.0
    return float(pearsonr(x, y).statistic)
