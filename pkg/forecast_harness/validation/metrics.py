"""Point-forecast metrics and key-joined scoring."""

import logging
from typing import Callable, Dict, Iterable, Sequence

import attr
import numpy as np
import pandas as pd

from ..data.table import KEY_COLUMNS, TARGET, UnifiedSeriesTable
from ..errors import EmptyInput, EmptyIntersection, KeyMismatch, NegativeValue, NonFiniteValue
from .report import MetricId, MetricScores

logger = logging.getLogger(__name__)


@attr.s(frozen=True)
class ScoredPair:
    """One prediction and its truth."""

    prediction = attr.ib(type=float)
    truth = attr.ib(type=float)


def _as_arrays(pairs) -> Sequence[np.ndarray]:
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("no pairs to score")
    values = np.array(
        [(p.prediction, p.truth) if isinstance(p, ScoredPair) else tuple(p) for p in pairs],
        dtype="float64",
    )
    finite = np.isfinite(values).all(axis=1)
    if not finite.all():
        raise NonFiniteValue(int(np.flatnonzero(~finite)[0]))
    negative = (values < 0).any(axis=1)
    if negative.any():
        raise NegativeValue(int(np.flatnonzero(negative)[0]))
    return values[:, 0], values[:, 1]


def rmsle(y_pred: np.ndarray, y_true: np.ndarray) -> float:
    """Root mean squared log error with the natural logarithm."""
    return float(np.sqrt(np.mean((np.log1p(y_pred) - np.log1p(y_true)) ** 2)))


def mae(y_pred: np.ndarray, y_true: np.ndarray) -> float:
    """Mean absolute error."""
    return float(np.mean(np.abs(y_pred - y_true)))


def rmse(y_pred: np.ndarray, y_true: np.ndarray) -> float:
    """Root mean squared error."""
    return float(np.sqrt(np.mean((y_pred - y_true) ** 2)))


METRIC_FUNCTIONS: Dict[MetricId, Callable[[np.ndarray, np.ndarray], float]] = {
    MetricId.rmsle: rmsle,
    MetricId.mae: mae,
    MetricId.rmse: rmse,
}


def score_rmsle(pairs: Iterable) -> float:
    """Score ``(prediction, truth)`` pairs with RMSLE."""
    y_pred, y_true = _as_arrays(pairs)
    return rmsle(y_pred, y_true)


def score(pred_table: UnifiedSeriesTable, truth_table: UnifiedSeriesTable, metrics) -> MetricScores:
    """Join predictions to truth by (entity, date) and compute every metric.

    The first metric spec is the primary one.
    """
    keys = KEY_COLUMNS
    merged = pd.merge(
        truth_table.frame[keys + [TARGET]],
        pred_table.frame[keys + [TARGET]],
        on=keys,
        how="outer",
        suffixes=("_truth", "_pred"),
        indicator=True,
    )
    both = merged["_merge"] == "both"
    if not both.any():
        raise EmptyIntersection("predictions share no key with the truth")
    missing = int((merged["_merge"] == "left_only").sum())
    extra = int((merged["_merge"] == "right_only").sum())
    if missing or extra:
        raise KeyMismatch(missing=missing, extra=extra)

    merged = merged.sort_values(keys, kind="mergesort")
    y_pred, y_true = _as_arrays(zip(merged[f"{TARGET}_pred"], merged[f"{TARGET}_truth"]))
    values = {spec.metric_id: METRIC_FUNCTIONS[spec.metric_id](y_pred, y_true) for spec in metrics}
    return MetricScores(values=values, primary=metrics[0].metric_id, n=len(merged))
