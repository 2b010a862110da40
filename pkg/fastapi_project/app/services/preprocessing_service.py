"""
Preprocessing Service

Min-max scaling fitted on a designated row range and chronological
train / validation / test splitting of panels.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..domain import DataSplit, TimeSeriesPanel
from ..utils.error_handling import ErrorCode, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS: Tuple[float, float, float] = (0.70, 0.05, 0.25)


@dataclass(frozen=True)
class MinMaxScaler:
    """
    Per-column min-max scaler.

    Degenerate columns (max == min) map to 0 and invert back to the stored
    constant.
    """

    data_min: np.ndarray
    data_max: np.ndarray

    def __post_init__(self):
        for name in ("data_min", "data_max"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def fit(cls, values, fit_rows: range = None) -> "MinMaxScaler":
        values = _as_matrix(values)
        rows = range(values.shape[0]) if fit_rows is None else fit_rows
        if len(rows) == 0:
            raise ValidationError("scaler fit range is empty", field="fit_rows")
        subset = values[rows.start:rows.stop]
        return cls(data_min=subset.min(axis=0), data_max=subset.max(axis=0))

    @property
    def scale_factor(self) -> np.ndarray:
        """max - min per column, 0 for degenerate columns."""
        return self.data_max - self.data_min

    @property
    def _divisor(self) -> np.ndarray:
        span = self.scale_factor
        return np.where(span > 0, span, 1.0)

    def transform(self, values) -> np.ndarray:
        values = _as_matrix(values)
        scaled = (values - self.data_min) / self._divisor
        return np.where(self.scale_factor > 0, scaled, 0.0)

    def inverse_transform(self, scaled) -> np.ndarray:
        scaled = np.asarray(scaled, dtype=float)
        return np.where(self.scale_factor > 0, scaled * self._divisor + self.data_min, self.data_min)

    def state(self) -> Dict[str, List[float]]:
        return {"min": self.data_min.tolist(), "max": self.data_max.tolist()}

    @classmethod
    def from_state(cls, state: Dict[str, Sequence[float]]) -> "MinMaxScaler":
        return cls(data_min=np.asarray(state["min"], dtype=float), data_max=np.asarray(state["max"], dtype=float))


def _as_matrix(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValidationError(f"expected a matrix, got {arr.ndim} dimensions", code=ErrorCode.SHAPE_MISMATCH)
    bad = ~np.isfinite(arr)
    if bad.any():
        column = int(np.argwhere(bad)[0][1])
        raise ValidationError(
            f"non-finite value in column {column}",
            field="column",
            value=column,
            code=ErrorCode.NON_FINITE_INPUT,
        )
    return arr


def fit_apply_scaler(values, fit_rows: range = None) -> Tuple[np.ndarray, MinMaxScaler]:
    """Fit a scaler on `fit_rows` and apply it to every row of `values`."""
    scaler = MinMaxScaler.fit(values, fit_rows)
    return scaler.transform(values), scaler


def split_panel(panel_or_rows, fractions: Sequence[float] = DEFAULT_FRACTIONS) -> DataSplit:
    """
    Chronological split: train = floor(f_train * N), validation = floor(f_val * N),
    test = remainder.

    Accepts a TimeSeriesPanel or a plain row count.
    """
    n = panel_or_rows.n_rows if isinstance(panel_or_rows, TimeSeriesPanel) else int(panel_or_rows)
    if len(fractions) != 3:
        raise ValidationError("fractions must have three entries", field="fractions", value=list(fractions))
    if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError("fractions must be positive and sum to 1", field="fractions", value=list(fractions))

    # fractions like 0.7 * 100 land a hair below the integer
    n_train = int(math.floor(fractions[0] * n + 1e-9))
    n_val = int(math.floor(fractions[1] * n + 1e-9))
    n_test = n - n_train - n_val
    for name, length in (("train", n_train), ("validation", n_val), ("test", n_test)):
        if length <= 0:
            raise ValidationError(f"{name} range is empty for N={n}", field=name, value=n)

    split = DataSplit(
        train=range(0, n_train),
        validation=range(n_train, n_train + n_val),
        test=range(n_train + n_val, n),
    )
    logger.debug("Split %d rows into %s", n, split.lengths())
    return split


@dataclass(frozen=True)
class PanelScalers:
    """Scalers for every panel channel, all fitted on the training rows."""

    t: MinMaxScaler
    I: MinMaxScaler
    p_I: MinMaxScaler
    q: MinMaxScaler
    p_wf: MinMaxScaler

    @classmethod
    def fit(cls, panel: TimeSeriesPanel, train: range) -> "PanelScalers":
        return cls(
            t=MinMaxScaler.fit(panel.times, train),
            I=MinMaxScaler.fit(panel.I, train),
            p_I=MinMaxScaler.fit(panel.p_I, train),
            q=MinMaxScaler.fit(panel.q, train),
            p_wf=MinMaxScaler.fit(panel.p_wf, train),
        )

    def state(self) -> Dict[str, Dict[str, List[float]]]:
        return {name: getattr(self, name).state() for name in ("t", "I", "p_I", "q", "p_wf")}

    @classmethod
    def from_state(cls, state) -> "PanelScalers":
        return cls(**{name: MinMaxScaler.from_state(state[name]) for name in ("t", "I", "p_I", "q", "p_wf")})
