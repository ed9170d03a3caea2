"""The multivariate time-series container used throughout the package."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

__all__ = ["TimeSeries"]


@dataclass(frozen=True)
class TimeSeries:
    """An ordered T x D matrix of observations, all finite float64."""

    values: np.ndarray = field()

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise InputError(f"time series must be 2-D, got ndim={arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError(f"time series needs T >= 1 and D >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InputError("time series contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def D(self) -> int:
        return self.values.shape[1]

    def step(self, t: int) -> np.ndarray:
        """Observation x_t with 1-based indexing, matching x_1..x_T."""
        if not 1 <= t <= self.T:
            raise InputError(f"step {t} outside [1, {self.T}]")
        return self.values[t - 1]
