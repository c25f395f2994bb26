"""Regression metrics reported in original AADB count units.

RMSE = sqrt(mean((y - yhat)^2)), MSE is its square with the same
accumulation, MAE = mean(|y - yhat|). MAPE averages |y - yhat| / y only
over targets >= 1 and is reported in percent alongside the number of
zero-target nodes excluded; it is undefined (None) when every target in
the mask is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    rmse: float
    mse: float
    mae: float
    mape: float | None
    excluded_zero_targets: int = 0

    def as_row(self) -> dict:
        return {
            "rmse": self.rmse,
            "mse": self.mse,
            "mae": self.mae,
            "mape": self.mape,
            "excluded_zero_targets": self.excluded_zero_targets,
        }


def compute_metrics(y_true, y_pred) -> Metrics:
    y = np.asarray(y_true, dtype=np.float64)
    yhat = np.asarray(y_pred, dtype=np.float64)
    if y.size == 0:
        raise ValueError("cannot compute metrics on an empty selection")
    if y.shape != yhat.shape:
        raise ValueError("prediction/target shape mismatch")
    resid = y - yhat
    mse = float(np.mean(resid**2))
    rmse = float(np.sqrt(mse))
    mae = float(np.mean(np.abs(resid)))
    nonzero = y >= 1.0
    excluded = int(np.sum(~nonzero))
    if nonzero.any():
        mape = float(np.mean(np.abs(resid[nonzero]) / y[nonzero]) * 100.0)
    else:
        mape = None
    return Metrics(rmse=rmse, mse=mse, mae=mae, mape=mape, excluded_zero_targets=excluded)
