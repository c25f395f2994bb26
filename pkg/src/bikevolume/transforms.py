"""Target transforms for skew reduction, with exact inverses.

AADB counts are strongly right-skewed: most segments carry little bicycle
traffic while a few carry a lot. The transforms here (square root, log,
quantile-to-normal, Yeo-Johnson, Box-Cox) compress that tail so squared-error
training is not dominated by the handful of busiest segments. Every fitted
transform round-trips: inverse(transform(x)) == x to floating precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

TRANSFORM_KINDS = ("log", "sqrt", "quantile", "yeo_johnson", "box_cox")

_LAMBDA_GRID = np.round(np.arange(-5.0, 5.0 + 1e-9, 0.01), 2) + 0.0  # grid MLE, step 0.01; +0.0 folds -0.0 into 0.0


class TransformDomainError(ValueError):
    """Input (or inverse input) falls outside the transform's domain."""


def skewness(values) -> float:
    """Moment-based Fisher-Pearson skewness g1 = m3 / m2^(3/2).

    Central moments are taken over the sample with no small-sample
    correction. Undefined (raises) for constant samples.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size < 3:
        raise ValueError("skewness requires at least 3 observations")
    centered = x - x.mean()
    m2 = np.mean(centered**2)
    if m2 == 0.0:
        raise ValueError("undefined skewness: sample is constant")
    m3 = np.mean(centered**3)
    return float(m3 / m2**1.5)


@dataclass(frozen=True)
class TargetTransform:
    """A fitted target transform; apply with transform(), undo with inverse()."""

    kind: str
    lam: float | None = None  # Box-Cox / Yeo-Johnson exponent
    shift: float = 0.0  # added before Box-Cox when zeros are present
    fitted_max: float | None = None  # largest value seen at fit time
    quantile_values: np.ndarray | None = field(default=None, compare=False)
    quantile_positions: np.ndarray | None = field(default=None, compare=False)

    def transform(self, values) -> np.ndarray:
        x = np.asarray(values, dtype=np.float64)
        if self.kind == "log":
            if np.any(x < -1.0):
                raise TransformDomainError("log1p transform requires values >= -1")
            return np.log1p(x)
        if self.kind == "sqrt":
            if np.any(x < 0):
                raise TransformDomainError("sqrt transform requires non-negative values")
            return np.sqrt(x)
        if self.kind == "box_cox":
            shifted = x + self.shift
            if np.any(shifted <= 0):
                raise TransformDomainError("box_cox requires strictly positive values after shift")
            return _box_cox(shifted, self.lam)
        if self.kind == "yeo_johnson":
            return _yeo_johnson(x, self.lam)
        if self.kind == "quantile":
            pos = np.interp(x, self.quantile_values, self.quantile_positions)
            return special.ndtri(pos)
        raise ValueError(f"unknown transform kind {self.kind!r}")

    def inverse(self, transformed) -> np.ndarray:
        y = np.asarray(transformed, dtype=np.float64)
        if self.kind == "log":
            return np.expm1(y)
        if self.kind == "sqrt":
            if np.any(y < 0):
                raise TransformDomainError("sqrt inverse undefined for negative values")
            return y**2
        if self.kind == "box_cox":
            lam = self.lam
            if lam == 0.0:
                return np.exp(y) - self.shift
            base = lam * y + 1.0
            if np.any(base <= 0):
                raise TransformDomainError("box_cox inverse undefined: lam*y + 1 must be positive")
            return base ** (1.0 / lam) - self.shift
        if self.kind == "yeo_johnson":
            return _yeo_johnson_inverse(y, self.lam)
        if self.kind == "quantile":
            pos = special.ndtr(y)
            return np.interp(pos, self.quantile_positions, self.quantile_values)
        raise ValueError(f"unknown transform kind {self.kind!r}")

    def inverse_domain_clip(self, transformed) -> np.ndarray:
        """Clamp raw model outputs so the inverse stays defined and bounded.

        Predictions are unconstrained reals, but the algebraic inverses are
        not defined everywhere (Box-Cox needs lam*y + 1 > 0) and blow up near
        the domain boundary when lam < 0. Outputs are clipped to the domain
        and, when the fitted maximum is known, to the transform of ten times
        the largest fitted value, so one stray prediction cannot produce an
        astronomically large count.
        """
        y = np.asarray(transformed, dtype=np.float64)
        if self.kind == "sqrt":
            y = np.maximum(y, 0.0)
        elif self.kind == "box_cox" and self.lam != 0.0:
            lam = self.lam
            eps = 1e-12
            if lam > 0:
                y = np.maximum(y, (eps - 1.0) / lam)
            else:
                y = np.minimum(y, (eps - 1.0) / lam)
        elif self.kind == "yeo_johnson":
            lam = self.lam
            eps = 1e-12
            lo, hi = -np.inf, np.inf
            if lam < 0.0:
                hi = (eps - 1.0) / lam  # keeps lam*y + 1 positive on the y >= 0 branch
            if lam > 2.0:
                lo = (1.0 - eps) / (2.0 - lam)  # keeps 1 - (2-lam)*y positive on the y < 0 branch
            y = np.clip(y, lo, hi)
        if self.fitted_max is not None and self.kind != "quantile":
            cap = self.transform(np.asarray([10.0 * (self.fitted_max + 1.0)]))[0]
            y = np.minimum(y, cap)
        return y

    def to_dict(self) -> dict:
        doc = {"kind": self.kind}
        if self.lam is not None:
            doc["lambda"] = self.lam
        if self.shift:
            doc["shift"] = self.shift
        if self.fitted_max is not None:
            doc["fitted_max"] = self.fitted_max
        if self.quantile_values is not None:
            doc["quantile_values"] = self.quantile_values.tolist()
            doc["quantile_positions"] = self.quantile_positions.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TargetTransform":
        return cls(
            kind=doc["kind"],
            lam=doc.get("lambda"),
            shift=doc.get("shift", 0.0),
            fitted_max=doc.get("fitted_max"),
            quantile_values=(
                np.asarray(doc["quantile_values"], dtype=np.float64)
                if "quantile_values" in doc
                else None
            ),
            quantile_positions=(
                np.asarray(doc["quantile_positions"], dtype=np.float64)
                if "quantile_positions" in doc
                else None
            ),
        )


def transform_target(values, kind: str) -> tuple[np.ndarray, TargetTransform]:
    """Fit the named transform on `values` and return (transformed, params).

    Box-Cox and Yeo-Johnson fit their exponent by maximizing the profile
    log-likelihood over a grid lambda in [-5, 5] with step 0.01. Box-Cox
    shifts the data by +1 first when any value is zero. The quantile map
    sends midpoint plotting positions (rank - 0.5)/n of the empirical
    distribution to standard-normal quantiles.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot fit a transform on an empty sample")

    fitted_max = float(np.max(x))
    if kind == "log":
        tt = TargetTransform(kind="log", fitted_max=fitted_max)
    elif kind == "sqrt":
        if np.any(x < 0):
            raise TransformDomainError("sqrt transform requires non-negative values")
        tt = TargetTransform(kind="sqrt", fitted_max=fitted_max)
    elif kind == "box_cox":
        if np.any(x < 0):
            raise TransformDomainError("box_cox requires non-negative values")
        shift = 1.0 if np.any(x == 0) else 0.0
        lam = _fit_lambda_box_cox(x + shift)
        tt = TargetTransform(kind="box_cox", lam=lam, shift=shift, fitted_max=fitted_max)
    elif kind == "yeo_johnson":
        lam = _fit_lambda_yeo_johnson(x)
        tt = TargetTransform(kind="yeo_johnson", lam=lam, fitted_max=fitted_max)
    elif kind == "quantile":
        order = np.argsort(x, kind="stable")
        sorted_x = x[order]
        n = x.size
        positions = (np.arange(1, n + 1) - 0.5) / n
        # collapse ties so the interpolation table is strictly increasing in x
        uniq, first = np.unique(sorted_x, return_index=True)
        counts = np.diff(np.append(first, n))
        # a tied value maps to the midpoint position of its run
        pos_for_uniq = positions[first] + (counts - 1) * (0.5 / n)
        tt = TargetTransform(
            kind="quantile",
            quantile_values=uniq,
            quantile_positions=pos_for_uniq,
        )
    else:
        raise ValueError(f"unknown transform kind {kind!r}: expected one of {TRANSFORM_KINDS}")

    return tt.transform(x), tt


def inverse_transform_target(transformed, params: TargetTransform) -> np.ndarray:
    """Exact algebraic inverse of transform_target for the fitted params."""
    return params.inverse(transformed)


def _box_cox(x: np.ndarray, lam: float) -> np.ndarray:
    if lam == 0.0:
        return np.log(x)
    return (np.power(x, lam) - 1.0) / lam


def _fit_lambda_box_cox(x: np.ndarray) -> float:
    n = x.size
    log_x = np.log(x)
    sum_log = log_x.sum()
    best_lam = None
    best_llf = -np.inf
    for lam in _LAMBDA_GRID:
        y = _box_cox(x, float(lam))
        var = y.var()
        if not np.isfinite(var) or var <= 0:
            continue
        llf = (lam - 1.0) * sum_log - 0.5 * n * np.log(var)
        if llf > best_llf:
            best_llf = llf
            best_lam = float(lam)
    if best_lam is None:
        raise ValueError("box_cox likelihood undefined on this sample (constant data?)")
    return best_lam


def _yeo_johnson(x: np.ndarray, lam: float) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    if lam == 0.0:
        out[pos] = np.log1p(x[pos])
    else:
        out[pos] = (np.power(x[pos] + 1.0, lam) - 1.0) / lam
    if lam == 2.0:
        out[~pos] = -np.log1p(-x[~pos])
    else:
        out[~pos] = -(np.power(1.0 - x[~pos], 2.0 - lam) - 1.0) / (2.0 - lam)
    return out


def _yeo_johnson_inverse(y: np.ndarray, lam: float) -> np.ndarray:
    out = np.empty_like(y)
    pos = y >= 0
    if lam == 0.0:
        out[pos] = np.expm1(y[pos])
    else:
        base = lam * y[pos] + 1.0
        if np.any(base <= 0):
            raise TransformDomainError("yeo_johnson inverse undefined for these values")
        out[pos] = np.power(base, 1.0 / lam) - 1.0
    if lam == 2.0:
        out[~pos] = -np.expm1(-y[~pos])
    else:
        base = 1.0 - (2.0 - lam) * y[~pos]
        if np.any(base <= 0):
            raise TransformDomainError("yeo_johnson inverse undefined for these values")
        out[~pos] = 1.0 - np.power(base, 1.0 / (2.0 - lam))
    return out


def _fit_lambda_yeo_johnson(x: np.ndarray) -> float:
    n = x.size
    sign_sum = np.sum(np.sign(x) * np.log1p(np.abs(x)))
    best_lam = None
    best_llf = -np.inf
    for lam in _LAMBDA_GRID:
        y = _yeo_johnson(x, float(lam))
        var = y.var()
        if not np.isfinite(var) or var <= 0:
            continue
        llf = (lam - 1.0) * sign_sum - 0.5 * n * np.log(var)
        if llf > best_llf:
            best_llf = llf
            best_lam = float(lam)
    if best_lam is None:
        raise ValueError("yeo_johnson likelihood undefined on this sample (constant data?)")
    return best_lam
