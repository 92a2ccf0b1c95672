"""Log-log rate fits for eps- and lambda-sweeps."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

FIT_MODELS = ("pure-power", "power-with-log")


@dataclass(frozen=True)
class RateFit:
    """Fitted exponent over the swept range only (never extrapolated).

    residual is the RMS log-residual of the straight-line fit. mismatch flags
    significant curvature in log-log coordinates, i.e. data that a pure power
    does not describe. For the power-with-log model, ratio_spread is
    (max - min) / mean of value / (scale log(1/scale)).
    """

    exponent: float
    stderr: float
    log_correction: bool
    residual: float
    n_points: int
    mismatch: bool
    curvature: float
    ratio_spread: Optional[float] = None
    scale_min: float = float("nan")
    scale_max: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def _linfit(u: np.ndarray, v: np.ndarray) -> tuple[float, float, float]:
    A = np.column_stack([np.ones_like(u), u])
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    res = v - A @ coef
    dof = u.size - 2
    s2 = float(res @ res) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[1]), math.sqrt(max(cov[1, 1], 0.0)), math.sqrt(float(np.mean(res**2)))


def _curvature(u: np.ndarray, v: np.ndarray) -> tuple[float, bool]:
    """Quadratic term in log-log coordinates; flagged when it is both significant and visible."""
    if u.size < 4:
        return 0.0, False
    uc = u - u.mean()
    A = np.column_stack([np.ones_like(uc), uc, uc**2])
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    res = v - A @ coef
    s2 = float(res @ res) / (u.size - 3)
    se = math.sqrt(max(s2 * np.linalg.inv(A.T @ A)[2, 2], 0.0))
    c2 = float(coef[2])
    # deviation from a straight line across the range, in log units
    visible = abs(c2) * (np.ptp(u) / 2) ** 2 > 1e-3
    significant = se == 0.0 or abs(c2) > stats.t.ppf(0.999, u.size - 3) * se
    return c2, bool(visible and significant)


def fit_rate(pairs: Sequence[tuple[float, float]], model: str = "pure-power") -> RateFit:
    """Least squares in log-log coordinates; needs at least four positive points."""
    if model not in FIT_MODELS:
        raise ValueError(f"fit model must be one of {FIT_MODELS}")
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("pairs must be (scale, value) tuples")
    if arr.shape[0] < 4:
        raise ValueError("a rate fit needs at least 4 sweep points")
    s, val = arr[:, 0], arr[:, 1]
    if np.any(s <= 0) or np.any(val <= 0):
        raise ValueError("scales and values must be positive for a log-log fit")
    u = np.log(s)
    if model == "pure-power":
        slope, se, res = _linfit(u, np.log(val))
        c2, flag = _curvature(u, np.log(val))
        return RateFit(slope, se, False, res, s.size, flag, c2, None, float(s.min()), float(s.max()))
    if np.any(s >= 1):
        raise ValueError("power-with-log needs scales below 1")
    ratio = val / (s * np.log(1.0 / s))
    v = np.log(val / np.log(1.0 / s))
    slope, se, res = _linfit(u, v)
    c2, flag = _curvature(u, v)
    spread = float(np.ptp(ratio) / ratio.mean())
    return RateFit(slope, se, True, res, s.size, flag, c2, spread, float(s.min()), float(s.max()))
