"""Radial quadrature helpers shared by the spectral and spatial routines."""

from __future__ import annotations

import math
import warnings
from typing import Callable, Iterable

import numpy as np
from scipy import integrate


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1}."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def half_line(
    g: Callable[[float], float],
    breaks: Iterable[float] = (),
    epsrel: float = 1e-11,
    epsabs: float = 0.0,
    limit: int = 400,
) -> float:
    """Integrate ``g`` over (0, inf) on log-spaced panels.

    Works in the variable s = log k, so integrands with power-law behaviour at
    both ends and several separated scales (for example sqrt(lambda) and 1/l)
    are handled by adaptive Gauss-Kronrod panels of comparable difficulty.
    ``breaks`` are interior points (in k) where the integrand changes scale.
    """
    pts = sorted({float(b) for b in breaks if b > 0 and math.isfinite(b)})
    logs = [math.log(p) for p in pts]
    # extra panel edges two decades either side of every break
    edges = sorted(set(logs + [l - 4.6 for l in logs] + [l + 4.6 for l in logs]))

    def h(s: float) -> float:
        # far tails are numerically empty for every admissible model
        if not -300.0 < s < 300.0:
            return 0.0
        k = math.exp(s)
        try:
            v = g(k) * k
        except (OverflowError, ZeroDivisionError):
            return 0.0
        return v if math.isfinite(v) else 0.0

    bounds = [-math.inf] + edges + [math.inf]
    if len(bounds) == 2:
        bounds = [-math.inf, 0.0, math.inf]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        if epsabs == 0.0:
            # coarse pass to set an absolute floor for oscillatory, tiny tails
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                scale = sum(
                    abs(integrate.quad(h, lo, hi, epsrel=1e-6, limit=100)[0])
                    for lo, hi in zip(bounds[:-1], bounds[1:])
                )
            epsabs = 1e-14 * scale / (len(bounds) - 1)
        total = 0.0
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            val, _ = integrate.quad(h, lo, hi, epsrel=epsrel, epsabs=epsabs, limit=limit)
            total += val
    return total


def finite_interval(
    g: Callable[[float], float],
    a: float,
    b: float,
    points: Iterable[float] = (),
    epsrel: float = 1e-11,
    limit: int = 400,
) -> float:
    pts = [p for p in points if a < p < b]
    val, _ = integrate.quad(g, a, b, points=pts or None, epsrel=epsrel, epsabs=0.0, limit=limit)
    return val


def gauss_hermite_e(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[h(g)], g ~ N(0, 1)."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / math.sqrt(2.0 * math.pi)
