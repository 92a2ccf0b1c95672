"""Quantitative martingale CLT: analytic bound versus an empirical d_{1,k} lower estimate.

All models are time-changed Brownian motions M_1 = W(<M>_1) with the clock
independent of W, so M_1 given <M>_1 is exactly N(0, <M>_1).

d_{1,k}(X, Y) = sup |E f(X) - E f(Y)| over |f'| <= 1, |f''| <= k. The bound is
d_{1,k}(M_1, N(0,1)) <= (1 v k) E|<M>_1 - 1|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from ._quad import gauss_hermite_e
from .seeding import derive_seed, rng_for

MODEL_KINDS = ("scaled-bm", "uniform-clock", "stopped-bm", "scenery-clock")


# ------------------------------------------------------------------ models


@dataclass(frozen=True)
class MartingaleModel:
    """Generator of (M_1, <M>_1) samples."""

    kind: str
    name: str = ""
    sigma: float = 1.0  # scaled-bm
    low: float = 0.5  # uniform-clock
    high: float = 1.5
    rate: float = 1.0  # stopped-bm: tau ~ Exp(rate), stopped at tau ^ 1
    eps: float = 0.5  # scenery-clock
    dt: float = 0.05
    field_seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown martingale model {self.kind!r}")
        if self.kind == "uniform-clock" and not 0 <= self.low < self.high:
            raise ValueError("uniform clock needs 0 <= low < high")
        if self.kind == "stopped-bm" and self.rate <= 0:
            raise ValueError("stopping rate must be positive")
        if self.kind == "scenery-clock" and not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if not self.name:
            object.__setattr__(self, "name", self.kind)

    @property
    def deterministic_clock(self) -> bool:
        return self.kind == "scaled-bm"

    def clock(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "scaled-bm":
            return np.full(n, self.sigma**2)
        if self.kind == "uniform-clock":
            return rng.uniform(self.low, self.high, n)
        if self.kind == "stopped-bm":
            return np.minimum(rng.exponential(1.0 / self.rate, n), 1.0)
        return _scenery_clock(self, n, rng)

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        qv = self.clock(n, rng)
        if np.any(qv < 0):
            raise ValueError("negative quadratic variation sample")
        return np.sqrt(qv) * rng.standard_normal(n), qv

    def mean_abs_clock_gap(self) -> Optional[float]:
        """E|<M>_1 - 1| in closed form where available."""
        if self.kind == "scaled-bm":
            return abs(self.sigma**2 - 1.0)
        if self.kind == "uniform-clock":
            lo, hi = self.low, self.high
            if hi <= 1:
                return 1 - 0.5 * (lo + hi)
            if lo >= 1:
                return 0.5 * (lo + hi) - 1
            return ((1 - lo) ** 2 + (hi - 1) ** 2) / (2 * (hi - lo))
        if self.kind == "stopped-bm":
            # E(1 - tau ^ 1) = 1 - (1 - e^{-r})/r
            r = self.rate
            return 1.0 - (1.0 - math.exp(-r)) / r
        return None


def _scenery_clock(model: MartingaleModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Normalized quadratic variation eps^2 int_0^{1/eps^2} V(B_s)^2 ds / R(0) of a scenery field."""
    from .field_models import gaussian_bump, synthesize_fourier_field
    from .path_engine import cumulative_scenery, time_grid, sample_paths_on_grid

    cov = gaussian_bump(3)
    fld = synthesize_fourier_field(cov, 256, model.field_seed)
    T = 1.0 / model.eps**2
    times = time_grid(T, model.dt)
    dts = np.diff(times)
    out = np.empty(n)
    sq = _SquaredField(fld)
    for lo in range(0, n, 512):
        hi = min(n, lo + 512)
        paths = sample_paths_on_grid(3, times, hi - lo, rng)
        out[lo:hi] = cumulative_scenery(paths, sq, np.zeros(3), dts)[:, -1]
    return out / (T * cov.radial_covariance(0.0))


class _SquaredField:
    def __init__(self, fld):
        self.fld = fld
        self.d = fld.d

    def evaluate(self, pts):
        return self.fld.evaluate(pts) ** 2


def shipped_models() -> list[MartingaleModel]:
    return [
        MartingaleModel("scaled-bm", "scaled-bm-1.0", sigma=1.0),
        MartingaleModel("scaled-bm", "scaled-bm-1.2", sigma=1.2),
        MartingaleModel("uniform-clock", "uniform-clock", low=0.5, high=1.5),
        MartingaleModel("stopped-bm", "stopped-bm", rate=1.0),
        MartingaleModel("scenery-clock", "scenery-clock", eps=0.5, dt=0.05, field_seed=11),
    ]


# ---------------------------------------------------------- test functions


def _logcosh(z):
    a = np.abs(z)
    return a + np.log1p(np.exp(-2 * a)) - math.log(2.0)


@dataclass(frozen=True)
class TestFunctionFamily:
    """Smoothed hinges f(x) = w*g((x - c)/w) with |f'| <= 1 and |f''| <= k.

    logcosh: g = log cosh, f' = tanh, f'' = sech^2/w, so w >= 1/k.
    softplus: g = log(1 + e^z), f' = sigmoid, f'' = s(1-s)/w <= 1/(4w), so w >= 1/(4k).
    """

    __test__ = False  # not a pytest class

    k: float
    n_centers: int = 33
    n_widths: int = 4
    span: float = 4.0  # centers cover [-span*scale, span*scale]
    scale: float = 1.0
    width_ratio: float = 2.0
    kinds: tuple = ("logcosh", "softplus")

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.n_centers < 2 or self.n_widths < 1:
            raise ValueError("grid needs at least two centers and one width")

    def min_width(self, kind: str) -> float:
        return 1.0 / self.k if kind == "logcosh" else 1.0 / (4.0 * self.k)

    @property
    def centers(self) -> np.ndarray:
        return np.linspace(-self.span * self.scale, self.span * self.scale, self.n_centers)

    def widths(self, kind: str) -> np.ndarray:
        return self.min_width(kind) * self.width_ratio ** np.arange(self.n_widths)

    def members(self) -> list[tuple[str, float, float]]:
        return [(kd, c, w) for kd in self.kinds for w in self.widths(kd) for c in self.centers]

    def refine(self) -> "TestFunctionFamily":
        """Finer grid containing every current member."""
        return TestFunctionFamily(
            self.k, 2 * self.n_centers - 1, self.n_widths + 1, self.span, self.scale, self.width_ratio, self.kinds
        )

    @staticmethod
    def value(kind, c, w, x):
        z = (np.asarray(x, dtype=float) - c) / w
        return w * (_logcosh(z) if kind == "logcosh" else np.logaddexp(0.0, z))

    @staticmethod
    def first(kind, c, w, x):
        z = (np.asarray(x, dtype=float) - c) / w
        return np.tanh(z) if kind == "logcosh" else special.expit(z)

    @staticmethod
    def second(kind, c, w, x):
        z = (np.asarray(x, dtype=float) - c) / w
        if kind == "logcosh":
            return 1.0 / (w * np.cosh(np.clip(z, -350, 350)) ** 2)
        s = special.expit(z)
        return s * (1 - s) / w

    def evaluate(self, x) -> np.ndarray:
        """Matrix (n_members, n_points) of member values."""
        x = np.asarray(x, dtype=float)
        return np.stack([self.value(kd, c, w, x) for kd, c, w in self.members()])


# ------------------------------------------------------------- estimators


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float


def wasserstein_bound(model: MartingaleModel, k: float, n_samples: int, seed: int) -> Estimate:
    """(1 v k) E|<M>_1 - 1| with its Monte Carlo standard error."""
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    c = max(1.0, k)
    if model.deterministic_clock:
        return Estimate(c * model.mean_abs_clock_gap(), 0.0)
    qv = model.clock(n_samples, rng_for(seed, f"clock/{model.name}"))
    g = np.abs(qv - 1.0)
    return Estimate(c * float(g.mean()), c * float(g.std(ddof=1) / math.sqrt(n_samples)))


def empirical_d1k(x, y, family: TestFunctionFamily) -> Estimate:
    """max over the grid of |mean f(X) - mean f(Y)|, with the stderr of the maximizing member."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 10_000 or y.size < 10_000:
        raise ValueError("both sample sets need at least 1e4 points")
    best = (-1.0, 0.0)
    for kd, c, w in family.members():
        fx = family.value(kd, c, w, x)
        fy = family.value(kd, c, w, y)
        gap = abs(fx.mean() - fy.mean())
        if gap > best[0]:
            se = math.sqrt(fx.var(ddof=1) / x.size + fy.var(ddof=1) / y.size)
            best = (gap, se)
    return Estimate(float(best[0]), float(best[1]))


def gaussian_d1k_quadrature(s1: float, s2: float, family: TestFunctionFamily, n_nodes: int = 200) -> float:
    """The same supremum for N(0, s1^2) versus N(0, s2^2), by Gauss-Hermite quadrature."""
    z, wts = gauss_hermite_e(n_nodes)
    best = 0.0
    for kd, c, w in family.members():
        gap = abs(wts @ family.value(kd, c, w, s1 * z) - wts @ family.value(kd, c, w, s2 * z))
        best = max(best, float(gap))
    return best


@dataclass(frozen=True)
class BoundReport:
    model: str
    k: float
    bound: float
    bound_se: float
    lower_estimate: float
    lower_se: float
    passed: bool

    def row(self) -> dict:
        return dict(
            model=self.model, k=self.k, bound=self.bound, bound_se=self.bound_se,
            lower_estimate=self.lower_estimate, lower_se=self.lower_se, passed=self.passed,
        )


def bound_check(model: MartingaleModel, k: float, seed: int, n_samples: int = 20_000,
                family: Optional[TestFunctionFamily] = None) -> BoundReport:
    """empirical_d1k(M_1, N(0,1)) <= bound + 4 combined SE. Failures are reported, not raised."""
    fam = family or TestFunctionFamily(k)
    b = wasserstein_bound(model, k, n_samples, seed)
    m1, _ = model.sample(n_samples, rng_for(seed, f"martingale/{model.name}"))
    z = rng_for(seed, f"normal/{model.name}").standard_normal(n_samples)
    low = empirical_d1k(m1, z, fam)
    ok = low.value <= b.value + 4.0 * math.hypot(b.stderr, low.stderr)
    return BoundReport(model.name, float(k), b.value, b.stderr, low.value, low.stderr, bool(ok))


def mclt_suite(models: Sequence[MartingaleModel] = (), ks: Sequence[float] = (0.5, 1.0, 2.0),
               seed: int = 0, n_samples: int = 20_000) -> list[BoundReport]:
    models = list(models) or shipped_models()
    return [bound_check(m, k, derive_seed(seed, f"mclt/{m.name}/{k}"), n_samples) for m in models for k in ks]
