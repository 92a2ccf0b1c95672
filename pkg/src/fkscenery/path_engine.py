"""Brownian paths, scenery integrals and path-pair double integrals.

Simulation is done in microscopic variables: the field lives at scale one and
a path runs up to T = t / eps^2, so one field realization serves every eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .field_models import FieldRealization
from .seeding import derive_seed

DEFAULT_STEP_BUDGET = 10_000_000


@dataclass(frozen=True, eq=False)
class BrownianPath:
    d: int
    dt: float
    T: float
    positions: np.ndarray = field(repr=False)
    seed: Optional[int] = None

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def to_csv(self, path) -> None:
        """Debug dump with columns step,time,x_1..x_d."""
        cols = ",".join(f"x_{i + 1}" for i in range(self.d))
        data = np.column_stack([np.arange(self.n_steps + 1), self.times, self.positions])
        fmt = ["%d", "%.17g"] + ["%.17g"] * self.d
        np.savetxt(path, data, delimiter=",", header="step,time," + cols, comments="", fmt=fmt)


def n_steps_for(T: float, dt: float) -> int:
    """Number of steps of size <= dt covering [0, T]."""
    if T == 0:
        return 0
    return max(1, int(math.ceil(T / dt - 1e-9)))


def sample_path(d: int, T: float, dt: float, seed: int, step_budget: int = DEFAULT_STEP_BUDGET) -> BrownianPath:
    """Brownian path on [0, T]; the step is shrunk to T/ceil(T/dt) so the grid ends at T."""
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    n = n_steps_for(T, dt)
    if n * d > step_budget:
        raise ValueError(f"path needs {n} steps in dimension {d}, above the step budget {step_budget}")
    h = T / n if n else dt
    rng = np.random.default_rng(seed)
    pos = np.zeros((n + 1, d))
    if n:
        np.cumsum(rng.standard_normal((n, d)) * math.sqrt(h), axis=0, out=pos[1:])
    pos.setflags(write=False)
    return BrownianPath(d=d, dt=h, T=float(T), positions=pos, seed=seed)


def sample_paths(d: int, T: float, dt: float, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    """Batch of paths, shape (n_paths, n_steps + 1, d), drawn from one generator."""
    n = n_steps_for(T, dt)
    h = T / n if n else dt
    out = np.zeros((n_paths, n + 1, d))
    if n:
        np.cumsum(rng.standard_normal((n_paths, n, d)) * math.sqrt(h), axis=1, out=out[:, 1:])
    return out


@dataclass(frozen=True)
class SceneryFunctional:
    """eps^{2-gamma} int_0^{t/eps^2} V(x/eps + B_s) ds."""

    eps: float
    gamma: float = 1.0
    t: float = 1.0
    x: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    @property
    def horizon(self) -> float:
        return self.t / self.eps**2

    @property
    def prefactor(self) -> float:
        return self.eps ** (2.0 - self.gamma)


def scenery_integral(path: BrownianPath, fld: FieldRealization, fn: SceneryFunctional) -> float:
    """Left-endpoint Riemann sum of the scaled scenery functional along one path."""
    if not math.isclose(path.T, fn.horizon, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"path horizon {path.T} does not match t/eps^2 = {fn.horizon}")
    if path.n_steps == 0:
        return 0.0
    shift = np.asarray(fn.x, dtype=float) / fn.eps
    v = fld.evaluate(path.positions[:-1] + shift)
    return float(fn.prefactor * v.sum() * path.dt)


def time_grid(T: float, dt: float, extra: Sequence[float] = ()) -> np.ndarray:
    """Uniform grid of step <= dt on [0, T], merged with the extra times."""
    n = n_steps_for(T, dt)
    base = np.linspace(0.0, T, n + 1) if n else np.zeros(1)
    pts = np.concatenate([base, np.asarray(extra, dtype=float)])
    pts = np.unique(np.round(pts, 12))
    return pts[(pts >= 0) & (pts <= T + 1e-12)]


def sample_paths_on_grid(d: int, times: np.ndarray, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    """Batch of Brownian paths observed at the given increasing times (times[0] = 0)."""
    dts = np.diff(times)
    out = np.zeros((n_paths, times.size, d))
    if dts.size:
        inc = rng.standard_normal((n_paths, dts.size, d)) * np.sqrt(dts)[None, :, None]
        np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def cumulative_scenery(paths: np.ndarray, fld: FieldRealization, shift, dts) -> np.ndarray:
    """Running left-endpoint integrals of V(shift + B_s) for a path batch.

    ``dts`` is a scalar step or the array of grid steps. Returns shape
    (n_paths, n_points), column 0 being zero.
    """
    n_paths, n1, d = paths.shape
    out = np.zeros((n_paths, n1))
    if n1 == 1:
        return out
    v = fld.evaluate(paths[:, :-1, :].reshape(-1, d) + np.asarray(shift, dtype=float))
    w = np.broadcast_to(np.asarray(dts, dtype=float), (n1 - 1,))
    np.cumsum(v.reshape(n_paths, n1 - 1) * w[None, :], axis=1, out=out[:, 1:])
    return out


# ============================================================ pair integrals


class PairKernel:
    """Kernel k(x) for double time integrals; ``exponent_sum`` is the singularity order at 0."""

    exponent_sum: float = 0.0
    code: int = -1

    def params(self, d: int):
        raise NotImplementedError

    def coefs(self):
        return np.zeros(1)

    def __call__(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantKernel(PairKernel):
    value: float = 1.0
    code = K.K_CONST

    def params(self, d):
        return np.array([self.value])

    def __call__(self, x):
        return np.full(np.shape(x)[:-1], self.value)


@dataclass(frozen=True)
class PowerKernel(PairKernel):
    """prod_i |x_i|^{-alpha_i}."""

    alphas: tuple
    code = K.K_POWER

    @property
    def exponent_sum(self):
        return float(sum(self.alphas))

    def params(self, d):
        return np.asarray(self.alphas, dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.prod(np.abs(x) ** (-np.asarray(self.alphas)), axis=-1)


@dataclass(frozen=True)
class SmoothPowerKernel(PairKernel):
    """eps^{-alpha} R_g(x/eps) = prod_i (eps^2 + x_i^2)^{-alpha_i/2}."""

    alphas: tuple
    eps: float
    code = K.K_SMOOTH_POWER

    def params(self, d):
        return np.append(np.asarray(self.alphas, dtype=float), self.eps)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.prod((self.eps**2 + x**2) ** (-0.5 * np.asarray(self.alphas)), axis=-1)


@dataclass(frozen=True)
class IndicatorKernel(PairKernel):
    radius: float
    code = K.K_INDICATOR

    def params(self, d):
        return np.array([self.radius])

    def __call__(self, x):
        return (np.linalg.norm(x, axis=-1) <= self.radius).astype(float)


@dataclass(frozen=True)
class MollifiedPowerKernel(PairKernel):
    """prod_i E|x_i + G_i|^{-alpha_i}, G_i ~ N(0, 2 eta): the power kernel smoothed by q_eta * q_eta."""

    alphas: tuple
    eta: float
    code = K.K_MOLLIFIED

    def params(self, d):
        var = 2.0 * self.eta
        a = np.asarray(self.alphas, dtype=float)
        pref = [
            var ** (-ai / 2) * 2.0 ** (-ai / 2) * math.gamma((1 - ai) / 2) / math.sqrt(math.pi) for ai in a
        ]
        return np.concatenate([a, [var], pref])

    def __call__(self, x):
        from scipy.special import hyp1f1

        x = np.asarray(x, dtype=float)
        p = self.params(x.shape[-1])
        d = x.shape[-1]
        var = p[d]
        out = np.ones(x.shape[:-1])
        for i in range(d):
            out = out * p[d + 1 + i] * hyp1f1(p[i] / 2, 0.5, -x[..., i] ** 2 / (2 * var))
        return out


@dataclass(frozen=True)
class HermiteTailKernel(PairKernel):
    """eps^{-alpha} sum_n c_n R_g(x/eps)^n for the product-power R_g."""

    alphas: tuple
    eps: float
    weights: tuple
    code = K.K_POLY_SMOOTH

    def params(self, d):
        return np.append(np.asarray(self.alphas, dtype=float), self.eps)

    def coefs(self):
        return np.asarray(self.weights, dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        a = np.asarray(self.alphas)
        r = np.prod((1.0 + (x / self.eps) ** 2) ** (-0.5 * a), axis=-1)
        return np.polynomial.polynomial.polyval(r, np.asarray(self.weights)) * self.eps ** (-a.sum())


@dataclass(frozen=True)
class CallableKernel(PairKernel):
    fn: Callable
    exponent_sum: float = 0.0

    def __call__(self, x):
        return self.fn(x)


def _trap_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _raw_sum(xa, wa, xb, wb, kernel: PairKernel) -> float:
    xa = np.ascontiguousarray(xa)
    xb = np.ascontiguousarray(xb)
    d = xa.shape[1]
    if kernel.code < 0:
        tot = 0.0
        for i in range(0, xa.shape[0], 256):
            blk = kernel(xa[i : i + 256, None, :] - xb[None, :, :])
            tot += float(np.einsum("i,ij,j->", wa[i : i + 256], blk, wb))
        return tot
    if d == 3 and kernel.code in (K.K_POWER, K.K_SMOOTH_POWER):
        a = np.asarray(kernel.alphas, dtype=float)
        if np.all(a == a[0]):
            if kernel.code == K.K_POWER:
                return K.pair_sum_power3(xa, wa, xb, wb, float(a[0]))
            return K.pair_sum_smooth3(xa, wa, xb, wb, float(a[0]), float(kernel.eps) ** 2)
    p = kernel.params(d)
    same = kernel.code in (K.K_POWER, K.K_SMOOTH_POWER) and bool(np.all(p[:d] == p[0]))
    return K.pair_sum(xa, wa, xb, wb, kernel.code, p, kernel.coefs(), same)


def _staggered(pa: np.ndarray, pb: np.ndarray, dt: float, kernel: PairKernel, stride: int) -> float:
    """pathA on the trapezoid grid 0, 2m, 4m, ...; pathB on the midpoints m, 3m, ... (m = stride)."""
    n = pa.shape[0] - 1
    h = 2 * stride * dt
    sa = pa[:: 2 * stride]
    ub = pb[stride :: 2 * stride][: n // (2 * stride)]
    wa = _trap_weights(sa.shape[0], h)
    wb = np.full(ub.shape[0], h)
    return _raw_sum(sa, wa, ub, wb, kernel)


def pair_kernel_double_integral(
    pathA: BrownianPath,
    pathB: BrownianPath,
    kernel: PairKernel,
    rule: str = "staggered",
    richardson: bool = False,
) -> float:
    """int_0^T int_0^T k(A_s - B_u) ds du on the path time grid.

    rule="staggered": s runs over even steps with trapezoid weights and u over
    odd steps with midpoint weights, so s != u and the diagonal singularity is
    never sampled. For distinct paths the result is averaged over the two role
    assignments, which makes it exactly symmetric. With ``richardson`` the
    same rule on the doubled step is combined with exponent 1 - alpha/2.
    rule="trapezoid": tensor trapezoid on all steps (distinct paths only).
    """
    if kernel.exponent_sum >= 2.0:
        raise ValueError(f"kernel singularity order {kernel.exponent_sum} >= 2 is not integrable")
    if pathA.positions.shape != pathB.positions.shape or not math.isclose(pathA.dt, pathB.dt):
        raise ValueError("paths must share the time grid")
    pa, pb, dt = pathA.positions, pathB.positions, pathA.dt
    return pair_integral_arrays(pa, pb, dt, kernel, rule, richardson, same=pathA is pathB)


def pair_integral_arrays(pa, pb, dt, kernel, rule="staggered", richardson=False, same=None) -> float:
    n = pa.shape[0] - 1
    if n == 0:
        return 0.0
    if same is None:
        same = pa is pb or (pa.shape == pb.shape and np.array_equal(pa, pb))
    if rule == "trapezoid":
        if same and kernel.exponent_sum > 0:
            raise ValueError("trapezoid rule samples the diagonal; use the staggered rule for a self pair")
        w = _trap_weights(n + 1, dt)
        return _raw_sum(pa, w, pb, w, kernel)
    if rule != "staggered":
        raise ValueError(f"unknown diagonal rule {rule!r}")
    if n % 2:
        raise ValueError("staggered rule needs an even number of steps")

    def one(stride):
        v = _staggered(pa, pb, dt, kernel, stride)
        if not same:
            v = 0.5 * (v + _staggered(pb, pa, dt, kernel, stride))
        return v

    fine = one(1)
    if not richardson:
        return fine
    if n % 4:
        raise ValueError("Richardson extrapolation needs a step count divisible by 4")
    p = 1.0 - 0.5 * kernel.exponent_sum
    coarse = one(2)
    return (2.0**p * fine - coarse) / (2.0**p - 1.0)


# ======================================================= small separations


def small_separation_mass(
    paths: Sequence[BrownianPath], eps: float, M: float, alpha: float
) -> tuple[float, float]:
    """MC mean and stderr of eps^{-alpha} int int 1{|B_s - B_u| <= M eps} ds du."""
    if paths[0].d < 3:
        raise ValueError("small-separation estimate is defined for d >= 3")
    k = IndicatorKernel(M * eps)
    vals = np.array([eps ** (-alpha) * pair_kernel_double_integral(p, p, k) for p in paths])
    se = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else float("nan")
    return float(vals.mean()), float(se)


def small_separation_annealed(t: float, eps: float, M: float, alpha: float, d: int = 3) -> float:
    """Exact annealed value eps^{-alpha} 2 int_0^t (t - tau) P(|B_tau| <= M eps) dtau."""
    from scipy import integrate, stats

    f = lambda tau: 2.0 * (t - tau) * stats.chi2.cdf((M * eps) ** 2 / tau, d) if tau > 0 else 2.0 * t
    pts = [p for p in ((M * eps) ** 2, 10 * (M * eps) ** 2) if p < t]
    val, _ = integrate.quad(f, 0.0, t, points=pts or None, limit=200, epsabs=0.0, epsrel=1e-10)
    return eps ** (-alpha) * val


# ==================================================== scenery variance (MC)


def scenery_variance_mc(
    model, t: float, eps: float, n_samples: int, dt: float, seed: int, n_features: int = 64, gamma: float = 1.0
) -> tuple[float, float]:
    """MC second moment of the scenery functional over independent (field, path) pairs.

    Each sample uses its own random-Fourier field, whose covariance is exactly
    R, and its own path. The functional has mean zero, so the second moment is
    the variance. Returns (estimate, stderr).
    """
    from .field_models import synthesize_fourier_field

    fn = SceneryFunctional(eps, gamma, t, (0.0,) * model.d)
    T = fn.horizon
    n = n_steps_for(T, dt)
    h = T / n
    vals = np.empty(n_samples)
    for i in range(n_samples):
        fld = synthesize_fourier_field(model, n_features, derive_seed(seed, f"field/{i}"))
        rng = np.random.default_rng(derive_seed(seed, f"path/{i}"))
        pos = np.zeros((n, model.d))
        np.cumsum(rng.standard_normal((n - 1, model.d)) * math.sqrt(h), axis=0, out=pos[1:])
        vals[i] = fn.prefactor * h * float(fld.evaluate(pos).sum())
    sq = vals**2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n_samples))
