"""Feynman-Kac Monte Carlo for u_eps, the homogenized limit and weak residuals.

u_eps(t, x) = E_B[ f(x + eps B_{t/eps^2}) exp(i eps^{2-gamma} int_0^{t/eps^2} V(x/eps + B_s) ds) ]
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._quad import gauss_hermite_e
from .field_models import (
    CovarianceModel,
    FieldRealization,
    synthesize_blob_field,
    synthesize_grid_field,
)
from .path_engine import cumulative_scenery, sample_paths_on_grid, time_grid
from .seeding import derive_seed

CHUNK = 256


@dataclass(frozen=True)
class ComplexEstimate:
    mean: complex
    stderr: float
    n_samples: int

    @classmethod
    def from_samples(cls, z: np.ndarray) -> "ComplexEstimate":
        z = np.asarray(z, dtype=complex)
        n = z.size
        if n > 1:
            var = z.real.var(ddof=1) + z.imag.var(ddof=1)
            se = math.sqrt(var / n)
        else:
            se = float("nan")
        return cls(complex(z.mean()), se, n)


@dataclass(frozen=True)
class InitialCondition:
    fn: Callable = field(repr=False)
    sup_norm: float
    heat: Optional[Callable] = field(default=None, repr=False)
    name: str = "custom"

    def __call__(self, x):
        return np.asarray(self.fn(np.atleast_2d(np.asarray(x, dtype=float))), dtype=float)


def gaussian_initial() -> InitialCondition:
    """f(x) = exp(-|x|^2/2) with its closed-form heat convolution."""

    def heat(t, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        return (1 + t) ** (-d / 2) * np.exp(-np.sum(x * x, axis=-1) / (2 * (1 + t)))

    return InitialCondition(lambda y: np.exp(-0.5 * np.sum(y * y, axis=-1)), 1.0, heat, "gaussian")


def constant_initial(c: float = 1.0) -> InitialCondition:
    return InitialCondition(
        lambda y: np.full(y.shape[0], float(c)), abs(c), lambda t, x: float(c), f"constant({c})"
    )


def initial_from_spec(spec: dict | str | None) -> InitialCondition:
    if spec is None or spec == "gaussian" or (isinstance(spec, dict) and spec.get("kind") == "gaussian"):
        return gaussian_initial()
    if isinstance(spec, dict) and spec.get("kind") == "constant":
        return constant_initial(float(spec.get("value", 1.0)))
    raise ValueError(f"unknown initial condition {spec!r}")


def heat_semigroup(f: InitialCondition, t: float, x, n_nodes: int = 64) -> float:
    """int q_t(y) f(x + y) dy by tensor Gauss-Hermite quadrature.

    64 nodes per axis keep the relative error near 1e-9 for the Gaussian datum
    up to t = 5 (24 nodes leave 1e-3 there, the datum being narrow against q_t).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    x = np.asarray(x, dtype=float)
    if t == 0:
        return float(f(x)[0])
    d = x.shape[-1]
    g, w = gauss_hermite_e(n_nodes)
    nodes = np.stack(np.meshgrid(*([g] * d), indexing="ij"), axis=-1).reshape(-1, d)
    weights = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), axis=-1).reshape(-1, d), axis=1)
    return float(np.dot(weights, f(x[None, :] + math.sqrt(t) * nodes)))


def u_hom_exact(sigma2: float, f: InitialCondition, t: float, x) -> complex:
    if sigma2 < 0:
        raise ValueError("sigma^2 must be nonnegative")
    return complex(math.exp(-0.5 * sigma2 * t) * heat_semigroup(f, t, x))


def _check_coverage(fld: FieldRealization, T: float, factor: float) -> None:
    L = getattr(fld, "L", None)
    if L is not None and L < factor * math.sqrt(T):
        raise ValueError(
            f"field period L={L} is below {factor} x sqrt(t/eps^2) = {factor * math.sqrt(T):.3g}; "
            "insufficient field coverage"
        )


def fk_samples(
    fld: FieldRealization,
    f: InitialCondition,
    t: float,
    x,
    eps_list: Sequence[float],
    gamma: float,
    n_paths: int,
    dt: float,
    seed: int,
    coverage: float = 8.0,
) -> np.ndarray:
    """Per-path Feynman-Kac samples for several eps from common paths.

    Paths are drawn once on [0, t/eps_min^2] with every horizon t/eps^2 on
    the grid; when x = 0 the scenery integrals for all eps are prefixes of one
    running sum. Returns shape (len(eps_list), n_paths).
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    eps = np.asarray(eps_list, dtype=float)
    horizons = t / eps**2
    Tmax = float(horizons.max())
    _check_coverage(fld, Tmax, coverage)
    times = time_grid(Tmax, dt, horizons)
    hidx = np.searchsorted(times, np.round(horizons, 12))
    dts = np.diff(times)
    shared = not np.any(x)
    out = np.empty((eps.size, n_paths), dtype=complex)
    for c0 in range(0, n_paths, CHUNK):
        m = min(CHUNK, n_paths - c0)
        rng = np.random.default_rng(derive_seed(seed, f"paths/{c0 // CHUNK}"))
        paths = sample_paths_on_grid(d, times, m, rng)
        if shared:
            cum = cumulative_scenery(paths, fld, np.zeros(d), dts)
        for k, e in enumerate(eps):
            j = hidx[k]
            if not shared:
                sub = np.ascontiguousarray(paths[:, : j + 1])
                cum_k = cumulative_scenery(sub, fld, x / e, dts[:j])[:, j]
            else:
                cum_k = cum[:, j]
            phase = e ** (2.0 - gamma) * cum_k
            out[k, c0 : c0 + m] = f(x[None, :] + e * paths[:, j, :]) * np.exp(1j * phase)
    return out


def estimate_u_eps(
    fld: FieldRealization,
    f: InitialCondition,
    t: float,
    x,
    eps: float,
    gamma: float = 1.0,
    n_paths: int = 1000,
    dt: float = 0.1,
    seed: int = 0,
    coverage: float = 8.0,
) -> ComplexEstimate:
    """Monte Carlo u_eps(t, x); ``dt`` is the microscopic time step."""
    z = fk_samples(fld, f, t, x, [eps], gamma, n_paths, dt, seed, coverage)[0]
    return ComplexEstimate.from_samples(z)


# ======================================================== homogenization


@dataclass(frozen=True)
class HomogenizationRow:
    epsilon: float
    n_fields: int
    n_paths: int
    err_mean: float
    err_se: float
    noise_floor: float
    rms_debiased: float
    seed: int


def default_period(model: CovarianceModel, Tmax: float, coverage: float = 8.0) -> float:
    L = coverage * math.sqrt(Tmax)
    if model.kind == "poisson-blob":
        return float(math.ceil(L / model.radius) * model.radius)
    h = model.length / 4
    n = int(math.ceil(L / h))
    n += n % 2
    return n * h


def realize_field(model: CovarianceModel, L: float, seed: int) -> FieldRealization:
    if model.kind == "poisson-blob":
        return synthesize_blob_field(model, L, seed)
    return synthesize_grid_field(model, L, model.length / 4, seed)


def homogenization_sweep(
    model: Optional[CovarianceModel],
    f: InitialCondition,
    t: float,
    x,
    eps_list: Sequence[float],
    n_fields: int,
    n_paths: int,
    dt: float,
    seed: int,
    sigma2: Optional[float] = None,
    field_factory: Optional[Callable[[int], FieldRealization]] = None,
    gamma: float = 1.0,
    L: Optional[float] = None,
) -> list[HomogenizationRow]:
    """E|u_eps - u_hom| over fields, one row per eps.

    Each field realization is drawn once and probed at every eps with common
    paths. err_se is the outer standard error (it contains the inner noise);
    noise_floor = sqrt(pi)/2 * rms inner stderr is the value of E|u_eps - u_hom|
    that inner Monte Carlo noise alone would produce. rms_debiased removes the
    inner variance from the mean square error.
    """
    from .corrector import sigma2_spectral

    if sigma2 is None:
        sigma2 = sigma2_spectral(model)
    eps = np.asarray(eps_list, dtype=float)
    uh = u_hom_exact(sigma2, f, t, x)
    Tmax = float((t / eps**2).max())
    if field_factory is None:
        period = L if L is not None else default_period(model, Tmax)
        field_factory = lambda i: realize_field(model, period, derive_seed(seed, f"field/{i}"))
    errs = np.empty((n_fields, eps.size))
    se2 = np.empty((n_fields, eps.size))
    for i in range(n_fields):
        fld = field_factory(i)
        z = fk_samples(fld, f, t, x, eps, gamma, n_paths, dt, derive_seed(seed, f"field/{i}/inner"))
        est = z.mean(axis=1)
        errs[i] = np.abs(est - uh)
        se2[i] = (z.real.var(axis=1, ddof=1) + z.imag.var(axis=1, ddof=1)) / n_paths
    rows = []
    for k, e in enumerate(eps):
        ms = float(np.mean(errs[:, k] ** 2) - np.mean(se2[:, k]))
        rows.append(
            HomogenizationRow(
                epsilon=float(e),
                n_fields=n_fields,
                n_paths=n_paths,
                err_mean=float(errs[:, k].mean()),
                err_se=float(errs[:, k].std(ddof=1) / math.sqrt(n_fields)) if n_fields > 1 else float("nan"),
                noise_floor=float(0.5 * math.sqrt(math.pi) * math.sqrt(se2[:, k].mean())),
                rms_debiased=math.sqrt(max(ms, 0.0)),
                seed=seed,
            )
        )
    return rows


def homogenization_error(
    model, f, t, x, eps, gamma=1.0, n_fields=1000, n_paths=1000, dt=0.1, seed=0, **kw
) -> tuple[float, float, float]:
    """(E|u_eps - u_hom| estimate, its stderr, inner noise floor) at one eps."""
    row = homogenization_sweep(model, f, t, x, [eps], n_fields, n_paths, dt, seed, gamma=gamma, **kw)[0]
    return row.err_mean, row.err_se, row.noise_floor


# ========================================================== weak residual


def bump(u):
    """exp(-1/(1-u^2)) on |u| < 1, zero outside."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1
    out[m] = np.exp(-1.0 / (1.0 - u[m] ** 2))
    return out


def bump_dd(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1
    v = u[m]
    q = 1.0 - v * v
    g1 = -2.0 * v / q**2
    g2 = -2.0 / q**2 - 8.0 * v * v / q**3
    out[m] = (g2 + g1 * g1) * np.exp(-1.0 / q)
    return out


def poly_bump(u, k: int = 6):
    """(1 - u^2)^k on |u| < 1: C^{k-1} with compact support, polynomial inside."""
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) < 1, (1.0 - np.minimum(u * u, 1.0)) ** k, 0.0)


def poly_bump_dd(u, k: int = 6):
    u = np.asarray(u, dtype=float)
    q = 1.0 - np.minimum(u * u, 1.0)
    dd = -2.0 * k * q ** (k - 1) + 4.0 * k * (k - 1) * u * u * q ** (k - 2)
    return np.where(np.abs(u) < 1, dd, 0.0)


@dataclass(frozen=True)
class TestFunction:
    """phi(y) = prod_i b((y_i - c_i)/r) with support in the cube c +- r.

    profile "poly" uses b(u) = (1 - u^2)^6, which is C^5 (enough for the weak
    form, which needs C^2) and polynomial on its support, so Gauss-Legendre
    nodes integrate it to near machine precision. "bump" uses exp(-1/(1-u^2)),
    which is C^infinity but needs many more nodes.
    """

    __test__ = False  # not a pytest class

    center: tuple
    radius: float = 1.0
    profile: str = "poly"

    def __post_init__(self):
        if self.profile not in ("poly", "bump"):
            raise ValueError("profile must be 'poly' or 'bump'")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def _b(self, u):
        return poly_bump(u) if self.profile == "poly" else bump(u)

    def _bdd(self, u):
        return poly_bump_dd(u) if self.profile == "poly" else bump_dd(u)

    def __call__(self, y):
        u = (np.asarray(y) - np.asarray(self.center)) / self.radius
        return np.prod(self._b(u), axis=-1)

    def half_laplacian(self, y):
        u = (np.asarray(y) - np.asarray(self.center)) / self.radius
        b = self._b(u)
        bdd = self._bdd(u) / self.radius**2
        d = u.shape[-1]
        tot = np.zeros(u.shape[:-1])
        for i in range(d):
            term = bdd[..., i]
            for j in range(d):
                if j != i:
                    term = term * b[..., j]
            tot += term
        return 0.5 * tot


@dataclass(frozen=True)
class ResidualQuadrature:
    """Gauss-Legendre nodes on the support cube of phi and on [0, t]."""

    n_space: int = 9
    n_time: int = 11

    def space(self, phi: TestFunction):
        g, w = np.polynomial.legendre.leggauss(self.n_space)
        d = len(phi.center)
        pts = np.array(list(itertools.product(g, repeat=d))) * phi.radius + np.asarray(phi.center)
        ws = np.prod(np.array(list(itertools.product(w, repeat=d))), axis=1) * phi.radius**d
        return pts, ws

    def time(self, t: float):
        g, w = np.polynomial.legendre.leggauss(self.n_time)
        return 0.5 * t * (g + 1.0), 0.5 * t * w


def _potential(fld: FieldRealization, eps: float, gamma: float, y: np.ndarray) -> np.ndarray:
    """V_eps(y) = eps^{-gamma} V(y / eps)."""
    return eps ** (-gamma) * fld.evaluate(y / eps)


def weak_residual_of(
    u: Callable, fld: Optional[FieldRealization], f: InitialCondition, phi: TestFunction, t: float,
    eps: float = 1.0, gamma: float = 1.0, quad: ResidualQuadrature = ResidualQuadrature(),
) -> complex:
    """Weak-form residual of a given solution u(s, y) (vectorized in y)."""
    y, wy = quad.space(phi)
    s, ws = quad.time(t)
    ph = phi(y)
    lap = phi.half_laplacian(y)
    v = np.zeros(len(y)) if fld is None else _potential(fld, eps, gamma, y)
    res = np.dot(wy, u(t, y) * ph) - np.dot(wy, f(y) * ph)
    for sk, wk in zip(s, ws):
        res -= wk * np.dot(wy, u(sk, y) * (lap + 1j * v * ph))
    return complex(res)


def weak_form_residual(
    fld: FieldRealization,
    f: InitialCondition,
    phi: TestFunction,
    t: float,
    n_paths: int,
    seed: int,
    eps: float = 1.0,
    gamma: float = 1.0,
    dt: float = 0.01,
    quad: ResidualQuadrature = ResidualQuadrature(),
    support_box: Optional[tuple] = None,
) -> tuple[float, float]:
    """|residual| of the Monte Carlo u_eps tested against phi, and its stderr.

    u_eps(s, y) at every quadrature node comes from one shared path ensemble
    (common random numbers). The residual is linear in the per-path samples,
    so its standard error is the sample standard error of the per-path
    residual contributions; the complex residual is reduced to a modulus with
    the combined standard error of real and imaginary parts.
    """
    if support_box is not None:
        lo, hi = support_box
        c = np.asarray(phi.center)
        if np.any(c - phi.radius < lo) or np.any(c + phi.radius > hi):
            raise ValueError("test function support is not inside the evaluation grid")
    y, wy = quad.space(phi)
    s, ws = quad.time(t)
    d = y.shape[1]
    ph = phi(y)
    lap = phi.half_laplacian(y)
    v = _potential(fld, eps, gamma, y)
    micro = np.concatenate([s, [t]]) / eps**2
    times = time_grid(t / eps**2, dt, micro)
    idx = np.searchsorted(times, np.round(micro, 12))
    dts = np.diff(times)
    pref = eps ** (2.0 - gamma)
    rng = np.random.default_rng(derive_seed(seed, "weak-residual"))
    contrib = np.empty(n_paths, dtype=complex)
    base = np.dot(wy, f(y) * ph)
    for c0 in range(0, n_paths, CHUNK):
        m = min(CHUNK, n_paths - c0)
        paths = sample_paths_on_grid(d, times, m, rng)
        acc = np.full(m, -base, dtype=complex)
        for node in range(len(y)):
            cum = cumulative_scenery(paths, fld, y[node] / eps, dts)
            for k, j in enumerate(idx):
                pos = y[node][None, :] + eps * paths[:, j, :]
                val = f(pos) * np.exp(1j * pref * cum[:, j])
                if k == len(s):
                    acc += wy[node] * ph[node] * val
                else:
                    acc -= ws[k] * wy[node] * (lap[node] + 1j * v[node] * ph[node]) * val
        contrib[c0 : c0 + m] = acc
    est = ComplexEstimate.from_samples(contrib)
    return abs(est.mean), est.stderr
