"""Moments of the SPDE limit by the conditional-Gaussian path-pair method.

Given Brownian paths B^1..B^N, a Gaussian potential makes the product of
Feynman-Kac phases conditionally Gaussian, so

    E{Z^m conj(Z)^n} = E_B[ prod_j f(x + B^j_t) exp(-1/2 V_1^2 c_d theta^T Q theta) ]

with theta_j = +1 for the first m paths and -1 for the rest. Q_jk is the
double time integral of the kernel prod_i |B^j_i(s) - B^k_i(u)|^{-alpha_i}
(limit) or eps^{-alpha} R_g((B^j_s - B^k_u)/eps) (before the limit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, special

from .feynman_kac import ComplexEstimate, InitialCondition
from .field_models import CovarianceModel, HermiteFunctional, product_power
from .path_engine import (
    BrownianPath,
    ConstantKernel,
    HermiteTailKernel,
    MollifiedPowerKernel,
    PowerKernel,
    SmoothPowerKernel,
    pair_integral_arrays,
    sample_paths,
)
from .seeding import derive_seed


def _check_alphas(alphas) -> tuple:
    a = tuple(float(v) for v in alphas)
    if any(v < 0 or v >= 1 for v in a):
        raise ValueError("each alpha_i must lie in [0, 1)")
    if sum(a) >= 2:
        raise ValueError("alpha = sum alpha_i must be below 2")
    return a


@dataclass(frozen=True)
class SpdeModel:
    alphas: tuple
    coupling: float = 1.0  # V_1
    c_d: float = 1.0
    functional: Optional[HermiteFunctional] = None

    def __post_init__(self):
        a = _check_alphas(self.alphas)
        if not 0 < sum(a) < 2:
            raise ValueError("alpha must lie in (0, 2)")
        object.__setattr__(self, "alphas", a)
        if self.coupling == 0:
            raise ValueError("V_1 must be nonzero")

    @property
    def d(self) -> int:
        return len(self.alphas)

    @property
    def alpha(self) -> float:
        return float(sum(self.alphas))

    @property
    def base_covariance(self) -> CovarianceModel:
        return product_power(self.alphas, variance=self.c_d)

    @property
    def noise_strength(self) -> float:
        """V_1^2 c_d, the factor in front of Q."""
        return self.coupling**2 * self.c_d


# ============================================================ variances


def conditional_variance_Y(path: BrownianPath, alphas: Sequence[float], t: float, richardson: bool = False) -> float:
    """Q_jj = int_0^t int_0^t prod_i |B_i(s) - B_i(u)|^{-alpha_i} ds du on one path."""
    a = _check_alphas(alphas)
    if not math.isclose(path.T, t, rel_tol=1e-12):
        raise ValueError("path horizon must equal t")
    kernel = ConstantKernel(1.0) if not any(a) else PowerKernel(a)
    return pair_integral_arrays(path.positions, path.positions, path.dt, kernel, richardson=richardson, same=True)


def annealed_factor(alpha_i: float) -> float:
    """int |x|^{-a} q_1(x) dx = 2^{-a/2} Gamma((1-a)/2) / Gamma(1/2)."""
    return 2.0 ** (-alpha_i / 2) * special.gamma((1 - alpha_i) / 2) / special.gamma(0.5)


def annealed_factor_quadrature(alpha_i: float) -> float:
    """Same factor by direct 1-D quadrature against the standard normal density."""
    f = lambda x: x ** (-alpha_i) * math.exp(-0.5 * x * x) * math.sqrt(2.0 / math.pi)
    return integrate.quad(f, 0.0, 1.0, epsabs=0, epsrel=1e-12)[0] + integrate.quad(
        f, 1.0, np.inf, epsabs=0, epsrel=1e-12
    )[0]


def annealed_Y2_oracle(t: float, alphas: Sequence[float], d: Optional[int] = None) -> float:
    """E_B Q_jj = 2 t^{2-alpha/2} / ((1-alpha/2)(2-alpha/2)) prod_i annealed_factor(alpha_i)."""
    a = _check_alphas(alphas)
    if d is not None and d != len(a):
        raise ValueError("one exponent per coordinate is required")
    al = sum(a)
    time_part = 2.0 * t ** (2 - al / 2) / ((1 - al / 2) * (2 - al / 2))
    return time_part * float(np.prod([annealed_factor(v) for v in a]))


def annealed_mollified_oracle(t: float, alphas: Sequence[float], eta: float) -> float:
    """E_B of mollified_variance: each coordinate sees variance |s-u| + 2 eta.

    2 int_0^t (t-r)(r + 2 eta)^{-alpha/2} dr times the same Gaussian factors.
    """
    a = _check_alphas(alphas)
    al = sum(a)
    c = 2.0 * eta
    p = 1.0 - al / 2
    # int_0^t (t - r)(r + c)^{-al/2} dr in closed form
    F = lambda r: (t + c) * (r + c) ** p / p - (r + c) ** (p + 1) / (p + 1)
    return 2.0 * (F(t) - F(0.0)) * float(np.prod([annealed_factor(v) for v in a]))


def smoothed_factor(alpha_i: float, r: float, eps: float) -> float:
    """E (eps^2 + r Z^2)^{-a/2} for a standard normal Z (r > 0)."""
    f = lambda z: (eps * eps + r * z * z) ** (-alpha_i / 2) * math.exp(-0.5 * z * z) * math.sqrt(2.0 / math.pi)
    z0 = eps / math.sqrt(r)
    return integrate.quad(f, 0.0, z0, epsrel=1e-11)[0] + integrate.quad(f, z0, np.inf, epsrel=1e-11)[0]


def annealed_smoothed_oracle(t: float, alphas: Sequence[float], eps: float) -> float:
    """E_B of the self-pair integral of eps^{-alpha} R_g((B_s - B_u)/eps).

    Coordinates are independent, so this is 2 int_0^t (t - r) prod_i smoothed_factor(alpha_i, r, eps) dr.
    """
    a = _check_alphas(alphas)
    if eps <= 0:
        raise ValueError("eps must be positive")
    h = lambda r: 2.0 * (t - r) * float(np.prod([smoothed_factor(v, r, eps) for v in a])) if r > 0 else 2.0 * t * eps ** (-sum(a))
    pts = [p for p in (eps**2, 10 * eps**2) if p < t]
    return integrate.quad(h, 0.0, t, points=pts or None, epsrel=1e-9, limit=400)[0]


def mollified_variance(path: BrownianPath, alphas: Sequence[float], t: float, eta: float, richardson: bool = False) -> float:
    """Y_eta variance: the power kernel smoothed by q_eta * q_eta, on one path."""
    if eta <= 0:
        raise ValueError("mollifier width must be positive")
    a = _check_alphas(alphas)
    return pair_integral_arrays(
        path.positions, path.positions, path.dt, MollifiedPowerKernel(a, eta), richardson=richardson, same=True
    )


def mollified_kernel_at_zero(alphas: Sequence[float], eta: float) -> float:
    return float(MollifiedPowerKernel(tuple(alphas), eta)(np.zeros((1, len(alphas))))[0])


# ============================================================ Q matrices


def q_matrix(paths: np.ndarray, dt: float, kernel, richardson: bool = False) -> np.ndarray:
    """Symmetric matrix of pair integrals for a bundle of paths (N, n+1, d)."""
    n = paths.shape[0]
    Q = np.empty((n, n))
    for j in range(n):
        Q[j, j] = pair_integral_arrays(paths[j], paths[j], dt, kernel, richardson=richardson, same=True)
        for k in range(j + 1, n):
            Q[j, k] = Q[k, j] = pair_integral_arrays(paths[j], paths[k], dt, kernel, richardson=richardson, same=False)
    return Q


def min_eigenvalue(Q: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (Q + Q.T)).min())


def _theta(m: int, n: int) -> np.ndarray:
    return np.concatenate([np.ones(m), -np.ones(n)])


@dataclass
class BundleResult:
    """Per-bundle f-products and quadratic forms, reusable across eps."""

    fprod: np.ndarray
    qforms: dict
    min_eigs: dict


def bundle_quadratic_forms(
    model: SpdeModel,
    f: InitialCondition,
    t: float,
    x,
    m: int,
    n: int,
    n_bundles: int,
    dt: float,
    seed: int,
    eps_list: Sequence[float] = (),
    include_limit: bool = True,
    richardson: bool = False,
) -> BundleResult:
    """theta^T Q theta for the limit kernel and each eps, on common path bundles."""
    N = m + n
    theta = _theta(m, n)
    x = np.asarray(x, dtype=float)
    keys = (["limit"] if include_limit else []) + [float(e) for e in eps_list]
    qf = {k: np.empty(n_bundles) for k in keys}
    me = {k: np.empty(n_bundles) for k in keys}
    fprod = np.empty(n_bundles)
    for b in range(n_bundles):
        rng = np.random.default_rng(derive_seed(seed, f"bundle/{b}"))
        paths = sample_paths(model.d, t, dt, N, rng)
        if m < n:
            # reversed order makes theta(m, n) = -theta(n, m): swapped moments are exact conjugates
            paths = paths[::-1]
        h = t / (paths.shape[1] - 1)
        fprod[b] = float(np.prod(f(x[None, :] + paths[:, -1, :])))
        for k in keys:
            kern = PowerKernel(model.alphas) if k == "limit" else SmoothPowerKernel(model.alphas, k)
            Q = q_matrix(paths, h, kern, richardson)
            qf[k][b] = float(theta @ Q @ theta)
            me[k][b] = min_eigenvalue(Q)
    return BundleResult(fprod=fprod, qforms=qf, min_eigs=me)


def _moment_from(fprod, qform, strength) -> ComplexEstimate:
    vals = fprod * np.exp(-0.5 * strength * qform)
    return ComplexEstimate.from_samples(vals.astype(complex))


def u_spde_moment(
    model: SpdeModel, f: InitialCondition, t: float, x, m: int, n: int,
    n_paths: int, dt: float, seed: int, richardson: bool = False,
) -> ComplexEstimate:
    """E{Z^m conj(Z)^n} for the SPDE limit; n_paths is the number of N-path bundles."""
    if m < 0 or n < 0:
        raise ValueError("moment orders must be nonnegative")
    if m + n == 0:
        return ComplexEstimate(1.0 + 0j, 0.0, n_paths)
    res = bundle_quadratic_forms(model, f, t, x, m, n, n_paths, dt, seed, (), True, richardson)
    return _moment_from(res.fprod, res.qforms["limit"], model.noise_strength)


def u_eps_moment_gaussian(
    model: SpdeModel, f: InitialCondition, t: float, x, eps: float, m: int, n: int,
    n_paths: int, dt: float, seed: int, richardson: bool = False,
) -> ComplexEstimate:
    """E{u_eps^m conj(u_eps)^n} for the Gaussian potential V = V_1 g, g with covariance R_g."""
    if m + n == 0:
        return ComplexEstimate(1.0 + 0j, 0.0, n_paths)
    res = bundle_quadratic_forms(model, f, t, x, m, n, n_paths, dt, seed, [eps], False, richardson)
    return _moment_from(res.fprod, res.qforms[float(eps)], model.noise_strength)


def moment_sweep(
    model: SpdeModel, f: InitialCondition, t: float, x, eps_list: Sequence[float], m: int, n: int,
    n_paths: int, dt: float, seed: int, richardson: bool = False,
) -> list[dict]:
    """Rows epsilon,m,n,re_mean,im_mean,stderr,n_bundles,seed; epsilon = 0 is the limit.

    Extra keys: min_eig (smallest Q eigenvalue over bundles) and the paired
    difference eps-moment minus limit-moment on common bundles (diff_mean, diff_se).
    """
    res = bundle_quadratic_forms(model, f, t, x, m, n, n_paths, dt, seed, eps_list, True, richardson)
    rows = []
    for k in [float(e) for e in eps_list] + ["limit"]:
        est = _moment_from(res.fprod, res.qforms[k], model.noise_strength)
        dm, dse = (0.0, 0.0) if k == "limit" else paired_difference(res, k, model.noise_strength)
        rows.append(
            dict(
                epsilon=0.0 if k == "limit" else k, m=m, n=n, re_mean=est.mean.real, im_mean=est.mean.imag,
                stderr=est.stderr, n_bundles=n_paths, seed=seed,
                min_eig=float(res.min_eigs[k].min()), diff_mean=dm, diff_se=dse,
            )
        )
    return rows


def paired_difference(res: BundleResult, key, strength: float) -> tuple[float, float]:
    """Mean and stderr of the per-bundle difference eps-moment minus limit-moment."""
    a = res.fprod * np.exp(-0.5 * strength * res.qforms[key])
    b = res.fprod * np.exp(-0.5 * strength * res.qforms["limit"])
    dlt = a - b
    return float(dlt.mean()), float(dlt.std(ddof=1) / math.sqrt(dlt.size))


# ======================================================= Hermite remainder


def hermite_remainder_variance(
    h: HermiteFunctional, Rg: CovarianceModel, eps: float, t: float, n_paths: int, seed: int, dt: float = 1 / 400,
) -> tuple[float, float]:
    """Annealed E of eps^{-alpha} int int sum_{n>=2} V_n^2/n! R_g((B_s - B_u)/eps)^n ds du.

    This is the second moment of eps^{-alpha/2} int_0^t (Phi - V_1 id)(g(B_s/eps)) ds.
    Returns (mean, stderr) over paths.
    """
    _check_base(Rg)
    w = h.weights().copy()
    w[:2] = 0.0
    if not np.any(w):
        return 0.0, 0.0
    kern = HermiteTailKernel(Rg.alphas, eps, tuple(w))
    vals = _self_integrals(kern, Rg.d, t, dt, n_paths, seed)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_paths))


def hermite_remainder_bound(
    h: HermiteFunctional, Rg: CovarianceModel, eps: float, t: float, n_paths: int, seed: int, dt: float = 1 / 400,
) -> tuple[float, float]:
    """(sum_{n>=2} V_n^2/n!) eps^{-alpha} int int R_g(./eps)^2, using R_g^n <= R_g^2 for n >= 2."""
    _check_base(Rg)
    tail = float(h.weights()[2:].sum())
    kern = HermiteTailKernel(Rg.alphas, eps, (0.0, 0.0, tail))
    vals = _self_integrals(kern, Rg.d, t, dt, n_paths, seed)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_paths))


def annealed_remainder_oracle(h: HermiteFunctional, Rg: CovarianceModel, eps: float, t: float) -> float:
    """E_B of the remainder second moment, coordinate by coordinate.

    sum_{n>=2} V_n^2/n! eps^{-alpha} 2 int_0^t (t - r) prod_i E(1 + r Z^2/eps^2)^{-n alpha_i/2} dr.
    """
    _check_base(Rg)
    a = Rg.alphas
    al = sum(a)
    total = 0.0
    for n, w in enumerate(h.weights()):
        if n < 2 or w == 0:
            continue

        def g(r, n=n):
            if r == 0:
                return 2.0 * t
            return 2.0 * (t - r) * float(np.prod([eps ** (n * v) * smoothed_factor(n * v, r, eps) for v in a]))

        pts = [p for p in (eps**2, 10 * eps**2) if p < t]
        total += w * eps ** (-al) * integrate.quad(g, 0.0, t, points=pts or None, epsrel=1e-9, limit=400)[0]
    return total


def _check_base(Rg: CovarianceModel) -> None:
    if Rg.kind != "product-power" or not math.isclose(Rg.variance, 1.0):
        raise ValueError("the remainder needs a product-power R_g normalized to R_g(0) = 1")


def _self_integrals(kern, d, t, dt, n_paths, seed) -> np.ndarray:
    vals = np.empty(n_paths)
    for b in range(n_paths):
        rng = np.random.default_rng(derive_seed(seed, f"path/{b}"))
        p = sample_paths(d, t, dt, 1, rng)[0]
        vals[b] = pair_integral_arrays(p, p, t / (p.shape[0] - 1), kern, same=True)
    return vals
