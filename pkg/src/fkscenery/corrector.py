"""Homogenized constant, corrector energies and the exact scenery variance.

All isotropic integrals are reduced to one radial variable with the sphere
area |S^{d-1}|. Spectral integrals near the origin are done in the variable
k = sqrt(lambda) * eta, i.e. by placing panel edges at the scale sqrt(lambda).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from ._quad import half_line, sphere_area
from .field_models import CovarianceModel


class AssumptionViolation(ValueError):
    """The model makes int R(x)|x|^{2-d} dx (hence sigma^2) infinite."""


def _require_finite_sigma2(model: CovarianceModel) -> None:
    if model.d < 3:
        raise AssumptionViolation("integrability violated: homogenized constant needs d >= 3")
    if not model.isotropic:
        raise AssumptionViolation(
            "integrability violated: product-power tails (alpha < 2) make sigma^2 infinite"
        )
    if model.sigma2_divergent():
        raise AssumptionViolation(
            f"integrability violated: tail exponent beta={model.beta} <= 2 makes sigma^2 infinite"
        )


def _scales(model: CovarianceModel) -> list:
    if model.kind == "poisson-blob":
        # the squared Bessel profile oscillates with period ~ pi / a
        return [c / model.radius for c in (1.0, 3.0, 10.0, 30.0, 100.0)]
    return [1.0 / model.length]


def _radial_spectral(model: CovarianceModel, g, lam: float | None = None) -> float:
    """(2 pi)^{-d} int_{R^d} g(k) H(k) dxi, g radial."""
    d = model.d
    breaks = list(_scales(model))
    if lam is not None:
        breaks.append(math.sqrt(lam))

    def integrand(k):
        return g(k) * float(model.radial_spectrum(k)) * k ** (d - 1)

    return sphere_area(d) * (2 * math.pi) ** (-d) * half_line(integrand, breaks)


def sigma2_spatial(model: CovarianceModel, d: int | None = None) -> float:
    """pi^{-d/2} Gamma(d/2 - 1) int R(x) |x|^{2-d} dx by radial quadrature."""
    d = model.d if d is None else d
    if d != model.d:
        raise ValueError("dimension mismatch")
    _require_finite_sigma2(model)
    pref = math.pi ** (-d / 2) * math.gamma(d / 2 - 1) * sphere_area(d)
    if model.kind == "poisson-blob":
        return pref * model.intensity * _blob_newton_energy(model)
    f = lambda r: float(model.radial_covariance(r)) * r
    return pref * half_line(f, _scales(model))


def _blob_newton_energy(model: CovarianceModel) -> float:
    """int R(r) r dr for the blob covariance, R = psi * psi, without the spectrum.

    int R(x)|x|^{2-d} dx = int psi(y) U(y) dy with the Newton-type potential
    U(y) = int psi(z)|y - z|^{2-d} dz, and the spherical mean of |y - z|^{2-d}
    over |z| = s is max(|y|, s)^{2-d}. Per unit intensity.
    """
    d, a = model.d, model.radius
    psi = lambda s: float(model.blob_profile(s))

    def inner(r):
        lo = integrate.quad(lambda s: psi(s) * s ** (d - 1), 0.0, min(r, a), epsabs=0, epsrel=1e-12)[0]
        hi = integrate.quad(lambda s: psi(s) * s, min(r, a), a, epsabs=0, epsrel=1e-12)[0] if r < a else 0.0
        return sphere_area(d) * (r ** (2 - d) * lo + hi)

    return integrate.quad(lambda r: psi(r) * inner(r) * r ** (d - 1), 0.0, a, epsabs=0, epsrel=1e-11)[0]


def sigma2_spectral(model: CovarianceModel, d: int | None = None) -> float:
    """4 (2 pi)^{-d} int H(xi) |xi|^{-2} dxi."""
    d = model.d if d is None else d
    if d != model.d:
        raise ValueError("dimension mismatch")
    _require_finite_sigma2(model)
    return 4.0 * _radial_spectral(model, lambda k: 1.0 / (k * k))


def corrector_energy(lam: float, model: CovarianceModel, d: int | None = None) -> float:
    """lambda <Phi_lambda, Phi_lambda> = (2 pi)^{-d} int lambda H / (lambda + |xi|^2/2)^2."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return _radial_spectral(model, lambda k: lam / (lam + 0.5 * k * k) ** 2, lam)


def sigma_lambda2_gap(lam: float, model: CovarianceModel) -> float:
    """sigma_lambda^2 - sigma^2 (nonpositive)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    _require_finite_sigma2(model)
    g = lambda k: (lam * lam + lam * k * k) / (k * k * (2 * lam + k * k) ** 2)
    return -16.0 * _radial_spectral(model, g, lam)


def sigma_lambda2(lam: float, model: CovarianceModel, d: int | None = None) -> float:
    return sigma2_spectral(model) + sigma_lambda2_gap(lam, model)


def sigma_lambda2_direct(lam: float, model: CovarianceModel) -> float:
    """4 (2 pi)^{-d} int |xi|^2 H / (2 lambda + |xi|^2)^2, the unsubtracted form."""
    return 4.0 * _radial_spectral(model, lambda k: k * k / (2 * lam + k * k) ** 2, lam)


def eta_gap(lam: float, model: CovarianceModel, d: int | None = None) -> float:
    """sum_k ||D_k Phi_lambda - eta_k||^2 = (2 pi)^{-d} int 4 lambda^2 H / (|xi|^2 (lambda + |xi|^2/2)^2)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    _require_finite_sigma2(model)
    g = lambda k: 4.0 * lam * lam / (k * k * (lam + 0.5 * k * k) ** 2)
    return _radial_spectral(model, g, lam)


@dataclass(frozen=True)
class CorrectorQuantities:
    lam: float
    sigma2: float
    sigma_lambda2: float
    corrector_energy: float
    eta_gap: float

    @property
    def eps(self) -> float:
        return math.sqrt(self.lam)


def corrector_quantities(lam: float, model: CovarianceModel) -> CorrectorQuantities:
    s2 = sigma2_spectral(model)
    return CorrectorQuantities(
        lam=lam,
        sigma2=s2,
        sigma_lambda2=s2 + sigma_lambda2_gap(lam, model),
        corrector_energy=corrector_energy(lam, model),
        eta_gap=eta_gap(lam, model),
    )


def lam_from_eps(eps: float) -> float:
    return eps * eps


# ===================================================== scenery variance


def heat_averaged_covariance(model: CovarianceModel, u: float) -> float:
    """C(u) = E R(B_u) by radial quadrature against the heat kernel."""
    d = model.d
    if u == 0:
        return model.r0
    f = lambda r: float(model.radial_covariance(r)) * r ** (d - 1) * math.exp(-r * r / (2 * u))
    edges = [math.sqrt(u)] + _scales(model)
    return sphere_area(d) * (2 * math.pi * u) ** (-d / 2) * half_line(lambda r: f(r), [1.0 / e for e in edges])


def scenery_variance_exact(model: CovarianceModel, d: int | None, t: float, eps: float) -> float:
    """2 eps^2 int_0^T (T - u) C(u) du with T = t/eps^2, as a time x radius double integral."""
    if model is None:
        return 0.0
    T = t / eps**2
    g = lambda u: (T - u) * heat_averaged_covariance(model, u)
    pts = [p for p in (1.0, 10.0, 100.0, 1000.0) if p < T]
    val, _ = integrate.quad(g, 0.0, T, points=pts or None, epsabs=0.0, epsrel=1e-9, limit=400)
    return 2.0 * eps**2 * val


def upper_gamma(s: float, x: float) -> float:
    """Gamma(s, x) for any real s and x > 0."""
    if s >= 0.5:
        return special.gammaincc(s, x) * special.gamma(s)
    # u = x e^v gives a smooth positive integrand; the recurrence in s cancels near the nonpositive integers
    f = lambda v: math.exp(s * (math.log(x) + v) - x * math.exp(v))
    vmax = math.log(max(60.0, 2 * abs(s)) / x) + 5.0
    return integrate.quad(f, 0.0, max(vmax, 1.0), epsabs=0, epsrel=1e-13, limit=200)[0]


def scenery_variance_substituted(model: CovarianceModel, t: float, eps: float) -> float:
    """Same quantity with the time integral done first in lambda = r^2/(2u).

    int_0^T (T - u) q_u(r) du = pi^{-d/2} r^{2-d} / 2 [T Gamma(d/2-1, l0) - r^2/2 Gamma(d/2-2, l0)],
    l0 = r^2 / (2T).
    """
    d = model.d
    T = t / eps**2

    def inner(r):
        l0 = r * r / (2 * T)
        return 0.5 * math.pi ** (-d / 2) * r ** (2 - d) * (
            T * upper_gamma(d / 2 - 1, l0) - 0.5 * r * r * upper_gamma(d / 2 - 2, l0)
        )

    f = lambda r: float(model.radial_covariance(r)) * r ** (d - 1) * inner(r)
    return 2.0 * eps**2 * sphere_area(d) * half_line(f, _scales(model) + [1.0 / math.sqrt(T)])


def scenery_variance_spectral(model: CovarianceModel, t: float, eps: float) -> float:
    """2 eps^2 (2 pi)^{-d} int H [T/a - (1 - e^{-aT})/a^2] dxi, a = |xi|^2/2."""
    T = t / eps**2

    def g(k):
        a = 0.5 * k * k
        x = a * T
        # T/a - (1 - e^{-x})/a^2 = T^2 * (x - 1 + e^{-x}) / x^2
        if x < 1e-4:
            return T * T * (0.5 - x / 6.0 + x * x / 24.0)
        return T * T * (x - 1.0 + math.exp(-x)) / (x * x)

    return 2.0 * eps**2 * _radial_spectral(model, g, 1.0 / T)


def scenery_variance_bound(model: CovarianceModel, t: float) -> float:
    """t pi^{-d/2} Gamma(d/2 - 1) int |R(x)| |x|^{2-d} dx."""
    d = model.d
    f = lambda r: abs(float(model.radial_covariance(r))) * r
    return t * math.pi ** (-d / 2) * math.gamma(d / 2 - 1) * sphere_area(d) * half_line(f, _scales(model))
