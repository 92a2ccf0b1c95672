"""Covariance models, Hermite functionals and field realizations.

Spectral convention throughout: R(x) = (2 pi)^{-d} int e^{i xi.x} H(xi) dxi.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import interpolate, special

from . import _kernels as K
from ._quad import gauss_hermite_e, sphere_area
from .seeding import derive_seed

KINDS = ("isotropic-gaussian-bump", "isotropic-power-law", "product-power", "poisson-blob")
ISOTROPIC = ("isotropic-gaussian-bump", "isotropic-power-law", "poisson-blob")

# Gauss-Legendre panels used for the inverse Hankel transform of blob spectra
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _bessel_ratio(nu: float, z: np.ndarray) -> np.ndarray:
    """z^{-nu} J_nu(z), continuous at z = 0."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-4
    zs = z[small]
    out[small] = (1.0 - zs**2 / (4.0 * (nu + 1.0))) / (2.0**nu * math.gamma(nu + 1.0))
    zl = z[~small]
    out[~small] = special.jv(nu, zl) * zl ** (-nu)
    return out


def _matern_like(nu: float, z: np.ndarray) -> np.ndarray:
    """z^nu K_nu(z) with the z -> 0 limit (inf when nu <= 0)."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    zero = z == 0.0
    if nu > 0:
        out[zero] = 2.0 ** (nu - 1.0) * math.gamma(nu)
    else:
        out[zero] = np.inf
    zz = z[~zero]
    # log space: zz**nu overflows where exp(-zz) already underflows; for nu <= 0 and
    # subnormal zz the value is genuinely beyond float range and becomes inf like the limit
    with np.errstate(over="ignore"):
        out[~zero] = np.exp(nu * np.log(zz) - zz + np.log(special.kve(abs(nu), zz)))
    return out


@dataclass(frozen=True)
class CovarianceModel:
    """Stationary covariance R and its power spectrum H.

    ``variance`` and ``length`` parametrize the two isotropic Gaussian
    families; ``alphas`` the product-power family; the blob family is
    described by Poisson ``intensity`` and the bump A (1 - r^2/a^2)_+^p with
    A = ``amplitude``, a = ``radius``, p = ``power``.
    """

    kind: str
    d: int
    variance: float = 1.0
    length: float = 1.0
    beta: Optional[float] = None
    alphas: Optional[tuple] = None
    intensity: float = 1.0
    amplitude: float = 1.0
    radius: float = 1.0
    power: int = 4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}; expected one of {KINDS}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.d}")
        if not (self.variance > 0 and self.length > 0):
            raise ValueError("variance and length must be positive")
        if self.kind == "isotropic-power-law":
            if self.beta is None or not self.beta > 0:
                raise ValueError("isotropic-power-law needs a tail exponent beta > 0")
        if self.kind == "product-power":
            if self.alphas is None or len(self.alphas) != self.d:
                raise ValueError("product-power needs one exponent per coordinate")
            object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
            if not all(0.0 < a < 1.0 for a in self.alphas):
                raise ValueError("product-power exponents must each lie in (0, 1)")
            if not 0.0 < sum(self.alphas) < 2.0:
                raise ValueError("product-power exponent sum must lie in (0, 2)")
        if self.kind == "poisson-blob":
            if not (self.intensity > 0 and self.radius > 0 and self.amplitude != 0):
                raise ValueError("poisson-blob needs intensity > 0, radius > 0, amplitude != 0")
            if int(self.power) != self.power or self.power < 2:
                raise ValueError("poisson-blob profile power must be an integer >= 2")

    # ------------------------------------------------------------ metadata
    @property
    def isotropic(self) -> bool:
        return self.kind in ISOTROPIC

    @property
    def r0(self) -> float:
        if self.kind == "poisson-blob":
            d, p, a = self.d, self.power, self.radius
            return (
                self.intensity
                * self.amplitude**2
                * a**d
                * math.pi ** (d / 2)
                * math.gamma(2 * p + 1)
                / math.gamma(2 * p + 1 + d / 2)
            )
        return self.variance

    @property
    def c_d(self) -> float:
        """Constant in R(x) ~ c_d prod |x_i|^{-alpha_i} (product-power only)."""
        if self.kind != "product-power":
            raise ValueError("c_d is defined for the product-power family only")
        return self.variance

    @property
    def alpha(self) -> float:
        if self.kind != "product-power":
            raise ValueError("alpha is defined for the product-power family only")
        return float(sum(self.alphas))

    @property
    def blob_centering(self) -> float:
        """Mean of the uncentered blob sum, intensity * int psi."""
        d, p, a = self.d, self.power, self.radius
        return (
            self.intensity
            * self.amplitude
            * a**d
            * math.pi ** (d / 2)
            * math.gamma(p + 1)
            / math.gamma(p + 1 + d / 2)
        )

    def sigma2_divergent(self) -> bool:
        """True when int R(x)|x|^{2-d} dx is infinite (long-range tail too heavy)."""
        if self.kind == "isotropic-power-law":
            return self.beta <= 2.0
        if self.kind == "product-power":
            return True
        return self.d <= 2

    # ------------------------------------------------------------ profiles
    def blob_profile(self, r):
        r = np.asarray(r, dtype=float)
        a = self.radius
        base = np.clip(1.0 - (r / a) ** 2, 0.0, None)
        return self.amplitude * base**self.power

    def blob_profile_ft(self, k):
        """Fourier transform of the radial bump profile."""
        d, p, a = self.d, self.power, self.radius
        nu = d / 2 + p
        k = np.asarray(k, dtype=float)
        return (
            self.amplitude
            * a**d
            * math.gamma(p + 1)
            * 2.0**p
            * (2 * math.pi) ** (d / 2)
            * _bessel_ratio(nu, k * a)
        )

    # ------------------------------------------------------------ radial forms
    def radial_covariance(self, r):
        if not self.isotropic:
            raise ValueError("radial form requested for a non-isotropic model")
        r = np.abs(np.asarray(r, dtype=float))
        if self.kind == "isotropic-gaussian-bump":
            return self.variance * np.exp(-0.5 * (r / self.length) ** 2)
        if self.kind == "isotropic-power-law":
            return self.variance * (1.0 + (r / self.length) ** 2) ** (-0.5 * self.beta)
        spline = _blob_covariance_table(self)
        return np.where(r < 2 * self.radius, spline(np.minimum(r, 2 * self.radius)), 0.0)

    def blob_covariance_hankel(self, r):
        """Blob covariance by direct inverse Hankel transform of the spectrum."""
        d, a = self.d, self.radius
        r = np.atleast_1d(r)
        out = np.zeros_like(r)
        inside = r < 2 * a
        out[inside & (r == 0)] = self.r0
        sel = inside & (r > 0)
        if np.any(sel):
            rr = r[sel]
            # panels of width 1 in k*a; the bump spectrum decays like (ka)^{-(d+2p+1)}
            edges = np.arange(0.0, 400.0 + 1e-9, 1.0) / a
            mids = 0.5 * (edges[1:] + edges[:-1])
            half = 0.5 * (edges[1:] - edges[:-1])
            kk = (mids[:, None] + half[:, None] * _GL_X[None, :]).ravel()
            ww = (half[:, None] * _GL_W[None, :]).ravel()
            hk = self.radial_spectrum(kk)
            nu = d / 2 - 1
            # r^{1-d/2} J_nu(kr) k^{d/2} = k^{d-1} (kr)^{-nu} J_nu(kr)
            vals = _bessel_ratio(nu, np.outer(rr, kk)) * (kk ** (d - 1) * hk * ww)[None, :]
            out[sel] = vals.sum(axis=1) * (2 * math.pi) ** (-d / 2)
        return out

    def radial_spectrum(self, k):
        if not self.isotropic:
            raise ValueError("radial form requested for a non-isotropic model")
        k = np.abs(np.asarray(k, dtype=float))
        d, ell = self.d, self.length
        if self.kind == "isotropic-gaussian-bump":
            return self.variance * (2 * math.pi * ell**2) ** (d / 2) * np.exp(-0.5 * (ell * k) ** 2)
        if self.kind == "isotropic-power-law":
            beta = self.beta
            nu = (beta - d) / 2
            pref = (
                self.variance
                * ell**d
                * (2 * math.pi) ** (d / 2)
                * 2.0 ** (1 - beta / 2)
                / math.gamma(beta / 2)
            )
            return pref * _matern_like(nu, ell * k)
        return self.intensity * self.blob_profile_ft(k) ** 2

    # ------------------------------------------------------------ full forms
    def covariance(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValueError(f"point dimension {x.shape[-1]} does not match model dimension {self.d}")
        if self.isotropic:
            return self.radial_covariance(np.linalg.norm(x, axis=-1))
        out = np.full(x.shape[:-1], self.variance)
        for i, a in enumerate(self.alphas):
            out = out * (1.0 + x[..., i] ** 2) ** (-0.5 * a)
        return out

    def spectrum(self, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.d:
            raise ValueError(f"wavevector dimension {xi.shape[-1]} does not match model dimension {self.d}")
        if self.isotropic:
            h = self.radial_spectrum(np.linalg.norm(xi, axis=-1))
        else:
            h = np.full(xi.shape[:-1], self.variance)
            for i, a in enumerate(self.alphas):
                pref = math.sqrt(2 * math.pi) * 2.0 ** (1 - a / 2) / math.gamma(a / 2)
                h = h * pref * _matern_like((a - 1) / 2, np.abs(xi[..., i]))
        if np.any(h < -1e-12 * np.nanmax(np.abs(h), initial=1.0)):
            raise ValueError("negative power spectrum: model is not admissible")
        return h

    # ------------------------------------------------------------ serialization
    def to_dict(self) -> dict:
        out = {"kind": self.kind, "d": self.d}
        if self.kind in ("isotropic-gaussian-bump", "isotropic-power-law"):
            out.update(variance=self.variance, length=self.length)
        if self.kind == "isotropic-power-law":
            out["beta"] = self.beta
        if self.kind == "product-power":
            out.update(variance=self.variance, alphas=list(self.alphas))
        if self.kind == "poisson-blob":
            out.update(
                intensity=self.intensity,
                amplitude=self.amplitude,
                radius=self.radius,
                power=self.power,
            )
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "CovarianceModel":
        doc = dict(doc)
        doc.pop("seed", None)
        if "alphas" in doc and doc["alphas"] is not None:
            doc["alphas"] = tuple(doc["alphas"])
        allowed = set(cls.__dataclass_fields__)
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown model fields: {sorted(unknown)}")
        return cls(**doc)


@functools.lru_cache(maxsize=32)
def _blob_covariance_table(model: CovarianceModel):
    """Cubic spline of the blob covariance on [0, 2a] (it vanishes beyond)."""
    r = np.linspace(0.0, 2 * model.radius, 2049)
    return interpolate.CubicSpline(r, model.blob_covariance_hankel(r))


def model_to_json(model: CovarianceModel, seed: Optional[int] = None) -> str:
    doc = model.to_dict()
    if seed is not None:
        doc["seed"] = int(seed)
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> tuple[CovarianceModel, Optional[int]]:
    doc = json.loads(text)
    seed = doc.get("seed")
    return CovarianceModel.from_dict(doc), seed


def gaussian_bump(d: int = 3, variance: float = 1.0, length: float = 1.0) -> CovarianceModel:
    return CovarianceModel("isotropic-gaussian-bump", d, variance=variance, length=length)


def power_law(d: int, beta: float, variance: float = 1.0, length: float = 1.0) -> CovarianceModel:
    return CovarianceModel("isotropic-power-law", d, variance=variance, length=length, beta=beta)


def product_power(alphas: Sequence[float], variance: float = 1.0) -> CovarianceModel:
    return CovarianceModel("product-power", len(alphas), variance=variance, alphas=tuple(alphas))


def poisson_blob(
    d: int = 3, intensity: float = 1.0, amplitude: float = 1.0, radius: float = 1.0, power: int = 4
) -> CovarianceModel:
    return CovarianceModel(
        "poisson-blob", d, intensity=intensity, amplitude=amplitude, radius=radius, power=power
    )


def covariance_eval(model: CovarianceModel, x) -> float:
    return model.covariance(x)


def spectrum_eval(model: CovarianceModel, xi) -> float:
    return model.spectrum(xi)


# ===================================================================== Hermite


def hermite_e(n: int, x):
    """Probabilists' Hermite polynomial He_n."""
    c = np.zeros(n + 1)
    c[n] = 1.0
    return np.polynomial.hermite_e.hermeval(x, c)


@dataclass(frozen=True)
class HermiteFunctional:
    """Phi(g) = sum_n V_n/n! He_n(g), truncated at order K."""

    phi: Callable = field(repr=False)
    K: int
    coeffs: tuple
    second_moment: float
    name: Optional[str] = None

    @property
    def V1(self) -> float:
        return self.coeffs[1]

    def weights(self) -> np.ndarray:
        """V_n^2 / n! for n = 0..K."""
        return np.array([v * v / math.factorial(n) for n, v in enumerate(self.coeffs)])

    def parseval(self, order: Optional[int] = None) -> float:
        w = self.weights()
        return float(w[: (self.K if order is None else order) + 1].sum())

    @property
    def truncation_tail(self) -> float:
        return max(self.second_moment - self.parseval(), 0.0)

    def __call__(self, g):
        return self.phi(g)


NAMED_FUNCTIONALS: dict[str, Callable] = {
    "identity": lambda g: g,
    "cube": lambda g: g**3,
    "hermite2": lambda g: g**2 - 1.0,
    "sinh": np.sinh,
    "tanh": np.tanh,
}


def hermite_coefficients(
    phi: Callable | str, K: int = 12, n_nodes: int = 160, tol: float = 1e-8
) -> HermiteFunctional:
    name = None
    if isinstance(phi, str):
        name = phi
        try:
            phi = NAMED_FUNCTIONALS[phi]
        except KeyError:
            raise ValueError(f"unknown named functional {name!r}") from None
    x, w = gauss_hermite_e(n_nodes)
    fx = np.asarray(phi(x), dtype=float)
    second = float(np.dot(w, fx * fx))
    coeffs = tuple(float(np.dot(w, fx * hermite_e(n, x))) for n in range(K + 1))
    scale = math.sqrt(max(second, 1e-300))
    if abs(coeffs[0]) > tol * max(scale, 1.0):
        raise ValueError(f"functional has nonzero mean V_0 = {coeffs[0]:.3g}; it must be centred")
    if K < 1 or abs(coeffs[1]) <= tol * max(scale, 1.0):
        raise ValueError("Hermite rank is not 1: V_1 vanishes (rank-1 functional required)")
    # quadrature noise below tol is an exact zero (identity, odd/even parity)
    coeffs = (0.0,) + tuple(0.0 if abs(c) <= tol * max(scale, 1.0) else c for c in coeffs[1:])
    return HermiteFunctional(phi=phi, K=K, coeffs=coeffs, second_moment=second, name=name)


def pushforward_covariance(h: HermiteFunctional, Rg: CovarianceModel, x):
    if abs(Rg.r0 - 1.0) > 1e-12:
        raise ValueError("pushforward needs a unit-variance base covariance")
    rho = np.asarray(Rg.covariance(x), dtype=float)
    return np.polynomial.polynomial.polyval(rho, h.weights())


def bivariate_expectation(h: HermiteFunctional, var: float, cov: float, n_nodes: int = 60) -> float:
    """E[Phi(X) Phi(Y)] for a centred Gaussian pair with the given moments."""
    x, w = gauss_hermite_e(n_nodes)
    s = math.sqrt(var)
    rho = cov / var
    g1 = x[:, None]
    g2 = rho * x[:, None] + math.sqrt(max(1.0 - rho * rho, 0.0)) * x[None, :]
    vals = h(s * g1) * h(s * g2)
    return float(np.einsum("i,j,ij->", w, w, vals))


# ====================================================================== fields


class FieldRealization:
    """A frozen potential V on R^d, evaluated pointwise."""

    d: int
    seed: Optional[int] = None

    def evaluate(self, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        return self.evaluate(x)

    def _as_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[-1] != self.d:
            raise ValueError(f"point dimension {x.shape[-1]} does not match field dimension {self.d}")
        return np.ascontiguousarray(x.reshape(-1, self.d))


@dataclass(frozen=True, eq=False)
class ConstantField(FieldRealization):
    value: float
    d: int = 3
    seed: Optional[int] = None

    def evaluate(self, x):
        return np.full(self._as_points(x).shape[0], float(self.value))


@dataclass(frozen=True, eq=False)
class FunctionField(FieldRealization):
    fn: Callable
    d: int = 3
    seed: Optional[int] = None

    def evaluate(self, x):
        return np.asarray(self.fn(self._as_points(x)), dtype=float)


@dataclass(frozen=True, eq=False)
class GridField(FieldRealization):
    """Periodic grid of Gaussian values with multilinear interpolation."""

    values: np.ndarray = field(repr=False)
    L: float
    h: float
    d: int
    seed: Optional[int] = None
    model: Optional[CovarianceModel] = None
    functional: Optional[HermiteFunctional] = None
    circulant: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def evaluate(self, x):
        pts = self._as_points(x)
        g = K.multilinear_periodic(self.values.ravel(), self.n, self.d, self.h, pts)
        return g if self.functional is None else np.asarray(self.functional(g), dtype=float)

    def node_values(self, idx: np.ndarray) -> np.ndarray:
        g = self.values[tuple(np.asarray(idx).T)]
        return g if self.functional is None else np.asarray(self.functional(g), dtype=float)

    def periodized_covariance(self, lag_idx) -> float:
        """Exact circulant covariance of the stored Gaussian values at a lattice lag."""
        c = self.circulant
        return float(c[tuple(np.asarray(lag_idx, dtype=int) % self.n)])

    def target_covariance(self, lag_idx) -> float:
        c = self.periodized_covariance(lag_idx)
        if self.functional is None:
            return c
        return bivariate_expectation(self.functional, float(self.circulant.flat[0]), c)


def _min_image_lags(n: int, h: float, d: int) -> np.ndarray:
    k = np.arange(n)
    k = np.where(k <= n // 2, k, k - n) * h
    grids = np.meshgrid(*([k] * d), indexing="ij")
    return np.stack(grids, axis=-1)


def synthesize_grid_field(
    model: CovarianceModel,
    L: float,
    h: float,
    seed: int,
    functional: Optional[HermiteFunctional] = None,
    periodization_tol: float = 1e-2,
    embed_tol: float = 1e-8,
) -> GridField:
    """Circulant-embedding sample of the periodized covariance on a torus."""
    ratio = L / h
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 * ratio or n % 2:
        raise ValueError(f"L/h must be an even integer, got {ratio}")
    d = model.d
    edge = np.zeros(d)
    edge[0] = L / 2
    tail = abs(float(model.covariance(edge))) / model.r0
    if tail > periodization_tol:
        raise ValueError(
            f"covariance at distance L/2 is {tail:.3g} of R(0), above {periodization_tol}; enlarge L"
        )
    c = model.covariance(_min_image_lags(n, h, d))
    lam = np.fft.rfftn(c).real
    lmax = lam.max()
    if lam.min() < -embed_tol * lmax:
        raise ValueError(
            f"circulant embedding failed: discrete spectrum has entries down to {lam.min():.3g}; enlarge L"
        )
    lam = np.clip(lam, 0.0, None)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n,) * d)
    axes = tuple(range(d))
    vals = np.fft.irfftn(np.sqrt(lam) * np.fft.rfftn(z), s=z.shape, axes=axes)
    vals.setflags(write=False)
    circ = np.fft.irfftn(lam, s=z.shape, axes=axes)
    return GridField(
        values=vals, L=float(L), h=float(h), d=d, seed=seed, model=model, functional=functional, circulant=circ
    )


def save_grid_field(real: GridField, stem) -> tuple[Path, Path]:
    """Write <stem>.bin (little-endian float64, C order) and <stem>.json."""
    stem = Path(stem)
    binp = stem.with_suffix(".bin")
    jsp = stem.with_suffix(".json")
    np.ascontiguousarray(real.values, dtype="<f8").tofile(binp)
    side = {
        "format": "fkscenery-grid",
        "version": 1,
        "L": real.L,
        "h": real.h,
        "d": real.d,
        "n": real.n,
        "seed": real.seed,
        "dtype": "<f8",
        "order": "C",
        "model": None if real.model is None else real.model.to_dict(),
    }
    jsp.write_text(json.dumps(side, indent=2, sort_keys=True))
    return binp, jsp


def load_grid_field(stem, functional: Optional[HermiteFunctional] = None) -> GridField:
    stem = Path(stem)
    side = json.loads(stem.with_suffix(".json").read_text())
    n, d = int(side["n"]), int(side["d"])
    vals = np.fromfile(stem.with_suffix(".bin"), dtype="<f8").reshape((n,) * d)
    vals.setflags(write=False)
    model = None if side.get("model") is None else CovarianceModel.from_dict(side["model"])
    circ = None
    if model is not None:
        circ = np.fft.irfftn(
            np.clip(np.fft.rfftn(model.covariance(_min_image_lags(n, side["h"], d))).real, 0, None),
            s=(n,) * d,
            axes=tuple(range(d)),
        )
    return GridField(
        values=vals, L=side["L"], h=side["h"], d=d, seed=side["seed"], model=model, functional=functional, circulant=circ
    )


@dataclass(frozen=True, eq=False)
class BlobField(FieldRealization):
    """Centred Poisson shot noise sum_j psi(x - x_j) - centering on a torus."""

    points: np.ndarray = field(repr=False)
    L: float
    model: CovarianceModel
    seed: Optional[int] = None
    _sorted: np.ndarray = field(default=None, repr=False)
    _start: np.ndarray = field(default=None, repr=False)
    _nc: int = 0
    _offsets: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        d = self.model.d
        nc = int(math.floor(self.L / self.model.radius))
        if nc < 3:
            nc = 1
        spts, start = K.blob_cells(np.ascontiguousarray(self.points, dtype=float), float(self.L), nc)
        offs = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)
        object.__setattr__(self, "_sorted", spts)
        object.__setattr__(self, "_start", start)
        object.__setattr__(self, "_nc", nc)
        object.__setattr__(self, "_offsets", offs)

    @property
    def d(self) -> int:
        return self.model.d

    @property
    def centering(self) -> float:
        return self.model.blob_centering

    def evaluate(self, x):
        pts = self._as_points(x)
        m = self.model
        return K.blob_eval(
            pts, self._sorted, self._start, float(self.L), self._nc, self._offsets,
            float(m.amplitude), float(m.radius), int(m.power), float(self.centering),
        )

    def target_covariance(self, lag) -> float:
        return float(self.model.covariance(np.asarray(lag, dtype=float)))


def synthesize_blob_field(model: CovarianceModel, L: float, seed: int) -> BlobField:
    if model.kind != "poisson-blob":
        raise ValueError("blob synthesis needs a poisson-blob model")
    if not L > 2 * model.radius:
        raise ValueError("torus period must exceed the bump diameter")
    rng = np.random.default_rng(seed)
    npts = rng.poisson(model.intensity * L**model.d)
    pts = rng.uniform(0.0, L, size=(npts, model.d))
    return BlobField(points=pts, L=float(L), model=model, seed=seed)


@dataclass(frozen=True, eq=False)
class FourierField(FieldRealization):
    """Random Fourier features sqrt(2 R0 / M) sum_j cos(omega_j . x + phase_j).

    The covariance equals the target exactly for any M (frequencies drawn from
    the normalized spectrum); the marginals are only approximately Gaussian.
    """

    omega: np.ndarray = field(repr=False)
    phase: np.ndarray = field(repr=False)
    model: CovarianceModel
    seed: Optional[int] = None

    @property
    def d(self) -> int:
        return self.model.d

    def evaluate(self, x):
        pts = self._as_points(x)
        scale = math.sqrt(2.0 * self.model.r0 / self.omega.shape[0])
        return K.fourier_eval(pts, self.omega, self.phase, scale)

    def target_covariance(self, lag) -> float:
        return float(self.model.covariance(np.asarray(lag, dtype=float)))


def sample_spectral_frequencies(model: CovarianceModel, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw m frequencies with density H(xi) / ((2 pi)^d R(0))."""
    d = model.d
    if model.kind == "isotropic-gaussian-bump":
        return rng.standard_normal((m, d)) / model.length
    if model.kind == "isotropic-power-law":
        # (1 + r^2)^{-beta/2} = E_s exp(-s r^2), s ~ Gamma(beta/2, 1)
        s = rng.gamma(model.beta / 2, 1.0, size=(m, 1))
        return rng.standard_normal((m, d)) * np.sqrt(2.0 * s) / model.length
    if model.kind == "product-power":
        s = np.column_stack([rng.gamma(a / 2, 1.0, size=m) for a in model.alphas])
        return rng.standard_normal((m, d)) * np.sqrt(2.0 * s)
    raise ValueError(f"no spectral sampler for {model.kind}")


def synthesize_fourier_field(model: CovarianceModel, n_features: int, seed: int) -> FourierField:
    rng = np.random.default_rng(seed)
    omega = np.ascontiguousarray(sample_spectral_frequencies(model, n_features, rng))
    phase = rng.uniform(0.0, 2 * math.pi, size=n_features)
    return FourierField(omega=omega, phase=phase, model=model, seed=seed)


def field_value(real: FieldRealization, x) -> np.ndarray:
    out = real.evaluate(x)
    return out[0] if np.ndim(x) == 1 else out


# ====================================================== covariance validation


@dataclass
class LagCheck:
    lag: tuple
    empirical: float
    stderr: float
    target: float
    z: float
    flagged: bool


@dataclass
class CovarianceReport:
    checks: list
    n_probe: int

    @property
    def ok(self) -> bool:
        return not any(c.flagged for c in self.checks)


def empirical_covariance_check(
    real: FieldRealization, lags, n_probe: int, seed: int, blocks_per_dim: int = 4
) -> CovarianceReport:
    """Per-lag empirical E[V(x) V(x+lag)] against the field's exact target.

    Standard errors come from spatial blocking: probes are binned into
    blocks_per_dim^d cells of the torus and the block means are treated as
    independent, which accounts for the correlation within one realization.
    """
    if n_probe < 1000:
        raise ValueError("n_probe must be at least 1000")
    d = real.d
    rng = np.random.default_rng(derive_seed(seed, "covariance-probe"))
    grid = isinstance(real, GridField)
    if grid:
        idx = rng.integers(0, real.n, size=(n_probe, d))
        base = idx * real.h
        L = real.L
    elif hasattr(real, "L"):
        L = real.L
        base = rng.uniform(0.0, L, size=(n_probe, d))
    else:
        L = 64.0
        base = rng.uniform(0.0, L, size=(n_probe, d))
    block = np.floor(base / L * blocks_per_dim).astype(int) % blocks_per_dim
    bid = np.ravel_multi_index(block.T, (blocks_per_dim,) * d)
    nblocks = blocks_per_dim**d
    checks = []
    v0 = real.node_values(idx) if grid else real.evaluate(base)
    for lag in lags:
        lag = np.asarray(lag, dtype=float)
        if grid:
            lag_idx = np.rint(lag / real.h).astype(int)
            v1 = real.node_values((idx + lag_idx) % real.n)
            target = real.target_covariance(lag_idx)
            lag_key = tuple(float(v) for v in lag_idx * real.h)
        else:
            v1 = real.evaluate(base + lag)
            target = real.target_covariance(lag)
            lag_key = tuple(float(v) for v in lag)
        prod = v0 * v1
        sums = np.bincount(bid, prod, minlength=nblocks)
        cnt = np.bincount(bid, minlength=nblocks)
        keep = cnt > 0
        means = sums[keep] / cnt[keep]
        emp = float(prod.mean())
        se = float(means.std(ddof=1) / math.sqrt(keep.sum()))
        z = (emp - target) / se if se > 0 else 0.0
        checks.append(LagCheck(lag_key, emp, se, float(target), float(z), bool(abs(z) > 4)))
    return CovarianceReport(checks=checks, n_probe=n_probe)
