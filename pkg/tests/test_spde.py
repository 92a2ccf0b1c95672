import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fkscenery.feynman_kac import constant_initial, gaussian_initial
from fkscenery.field_models import hermite_coefficients, product_power
from fkscenery.path_engine import (
    ConstantKernel,
    MollifiedPowerKernel,
    PowerKernel,
    SmoothPowerKernel,
    pair_integral_arrays,
    sample_path,
    sample_paths,
)
from fkscenery.spde import (
    SpdeModel,
    annealed_factor,
    annealed_factor_quadrature,
    annealed_mollified_oracle,
    annealed_remainder_oracle,
    annealed_smoothed_oracle,
    annealed_Y2_oracle,
    bundle_quadratic_forms,
    conditional_variance_Y,
    hermite_remainder_bound,
    hermite_remainder_variance,
    min_eigenvalue,
    mollified_kernel_at_zero,
    mollified_variance,
    moment_sweep,
    q_matrix,
    u_eps_moment_gaussian,
    u_spde_moment,
)

A3 = (0.4, 0.4, 0.4)
MODEL = SpdeModel(A3)
ONE = constant_initial(1.0)
GAUSS = gaussian_initial()
alpha_vec = st.lists(st.floats(0.0, 0.6), min_size=1, max_size=3).filter(lambda a: sum(a) < 1.9)


# ----------------------------------------------------------------- model


def test_model_validation():
    with pytest.raises(ValueError):
        SpdeModel((0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        SpdeModel((0.4, 1.0, 0.1))
    with pytest.raises(ValueError):
        SpdeModel((0.9, 0.9, 0.9))
    with pytest.raises(ValueError):
        SpdeModel(A3, coupling=0.0)
    m = SpdeModel(A3, coupling=2.0, c_d=0.5)
    assert m.d == 3 and m.alpha == pytest.approx(1.2)
    assert m.noise_strength == pytest.approx(2.0)
    assert m.base_covariance.kind == "product-power"


# ------------------------------------------------------- annealed oracles


def test_oracle_value_and_gaussian_factor():
    assert annealed_Y2_oracle(1.0, A3, 3) == pytest.approx(11.329121371237203, rel=1e-13)
    assert annealed_factor(0.4) == pytest.approx(annealed_factor_quadrature(0.4), rel=1e-10)
    with pytest.raises(ValueError):
        annealed_Y2_oracle(1.0, A3, d=2)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.01, 0.95))
def test_gaussian_factor_two_routes(a):
    assert annealed_factor(a) == pytest.approx(annealed_factor_quadrature(a), rel=1e-8)


def test_oracle_alpha_to_zero():
    assert annealed_Y2_oracle(1.7, (0.0, 0.0, 0.0)) == pytest.approx(1.7**2, rel=1e-14)
    assert annealed_Y2_oracle(1.0, (1e-9,) * 3) == pytest.approx(1.0, rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(a=alpha_vec, t=st.floats(0.05, 5.0))
def test_oracle_t_scaling(a, t):
    al = sum(a)
    assert annealed_Y2_oracle(2 * t, a) / annealed_Y2_oracle(t, a) == pytest.approx(2 ** (2 - al / 2), rel=1e-12)


def test_time_part_by_quadrature():
    al = 1.2
    # int int |s - u|^{-al/2}: inner integral over v = s - u with the algebraic weight, twice by symmetry
    inner = lambda s: integrate.quad(lambda v: 1.0, 0, s, weight="alg", wvar=(-al / 2, 0))[0] if s > 0 else 0.0
    q = 2 * integrate.quad(inner, 0, 1, epsabs=1e-12)[0]
    assert annealed_Y2_oracle(1.0, A3) / annealed_factor(0.4) ** 3 == pytest.approx(q, rel=1e-6)


def test_smoothed_oracle_limits():
    lim = annealed_Y2_oracle(1.0, A3)
    vals = [annealed_smoothed_oracle(1.0, A3, e) for e in (0.2, 0.05, 0.01, 1e-3)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < lim
    # the gap closes like eps^{1 - max alpha_i}: one coordinate near zero is enough for the singular kernel
    gaps = 1 - np.array(vals) / lim
    slope = np.polyfit(np.log([0.2, 0.05, 0.01, 1e-3]), np.log(gaps), 1)[0]
    assert 0.3 < slope < 0.7
    # constant kernel: R_g = 1 gives eps^{-alpha} t^2
    assert annealed_smoothed_oracle(1.0, (0.0, 0.0, 0.0), 0.3) == pytest.approx(1.0, rel=1e-9)


def test_mollified_oracle_limits():
    lim = annealed_Y2_oracle(1.0, A3)
    vals = [annealed_mollified_oracle(1.0, A3, e) for e in (0.1, 1e-2, 1e-3, 1e-6, 1e-10)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(lim, rel=1e-3)
    # the 2% band is only reached near eta = 1e-5
    assert vals[2] / lim < 0.9 and vals[3] / lim > 0.98


# ------------------------------------------------------ per-path variances


def test_constant_stub_kernel_gives_t_squared():
    p = sample_path(3, 1.5, 1.5 / 200, seed=1)
    assert conditional_variance_Y(p, (0.0, 0.0, 0.0), 1.5) == pytest.approx(1.5**2, rel=1e-12)


def test_conditional_variance_errors():
    p = sample_path(3, 1.0, 1 / 100, seed=1)
    with pytest.raises(ValueError):
        conditional_variance_Y(p, (0.7, 0.7, 0.7), 1.0)
    with pytest.raises(ValueError):
        conditional_variance_Y(p, A3, 2.0)


def test_conditional_variance_increasing_in_t():
    p = sample_path(3, 1.0, 1 / 400, seed=2)
    vals = [
        pair_integral_arrays(p.positions[: n + 1], p.positions[: n + 1], p.dt, PowerKernel(A3), same=True)
        for n in (100, 200, 300, 400)
    ]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == conditional_variance_Y(p, A3, 1.0)


def test_annealed_mean_small_ensemble():
    vals = [conditional_variance_Y(sample_path(3, 1.0, 1 / 800, seed=s), A3, 1.0, richardson=True) for s in range(400)]
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - annealed_Y2_oracle(1.0, A3)) < 4 * se


def test_smoothed_kernel_increases_to_the_limit_per_path():
    for s in range(3):
        p = sample_path(3, 1.0, 1 / 400, seed=10 + s)
        lim = conditional_variance_Y(p, A3, 1.0)
        q = [pair_integral_arrays(p.positions, p.positions, p.dt, SmoothPowerKernel(A3, e), same=True)
             for e in (0.4, 0.2, 0.1, 0.05, 0.02)]
        assert all(a < b for a, b in zip(q, q[1:]))
        assert q[-1] < lim


@pytest.mark.parametrize("eps", [0.2, 0.1])
def test_smoothed_mean_matches_oracle(eps):
    k = SmoothPowerKernel(A3, eps)
    vals = []
    for s in range(400):
        p = sample_path(3, 1.0, 1 / 200, seed=1000 + s)
        vals.append(pair_integral_arrays(p.positions, p.positions, p.dt, k, same=True))
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - annealed_smoothed_oracle(1.0, A3, eps)) < 3 * se


def test_mollified_kernel():
    assert math.isfinite(mollified_kernel_at_zero(A3, 1e-3))
    assert mollified_kernel_at_zero(A3, 1e-3) > mollified_kernel_at_zero(A3, 1e-2)
    with pytest.raises(ValueError):
        mollified_variance(sample_path(3, 1.0, 0.01, seed=0), A3, 1.0, 0.0)


def test_mollified_kernel_dominated_by_power():
    # 1-D: |x|^a E|x + G|^{-a} depends only on x / sd(G); its sup is the constant C (eta independent)
    a = 0.4
    y = np.linspace(1e-3, 20, 4000)
    k1 = MollifiedPowerKernel((a,), 0.5)  # G variance 1
    C = float(np.max(y**a * k1(y[:, None])))
    assert 1.0 < C < 2.0
    for eta in (1e-4, 1e-2, 1.0):
        x = np.linspace(1e-4, 5, 500)[:, None]
        assert np.all(MollifiedPowerKernel((a,), eta)(x) <= C * np.abs(x[:, 0]) ** -a * (1 + 1e-9))
    for s in range(3):
        p = sample_path(3, 1.0, 1 / 400, seed=20 + s)
        assert mollified_variance(p, A3, 1.0, 1e-3) <= C**3 * conditional_variance_Y(p, A3, 1.0)


@pytest.mark.parametrize("eta", [0.1, 0.01])
def test_mollified_mean_matches_oracle(eta):
    vals = [mollified_variance(sample_path(3, 1.0, 1 / 400, seed=300 + s), A3, 1.0, eta) for s in range(200)]
    se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(np.mean(vals) - annealed_mollified_oracle(1.0, A3, eta)) < 3 * se


# ---------------------------------------------------------------- moments


def test_zero_order_moment_is_one():
    est = u_spde_moment(MODEL, GAUSS, 1.0, np.zeros(3), 0, 0, 10, 0.01, 0)
    assert est.mean == 1.0
    assert u_eps_moment_gaussian(MODEL, GAUSS, 1.0, np.zeros(3), 0.1, 0, 0, 10, 0.01, 0).mean == 1.0


def test_first_and_second_moment_ranges():
    m1 = u_spde_moment(MODEL, ONE, 1.0, np.zeros(3), 1, 0, 60, 1 / 100, 3)
    assert 0 < m1.mean.real < 1 and m1.mean.imag == 0
    m2 = u_spde_moment(MODEL, ONE, 1.0, np.zeros(3), 1, 1, 30, 1 / 100, 4)
    assert 0 < m2.mean.real <= 1


def test_moment_symmetry_exact_for_shared_seeds():
    a = u_spde_moment(MODEL, GAUSS, 1.0, np.zeros(3), 2, 1, 12, 1 / 50, 5)
    b = u_spde_moment(MODEL, GAUSS, 1.0, np.zeros(3), 1, 2, 12, 1 / 50, 5)
    assert a.mean == b.mean.conjugate()


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 2**31), m=st.integers(0, 2), n=st.integers(0, 2), c=st.floats(-1.5, 1.5))
def test_moment_modulus_bound(seed, m, n, c):
    f = constant_initial(c)
    est = u_eps_moment_gaussian(MODEL, f, 1.0, np.zeros(3), 0.2, m, n, 6, 1 / 40, seed)
    assert abs(est.mean) <= abs(c) ** (m + n) * (1 + 1e-12) + 1e-300


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 2**31), N=st.integers(2, 4))
def test_q_matrices_positive_semidefinite(seed, N):
    res = bundle_quadratic_forms(MODEL, ONE, 1.0, np.zeros(3), N, 0, 3, 1 / 100, seed, eps_list=(0.3, 0.05))
    for k, mins in res.min_eigs.items():
        assert np.all(mins >= -1e-9), k
    paths = sample_paths(3, 1.0, 1 / 100, N, np.random.default_rng(seed))
    Q = q_matrix(paths, 1 / 100, PowerKernel(A3))
    assert np.array_equal(Q, Q.T)
    assert min_eigenvalue(Q) >= -1e-9


def test_constant_stub_base_covariance():
    # R_g = 1 makes eps^{-alpha} R_g a constant kernel c: Q = c t^2 everywhere, moment e^{-V_1^2 c t^2 / 2}
    eps, t = 0.2, 0.8
    c = eps ** -MODEL.alpha
    paths = sample_paths(3, t, t / 40, 3, np.random.default_rng(0))
    Q = q_matrix(paths, t / 40, ConstantKernel(c))
    assert np.allclose(Q, c * t * t, rtol=1e-12)
    theta = np.array([1.0, 0.0, 0.0])
    assert math.exp(-0.5 * MODEL.noise_strength * theta @ Q @ theta) == pytest.approx(math.exp(-0.5 * c * t * t))


def test_sweep_rows_and_reuse():
    rows = moment_sweep(MODEL, ONE, 1.0, np.zeros(3), [0.4, 0.2], 1, 0, 20, 1 / 100, 7)
    assert [r["epsilon"] for r in rows] == [0.4, 0.2, 0.0]
    lim = u_spde_moment(MODEL, ONE, 1.0, np.zeros(3), 1, 0, 20, 1 / 100, 7)
    assert rows[-1]["re_mean"] == lim.mean.real
    direct = u_eps_moment_gaussian(MODEL, ONE, 1.0, np.zeros(3), 0.2, 1, 0, 20, 1 / 100, 7)
    assert rows[1]["re_mean"] == direct.mean.real
    # the smoothed kernel is smaller, so the eps-moment sits above the limit on every bundle
    assert rows[0]["diff_mean"] > rows[1]["diff_mean"] > 0


# ------------------------------------------------------ Hermite remainder


def test_identity_remainder_vanishes():
    Rg = product_power(A3)
    assert hermite_remainder_variance(hermite_coefficients("identity"), Rg, 0.2, 1.0, 5, 0) == (0.0, 0.0)


def test_remainder_needs_unit_product_power():
    with pytest.raises(ValueError):
        hermite_remainder_variance(hermite_coefficients("cube"), product_power(A3, variance=2.0), 0.2, 1.0, 5, 0)


def test_remainder_oracle_shape():
    h, Rg = hermite_coefficients("cube"), product_power(A3)
    vals = [annealed_remainder_oracle(h, Rg, e, 1.0) for e in (0.8, 0.4, 0.2, 0.1, 0.05, 0.01, 1e-3)]
    # pre-asymptotic rise up to eps ~ 0.2, then decay like eps^{0.8}
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] > vals[3] > vals[4] > vals[5] > vals[6] > 0
    slope = math.log(vals[5] / vals[6]) / math.log(10)
    assert abs(slope - 0.8) < 0.1
    assert annealed_remainder_oracle(hermite_coefficients("identity"), Rg, 0.1, 1.0) == 0.0


@pytest.mark.parametrize("eps", [0.4, 0.1])
def test_cube_remainder_matches_oracle(eps):
    h, Rg = hermite_coefficients("cube"), product_power(A3)
    v, se = hermite_remainder_variance(h, Rg, eps, 1.0, 150, 12, dt=1 / 400)
    assert abs(v - annealed_remainder_oracle(h, Rg, eps, 1.0)) < 3 * se


def test_cube_remainder_decreases_and_respects_bound():
    h, Rg = hermite_coefficients("cube"), product_power(A3)
    vals = [hermite_remainder_variance(h, Rg, e, 1.0, 60, 11, dt=1 / 200)[0] for e in (0.2, 0.1, 0.05)]
    assert vals[0] > vals[1] > vals[2] > 0
    v, _ = hermite_remainder_variance(h, Rg, 0.4, 1.0, 60, 11, dt=1 / 200)
    b, _ = hermite_remainder_bound(h, Rg, 0.4, 1.0, 60, 11, dt=1 / 200)
    assert v <= b
    assert h.weights()[2:].sum() == pytest.approx(6.0, rel=1e-9)
