import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fkscenery.corrector import scenery_variance_exact
from fkscenery.field_models import ConstantField, FunctionField, gaussian_bump
from fkscenery.path_engine import (
    BrownianPath,
    ConstantKernel,
    IndicatorKernel,
    PowerKernel,
    SceneryFunctional,
    SmoothPowerKernel,
    pair_kernel_double_integral,
    sample_path,
    scenery_integral,
    scenery_variance_mc,
    small_separation_annealed,
    small_separation_mass,
)


def _smooth(y):
    return np.sin(y[:, 0]) + np.cos(0.5 * y[:, 1]) * y[:, 2] / (1 + y[:, 2] ** 2)


SMOOTH = FunctionField(_smooth, d=3)


# --------------------------------------------------------------- sampling


def test_zero_horizon_is_single_origin_point():
    p = sample_path(3, 0.0, 0.1, seed=1)
    assert p.positions.shape == (1, 3)
    assert np.all(p.positions == 0)


def test_grid_ends_at_horizon_and_starts_at_origin():
    p = sample_path(2, 1.0, 0.3, seed=2)
    assert p.n_steps == 4
    assert p.times[-1] == pytest.approx(1.0)
    assert np.all(p.positions[0] == 0)


def test_step_budget_and_bad_arguments():
    with pytest.raises(ValueError, match="step budget"):
        sample_path(3, 100.0, 1e-3, seed=0, step_budget=1000)
    with pytest.raises(ValueError):
        sample_path(3, -1.0, 0.1, seed=0)
    with pytest.raises(ValueError):
        sample_path(3, 1.0, 0.0, seed=0)


def test_endpoint_variance_and_cross_covariance():
    T, n = 2.0, 10_000
    ends = np.array([sample_path(3, T, 0.5, seed=s).positions[-1] for s in range(n)])
    # Var of the sample variance of N(0, T) is 2 T^2 / (n - 1)
    se_var = T * math.sqrt(2.0 / (n - 1))
    var = ends.var(axis=0, ddof=1)
    assert np.all(np.abs(var - T) < 3 * se_var)
    se_cov = T / math.sqrt(n)
    c = np.cov(ends.T)
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        assert abs(c[i, j]) < 3 * se_cov


def test_increments_have_step_variance():
    p = sample_path(3, 400.0, 0.25, seed=3)
    inc = np.diff(p.positions, axis=0)
    n = inc.shape[0]
    assert abs(inc.mean()) < 4 * math.sqrt(0.25 / inc.size)
    assert abs(inc.var() - 0.25) < 4 * 0.25 * math.sqrt(2.0 / inc.size)
    assert n == 1600


def test_reproducible_paths_and_integrals():
    a, b = sample_path(3, 25.0, 0.05, seed=9), sample_path(3, 25.0, 0.05, seed=9)
    assert np.array_equal(a.positions, b.positions)
    fn = SceneryFunctional(0.2)
    assert scenery_integral(a, SMOOTH, fn) == scenery_integral(b, SMOOTH, fn)
    assert not np.array_equal(a.positions, sample_path(3, 25.0, 0.05, seed=10).positions)


def test_csv_dump(tmp_path):
    p = sample_path(2, 1.0, 0.25, seed=4)
    out = tmp_path / "path.csv"
    p.to_csv(out)
    lines = out.read_text().splitlines()
    assert lines[0] == "step,time,x_1,x_2"
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 2:], p.positions)
    assert np.allclose(data[:, 1], p.times)


# ------------------------------------------------------- scenery integral


def test_functional_rejects_bad_scales():
    with pytest.raises(ValueError):
        SceneryFunctional(0.0)
    with pytest.raises(ValueError):
        SceneryFunctional(1.5)
    with pytest.raises(ValueError):
        SceneryFunctional(0.5, gamma=0.0)


def test_zero_and_unit_field():
    eps, t = 0.2, 1.5
    fn = SceneryFunctional(eps, 1.0, t)
    p = sample_path(3, fn.horizon, 0.01, seed=5)
    assert scenery_integral(p, ConstantField(0.0), fn) == 0.0
    assert scenery_integral(p, ConstantField(1.0), fn) == pytest.approx(t / eps, rel=1e-12)


def test_horizon_mismatch_rejected():
    fn = SceneryFunctional(0.5)
    with pytest.raises(ValueError, match="horizon"):
        scenery_integral(sample_path(3, 1.0, 0.1, seed=0), SMOOTH, fn)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**31))
def test_linear_in_field(a, b, seed):
    fn = SceneryFunctional(0.5, 0.7)
    p = sample_path(3, fn.horizon, 0.05, seed=seed)
    v2 = FunctionField(lambda y: y[:, 0] * np.exp(-(y[:, 1] ** 2)), d=3)
    combo = FunctionField(lambda y: a * _smooth(y) + b * v2.fn(y), d=3)
    lhs = scenery_integral(p, combo, fn)
    rhs = a * scenery_integral(p, SMOOTH, fn) + b * scenery_integral(p, v2, fn)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_refinement_order():
    # reference on the finest grid; coarser sums use subsampled positions of the same path
    fine, T = 2**13, 1.0
    errs = {k: [] for k in (16, 32, 64, 128, 256)}
    fn = SceneryFunctional(1.0, 1.0, T)
    for s in range(40):
        p = sample_path(3, T, T / fine, seed=100 + s)
        ref = scenery_integral(p, SMOOTH, fn)
        for n in errs:
            sub = p.positions[:: fine // n]
            q = BrownianPath(3, T / n, T, sub)
            errs[n].append(abs(scenery_integral(q, SMOOTH, fn) - ref))
    ns = np.array(sorted(errs))
    e = np.array([np.mean(errs[n]) for n in ns])
    order = -np.polyfit(np.log(ns), np.log(e), 1)[0]
    assert order >= 0.8


def test_mc_scenery_variance_matches_exact():
    model = gaussian_bump(3)
    eps = 0.5
    mc, se = scenery_variance_mc(model, 1.0, eps, n_samples=1500, dt=0.02, seed=13)
    exact = scenery_variance_exact(model, 3, 1.0, eps)
    assert abs(mc - exact) < 3 * se


# ---------------------------------------------------------- pair integrals


def test_constant_kernel_gives_t_squared():
    t = 1.7
    p = sample_path(3, t, t / 200, seed=6)
    q = sample_path(3, t, t / 200, seed=7)
    k = ConstantKernel()
    assert pair_kernel_double_integral(p, p, k) == pytest.approx(t * t, rel=1e-12)
    assert pair_kernel_double_integral(p, q, k) == pytest.approx(t * t, rel=1e-12)
    assert pair_kernel_double_integral(p, q, k, rule="trapezoid") == pytest.approx(t * t, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(s1=st.integers(0, 2**31), s2=st.integers(0, 2**31), a=st.floats(0.05, 0.6))
def test_pair_integral_symmetric(s1, s2, a):
    p = sample_path(3, 1.0, 1 / 64, seed=s1)
    q = sample_path(3, 1.0, 1 / 64, seed=s2)
    for k in (PowerKernel((a, a, a)), SmoothPowerKernel((a, 0.3, a), 0.1)):
        assert pair_kernel_double_integral(p, q, k) == pytest.approx(
            pair_kernel_double_integral(q, p, k), rel=1e-12
        )


def test_nonintegrable_kernel_rejected():
    p = sample_path(3, 1.0, 0.01, seed=0)
    with pytest.raises(ValueError, match="not integrable"):
        pair_kernel_double_integral(p, p, PowerKernel((0.7, 0.7, 0.7)))


def test_trapezoid_refuses_self_pair_with_singular_kernel():
    p = sample_path(3, 1.0, 0.01, seed=0)
    with pytest.raises(ValueError):
        pair_kernel_double_integral(p, p, PowerKernel((0.4, 0.4, 0.4)), rule="trapezoid")


def test_vectorized_kernel_matches_compiled_sum():
    from fkscenery.path_engine import CallableKernel

    p = sample_path(3, 1.0, 1 / 100, seed=21)
    sk = SmoothPowerKernel((0.3, 0.4, 0.5), 0.2)
    ck = CallableKernel(sk.__call__)
    assert pair_kernel_double_integral(p, p, sk) == pytest.approx(pair_kernel_double_integral(p, p, ck), rel=1e-10)


# ------------------------------------------------------- small separations


def test_small_separation_requires_d3():
    with pytest.raises(ValueError):
        small_separation_mass([sample_path(2, 1.0, 0.01, seed=0)], 0.1, 1.0, 1.0)


def test_small_separation_matches_annealed_oracle():
    paths = [sample_path(3, 1.0, 1 / 400, seed=s) for s in range(300)]
    mc, se = small_separation_mass(paths, 0.2, 1.0, 1.0)
    exact = small_separation_annealed(1.0, 0.2, 1.0, 1.0)
    assert abs(mc - exact) < 3 * se


def test_small_separation_decreases_and_monotone_in_M():
    paths = [sample_path(3, 1.0, 1 / 400, seed=s) for s in range(100)]
    vals = [small_separation_mass(paths, e, 1.0, 1.0)[0] for e in (0.4, 0.2, 0.1)]
    assert vals[0] > vals[1] > vals[2] > 0
    ms = [small_separation_mass(paths, 0.1, M, 1.0)[0] for M in (2.0, 1.0, 0.5, 0.25)]
    assert all(a >= b for a, b in zip(ms, ms[1:]))
    # annealed oracle: decreasing in eps with local slope near 2 - alpha
    ann = [small_separation_annealed(1.0, e, 1.0, 1.0) for e in (0.1, 0.05, 0.025)]
    slope = np.polyfit(np.log([0.1, 0.05, 0.025]), np.log(ann), 1)[0]
    assert abs(slope - 1.0) < 0.1


def test_indicator_kernel_radius():
    k = IndicatorKernel(1.0)
    assert k(np.array([[0.5, 0.5, 0.5], [1.0, 0.5, 0.0]])).tolist() == [1.0, 0.0]
