"""Property-based checks of structural invariants."""
import math

import numpy as np
from conftest import naive_u, naive_wl
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hfu.apps import lp_statistics, wilcoxon_path
from hfu.kernel import builtin, make_g1
from hfu.limit import VolatilityPath, limit_u, rho
from hfu.sim import IncrementSeries, constant_vol, simulate_path
from hfu.ustat import EvaluationWindow, u_statistic, u_statistic_path
from hfu.varest import estimate_variance

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
moderate = st.floats(-5, 5, allow_nan=False, allow_infinity=False).filter(lambda v: abs(v) > 1e-3)
positive = st.floats(0.05, 10, allow_nan=False)
KERNELS = [builtin("gini_even"), builtin("lp_power", p=2), builtin("sum_of_squares"),
           builtin("product_power", r=1.5), builtin("abs_power", r=3)]
kernels = st.sampled_from(KERNELS)


def _series(x):
    return IncrementSeries.from_increments(x, len(x))


@settings(max_examples=60, deadline=None)
@given(kernels, finite, finite)
def test_kernel_symmetric(H, a, b):
    assert H(a, b) == H(b, a)


@settings(max_examples=60, deadline=None)
@given(kernels, finite, finite)
def test_kernel_even_each_coordinate(H, a, b):
    assert H(-a, b) == H(a, b) == H(a, -b)


@settings(max_examples=40, deadline=None)
@given(kernels, arrays(float, 3, elements=moderate), st.permutations([0, 1, 2]))
def test_g1_permutation_invariant(H, x, perm):
    g1 = make_g1(H)
    assert math.isclose(g1(*x), g1(*x[perm]), rel_tol=1e-12, abs_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(kernels, arrays(float, st.integers(2, 9), elements=moderate))
def test_u_statistic_matches_brute_force(H, x):
    n = len(x)
    got = u_statistic(H, _series(x), EvaluationWindow(1.0, n, 2))
    assert math.isclose(got, naive_u(H, x, n), rel_tol=1e-10, abs_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(kernels, arrays(float, st.integers(2, 40), elements=moderate), st.randoms())
def test_u_statistic_permutation_invariant(H, x, rnd):
    y = x.copy()
    rnd.shuffle(y)
    w = EvaluationWindow(1.0, len(x), 2)
    assert math.isclose(u_statistic(H, _series(x), w), u_statistic(H, _series(y), w),
                        rel_tol=1e-12, abs_tol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([("lp_power", {"p": 2}, 4.0), ("sum_of_squares", {}, 2.0),
                        ("gini_even", {}, 1.0), ("product_power", {"r": 1.5}, 3.0)]),
       arrays(float, st.integers(2, 30), elements=moderate), positive)
def test_u_statistic_homogeneity(case, x, c):
    name, params, degree = case
    H = builtin(name, **params)
    w = EvaluationWindow(1.0, len(x), 2)
    base = u_statistic(H, _series(x), w)
    assert math.isclose(u_statistic(H, _series(c * x), w), c ** degree * base,
                        rel_tol=1e-9, abs_tol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(float, st.integers(3, 40), elements=moderate))
def test_path_nondecreasing_for_nonnegative_kernel(x):
    p = u_statistic_path(builtin("sum_of_squares"), _series(x))
    assert np.all(np.diff(p.values) >= -1e-12 * np.abs(p.values).max())


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.integers(2, 40), elements=finite), st.data())
def test_wilcoxon_path_matches_naive(x, data):
    n = len(x)
    k = data.draw(st.integers(0, n))
    assert wilcoxon_path(x)[k] / n ** 2 == naive_wl(x, k, n)


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.integers(2, 60), elements=moderate),
       st.floats(1e-3, 1e3) | st.floats(-1e3, -1e-3))
def test_wilcoxon_scale_invariant(x, c):
    np.testing.assert_array_equal(wilcoxon_path(x), wilcoxon_path(c * x))


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.integers(2, 60), elements=finite))
def test_wilcoxon_path_bounds(x):
    wl = wilcoxon_path(x) / len(x) ** 2
    assert wl[0] == 0 and wl[-1] == 0
    assert np.all((wl >= 0) & (wl <= 0.25 + 1e-15))


@settings(max_examples=25, deadline=None)
@given(arrays(float, st.integers(4, 25), elements=moderate))
def test_variance_estimate_positive(x):
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = estimate_variance(builtin("gini_even"), _series(x), EvaluationWindow(1, len(x), 2))
    assert est.v > 0
    assert est.floored == (est.raw < est.v)


@settings(max_examples=25, deadline=None)
@given(arrays(float, st.integers(4, 25), elements=moderate), positive)
def test_lp_scale_invariance(x, c):
    a, b = lp_statistics(_series(x)), lp_statistics(_series(c * x))
    assert math.isclose(a.mn2, b.mn2, rel_tol=1e-9, abs_tol=1e-11)
    assert a.mn2 <= 1
    np.testing.assert_allclose(a.Vn, a.Vn.T, atol=1e-10 * np.abs(a.Vn).max())


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(KERNELS[1:]), positive, positive)
def test_rho_symmetric_in_sigmas(H, s1, s2):
    assert math.isclose(rho(H, (s1, s2)), rho(H, (s2, s1)), rel_tol=1e-12)


@settings(max_examples=20, deadline=None)
@given(positive, st.floats(0.05, 1.0))
def test_limit_u_constant_sigma_scaling(c, t):
    # sum_of_squares: limit is t^2 * 2 c^2
    vol = VolatilityPath.constant(c)
    assert math.isclose(limit_u(builtin("sum_of_squares"), vol, t), 2 * c * c * t * t,
                        rel_tol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 50))
def test_simulation_deterministic(seed, n):
    a = simulate_path(constant_vol(), n, seed)
    b = simulate_path(constant_vol(), n, seed)
    assert a.x_values.tobytes() == b.x_values.tobytes()
