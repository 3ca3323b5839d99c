import math

import numpy as np
import pytest

from hfu.errors import AlphaUnavailable, BadParam, IrregularGrid, NonFinite, TooShort, VolVanished
from hfu.sim import (IncrementSeries, ProcessSpec, SamplePath, constant_vol, gbm_vol,
                     grid_size, increments, ingest_path, make_model, ou_vol,
                     piecewise_constant_vol, simulate_path)


def test_lengths_and_grid():
    path = simulate_path(constant_vol(), 7, seed=1)
    assert len(path.x_values) == len(path.sigma_values) == 8
    np.testing.assert_allclose(path.times, np.arange(8) / 7)
    assert len(increments(path).scaled_increments) == 7


def test_horizon_not_integer_multiple():
    spec = constant_vol(horizon=0.3)
    path = simulate_path(spec, 10, seed=0)
    assert len(path) == grid_size(10, 0.3) + 1 == 4


@pytest.mark.parametrize("factory", [constant_vol, gbm_vol, ou_vol])
def test_resimulation_is_bit_identical(factory):
    a = simulate_path(factory(), 200, seed=42)
    b = simulate_path(factory(), 200, seed=42)
    assert a.x_values.tobytes() == b.x_values.tobytes()
    assert a.sigma_values.tobytes() == b.sigma_values.tobytes()
    c = simulate_path(factory(), 200, seed=43)
    assert a.x_values.tobytes() != c.x_values.tobytes()


def test_paths_are_read_only():
    path = simulate_path(constant_vol(), 10, seed=0)
    with pytest.raises(ValueError):
        path.x_values[0] = 1.0


def test_unit_brownian_increments_have_quarter_variance():
    # n = 4: increments are N(0, 1/4); check over many seeds
    inc = np.concatenate([np.diff(simulate_path(constant_vol(), 4, s).x_values)
                          for s in range(5000)])
    assert abs(inc.mean()) < 3 * 0.5 / math.sqrt(len(inc))
    assert inc.var() == pytest.approx(0.25, rel=0.03)


def test_sigma_two_scaled_variance():
    path = simulate_path(constant_vol(sigma=2.0), 100_000, seed=7)
    v = np.var(increments(path).scaled_increments, ddof=1)
    assert 3.9 <= v <= 4.1


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_scaling_of_sample_variance(c):
    path = simulate_path(constant_vol(sigma=c), 20_000, seed=3)
    x = increments(path).scaled_increments
    se = c ** 2 * math.sqrt(2.0 / len(x))
    assert abs(np.var(x, ddof=1) - c ** 2) < 3 * se


def test_gbm_martingale_mean():
    spec = gbm_vol()
    terminal = np.array([simulate_path(spec, 20, s).sigma_values[-1] for s in range(10_000)])
    assert 0.97 <= terminal.mean() <= 1.03


def test_gbm_sigma_driven_by_same_w():
    # with rho = 1 the Euler volatility is sigma_{k+1} = sigma_k (1 + dW_k)
    path = simulate_path(gbm_vol(rho=1.0), 50, seed=5)
    s = path.sigma_values
    np.testing.assert_allclose(s[1:], s[:-1] * (1 + path.dW), rtol=1e-12)


def test_increment_examples():
    path = SamplePath(n=4, times=np.arange(4) / 4, x_values=np.array([0.0, 1.0, 1.0, 2.0]))
    np.testing.assert_allclose(increments(path).scaled_increments, [2.0, 0.0, 2.0])
    flat = SamplePath(n=3, times=np.arange(4) / 3, x_values=np.full(4, 5.0))
    assert np.all(increments(flat).scaled_increments == 0)


def test_alpha_equals_increments_for_constant_sigma():
    path = simulate_path(constant_vol(), 1000, seed=11)
    s = increments(path, with_alpha=True)
    scale = np.max(np.abs(s.alpha))
    assert np.max(np.abs(s.scaled_increments - s.alpha)) <= 1e-12 * scale


def test_alpha_unavailable_on_ingested_path():
    path = ingest_path([(0, 0), (0.5, 1), (1.0, 0)], 2)
    assert path.sigma_values is None and path.seed is None
    with pytest.raises(AlphaUnavailable):
        increments(path, with_alpha=True)


def test_ingest_examples():
    path = ingest_path([(0, 0), (0.5, 1), (1.0, 0)], 2)
    assert len(path) == 3
    with pytest.raises(IrregularGrid):
        ingest_path([(0, 0), (0.5, 1), (0.9, 0)], 2)
    with pytest.raises(TooShort):
        ingest_path([], 2)
    with pytest.raises(IrregularGrid):
        ingest_path([(0, 0), (0.5, 1), (1.0, 0)], None)


def test_ingest_tolerates_tiny_jitter():
    rows = [(i / 390 * (1 + 1e-9), float(i)) for i in range(391)]
    assert len(ingest_path(rows, 390)) == 391


def test_vol_vanished():
    spec = piecewise_constant_vol([0.5], [1.0, 0.0])
    with pytest.raises(VolVanished):
        simulate_path(spec, 10, seed=0)


def test_non_finite():
    spec = ProcessSpec(drift=lambda t, x, s: 1e308 * (1 + abs(x)))
    with pytest.raises(NonFinite):
        with np.errstate(over="ignore"):
            simulate_path(spec, 10, seed=0)


def test_preconditions():
    with pytest.raises(ValueError):
        simulate_path(constant_vol(), 1, seed=0)
    with pytest.raises(ValueError):
        simulate_path(constant_vol(horizon=0.0), 10, seed=0)
    with pytest.raises(BadParam):
        make_model("heston")
    with pytest.raises(BadParam):
        make_model("constant", volatility=1)
    with pytest.raises(BadParam):
        gbm_vol(rho=2.0)


def test_piecewise_levels_on_grid():
    path = simulate_path(piecewise_constant_vol([0.5], [1.0, 2.0]), 10, seed=0)
    np.testing.assert_array_equal(path.sigma_values, [1.0] * 5 + [2.0] * 6)


def test_drift_enters_euler_step():
    spec = constant_vol(drift=3.0)
    base = simulate_path(constant_vol(), 50, seed=9)
    drifted = simulate_path(spec, 50, seed=9)
    np.testing.assert_allclose(drifted.x_values - base.x_values, 3.0 * base.times, atol=1e-12)


def test_substeps_share_coarse_noise():
    a = simulate_path(constant_vol(), 100, seed=4, substeps=1)
    b = simulate_path(constant_vol(), 100, seed=4, substeps=4)
    # constant sigma and no drift: the refined Euler scheme is exact at grid points
    np.testing.assert_allclose(a.x_values, b.x_values, atol=1e-12)


def _rms_gap(k1, k2, n, seeds):
    spec = ou_vol(rho=0.5)
    out = []
    for s in seeds:
        a = simulate_path(spec, n, s, substeps=k1).x_values
        b = simulate_path(spec, n, s, substeps=k2).x_values
        out.append(np.mean((a - b) ** 2))
    return math.sqrt(np.mean(out))


def test_grid_refinement_error_shrinks():
    # Euler steps 1/n vs 1/(2n) driven by one Brownian path: the gap at
    # shared observation times is O(n^{-1/2})
    ns = [100, 400, 1600]
    gaps = [_rms_gap(1, 2, n, range(64)) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(gaps), 1)[0]
    assert gaps[0] > gaps[1] > gaps[2]
    assert slope < -0.3


def test_alpha_approximation_rate():
    spec = gbm_vol(vol_of_vol=1.0, rho=0.5)
    ns = [250, 1000, 4000]
    errs = []
    for n in ns:
        vals = []
        for s in range(4):
            path = simulate_path(spec, n, s, substeps=8)
            inc = increments(path, with_alpha=True)
            vals.append(np.mean((inc.scaled_increments - inc.alpha) ** 2))
        errs.append(np.mean(vals))
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert slope < -0.8


def test_from_increments_wrapper():
    s = IncrementSeries.from_increments([1.0, 2.0], 2)
    assert len(s) == 2 and s.alpha is None
    np.testing.assert_allclose(s.raw_increments, np.array([1.0, 2.0]) / math.sqrt(2))
