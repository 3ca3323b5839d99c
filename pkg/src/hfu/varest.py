"""Conditional variance estimation and the feasible standardized statistic."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from math import comb
from typing import Optional

import numpy as np

from . import _parallel
from .errors import FlooredVariance, NotEven, WindowTooShort
from .kernel import Kernel, Smoothness, make_g1, make_g2, warn_user_piecewise
from .sim import IncrementSeries
from .ustat import EvaluationWindow, _guard, u_statistic

VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class VarianceEstimate:
    v1: float
    v2: float
    v: float
    floored: bool
    t: float
    n: int
    warnings: tuple = field(default_factory=tuple)

    @property
    def raw(self) -> float:
        return self.v1 - self.v2


def v1n(H: Kernel, series: IncrementSeries, window: EvaluationWindow, K: Optional[Kernel] = None,
        **kw) -> float:
    """V1_t^n = d^2 U(G1~)_t^n, the U-statistic of order 2d-1 of the symmetrized G1."""
    g1 = make_g1(H, K)
    w = EvaluationWindow(window.t, window.n, g1.d)
    return H.d ** 2 * u_statistic(g1, series, w, **kw)


def v2n(H: Kernel, series: IncrementSeries, window: EvaluationWindow, K: Optional[Kernel] = None,
        *, allow_large: bool = False, workers: int | None = None) -> float:
    """Bipower-type estimator of V2_t.

    (d^2/n) C(n, 2d-2)^{-1} sum_{i in A_t^n(2d-2)} sum_{j=1}^{[nt]-1}
    G2~(x_j, x_{j+1}; x_{i1}, ..., x_{i_{2d-2}}), with x the scaled increments
    and G2~ symmetrized over the y arguments. ``K`` gives the cross version
    G2(x; y) = H(x1, .) K(x2, .).
    """
    K = H if K is None else K
    d = H.d
    m = window.m
    if m < 2 * d - 1:
        raise WindowTooShort(f"[nt]={m} < 2d-1={2 * d - 1}")
    if m > len(series):
        raise WindowTooShort(f"[nt]={m} exceeds the {len(series)} available increments")
    x = np.asarray(series.scaled_increments[:m], dtype=float)
    if d == 1:
        total = float(np.sum(H.func(x[:-1]) * K.func(x[1:])))
    elif d == 2:
        total = _v2_pairs(H, K, x, workers)
    else:
        total = _v2_enumerate(H, K, x, allow_large)
    return d * d * total / (window.n * comb(window.n, 2 * d - 2))


def _v2_pairs(H, K, x, workers) -> float:
    """For order 2: sum over y-pairs a < b of G2~ at (x_j, x_{j+1}) is
    1/2[(sum_a H(x_j, x_a))(sum_b K(x_{j+1}, x_b)) - sum_a H(x_j, x_a) K(x_{j+1}, x_a)]."""
    m = len(x)
    same = K is H

    def block(lo, hi):
        top = min(hi + 1, m)
        hb = np.asarray(H.func(x[lo:top, None], x[None, :]), dtype=float)
        kb = hb if same else np.asarray(K.func(x[lo:top, None], x[None, :]), dtype=float)
        a, b = hb[:-1], kb[1:]
        return 0.5 * np.sum(a.sum(axis=1) * b.sum(axis=1) - np.sum(a * b, axis=1))

    return _parallel.exact_sum(_parallel.map_blocks(block, _parallel.blocks(0, m - 1), workers))


def _v2_enumerate(H, K, x, allow_large) -> float:
    m = len(x)
    _guard(m, allow_large)
    g2 = make_g2(H, K)
    ny = 2 * H.d - 2
    idx = np.array(list(itertools.combinations(range(m), ny)), dtype=np.int64)
    ys = [x[idx[:, k]] for k in range(ny)]
    parts = [np.sum(g2(x[j], x[j + 1], *ys)) for j in range(m - 1)]
    return _parallel.exact_sum(parts)


def estimate_variance(H: Kernel, series: IncrementSeries, window: EvaluationWindow,
                      eps: float = VARIANCE_FLOOR, **kw) -> VarianceEstimate:
    """V_t^n = V1_t^n - V2_t^n, floored at eps * |V1_t^n| (and kept strictly positive)."""
    a = v1n(H, series, window, **kw)
    b = v2n(H, series, window, **kw)
    raw = a - b
    floor = max(eps * abs(a), np.finfo(float).tiny)
    notes = ()
    if raw < floor:
        msg = f"variance estimate {raw:.6g} floored to {floor:.6g}"
        warnings.warn(msg, FlooredVariance, stacklevel=2)
        notes = (msg,)
        return VarianceEstimate(a, b, floor, True, window.t, window.n, notes)
    return VarianceEstimate(a, b, raw, False, window.t, window.n, notes)


@dataclass(frozen=True)
class Standardized:
    statistic: float
    u: float
    limit: float
    variance: VarianceEstimate

    @property
    def floored(self) -> bool:
        return self.variance.floored


def check_clt_kernel(H: Kernel) -> None:
    if not H.even_each_coordinate:
        raise NotEven(f"kernel {H.name} is not even in each coordinate; "
                      "the central limit theorem does not apply")
    if H.smoothness is Smoothness.C0:
        raise NotEven(f"kernel {H.name} lacks the required smoothness")
    warn_user_piecewise(H)


def standardized_statistic(H: Kernel, series: IncrementSeries, window: EvaluationWindow,
                           limit: float, *, u: Optional[float] = None,
                           variance: Optional[VarianceEstimate] = None, **kw) -> Standardized:
    """sqrt(n) (U(H)_t^n - U(H)_t) / sqrt(V_t^n).

    ``limit`` is the true or hypothesised U(H)_t (see :func:`hfu.limit.limit_u`);
    it is never guessed from the data.
    """
    check_clt_kernel(H)
    if u is None:
        u = u_statistic(H, series, window, **kw)
    if variance is None:
        variance = estimate_variance(H, series, window, **kw)
    stat = math.sqrt(window.n) * (u - limit) / math.sqrt(variance.v)
    return Standardized(stat, u, float(limit), variance)
