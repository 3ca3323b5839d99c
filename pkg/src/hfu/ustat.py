"""U-statistics of scaled increments and the empirical diagnostic fields.

For a kernel H of order d the statistic at time t is

    U(H)_t^n = C(n, d)^{-1} sum_{1 <= i1 < ... < id <= [nt]} H(sqrt(n) D_{i1} X, ...),

normalised by C(n, d) even when [nt] < n.

Evaluation routes, cheapest first:

* additive kernels H = sum g(x_i): C(m-1, d-1) * sum g, O(n);
* orbit-reduced variance kernels G1~ built from order-2 kernels: row sums of
  the pairwise kernel matrix, O(n^2);
* order 2: strict upper triangle of the pairwise matrix, O(n^2);
* order >= 3: full enumeration, guarded to n <= 3000.

Pairwise work is split into fixed row blocks (see ``_parallel``); each block
sum uses numpy's pairwise summation and blocks are combined with an exactly
rounded sum, so results do not depend on the worker count.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.special import ndtr

from . import _parallel
from .errors import AlphaUnavailable, EnumerationGuard, WindowTooShort
from .kernel import Kernel
from .sim import IncrementSeries

ENUMERATION_MAX_N = 3000
ENUMERATION_CHUNK = 1 << 16


@dataclass(frozen=True)
class EvaluationWindow:
    """Index set A_t^n(d) = {1 <= i1 < ... < id <= [nt]}."""

    t: float
    n: int
    d: int

    @property
    def m(self) -> int:
        return int(math.floor(self.n * self.t + 1e-9))

    def check(self, available: int) -> int:
        m = self.m
        if m < self.d:
            raise WindowTooShort(f"[nt]={m} < d={self.d}")
        if m > available:
            raise WindowTooShort(f"[nt]={m} exceeds the {available} available increments")
        return m


@dataclass(frozen=True)
class StatisticPath:
    """Values of a statistic on the grid t = k/n, k = first..last."""

    n: int
    first: int
    values: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.first, self.first + len(self.values)) / self.n

    def __call__(self, t: float) -> float:
        k = int(math.floor(self.n * t + 1e-9))
        if k < self.first or k >= self.first + len(self.values):
            raise WindowTooShort(f"t={t} outside the path's admissible range")
        return float(self.values[k - self.first])


# --- tuple sums -----------------------------------------------------------------

def tuple_sum(H: Kernel, x: np.ndarray, *, allow_large: bool = False,
              workers: int | None = None) -> float:
    """Unnormalised sum of H over all strictly increasing index tuples of x."""
    x = np.asarray(x, dtype=float)
    m, d = len(x), H.d
    if m < d:
        return 0.0
    if H.additive is not None:
        return comb(m - 1, d - 1) * _parallel.exact_sum(
            _parallel.map_blocks(lambda lo, hi: np.sum(H.additive(x[lo:hi])),
                                 _parallel.blocks(0, m, 1 << 14), workers))
    if d == 1:
        return _parallel.exact_sum(
            _parallel.map_blocks(lambda lo, hi: np.sum(H.func(x[lo:hi])),
                                 _parallel.blocks(0, m, 1 << 14), workers))
    if H.g1_parts is not None and H.g1_parts[0].d == 2:
        return _g1_orbit_sum(*H.g1_parts, x, workers)
    if d == 2:
        return _pair_sum(H, x, workers)
    return float(np.sum(_enumerate(H, x, allow_large)))


def _pair_sum(H: Kernel, x: np.ndarray, workers) -> float:
    m = len(x)

    def block(lo, hi):
        # rows lo..hi-1 against columns lo..m-1, strictly above the diagonal
        vals = np.asarray(H.func(x[lo:hi, None], x[None, lo:]), dtype=float)
        mask = np.arange(lo, m)[None, :] > np.arange(lo, hi)[:, None]
        return np.sum(vals[mask])

    return _parallel.exact_sum(_parallel.map_blocks(block, _parallel.blocks(0, m), workers))


def _g1_orbit_sum(H: Kernel, K: Kernel, x: np.ndarray, workers) -> float:
    """sum_{i<j<k} G1~(x_i, x_j, x_k) for order-2 H, K.

    Summing the symmetrized kernel over a triple enumerates each ordered
    (centre c, a, b) once with weight 1/6, so the total is
    (1/6) sum_c [R^H_c R^K_c - sum_{a != c} H(c,a) K(c,a)] with off-diagonal
    row sums R.
    """
    m = len(x)
    same = K is H

    def block(lo, hi):
        rows = np.arange(lo, hi)
        hb = np.asarray(H.func(x[lo:hi, None], x[None, :]), dtype=float)
        hb[rows - lo, rows] = 0.0
        kb = hb if same else np.asarray(K.func(x[lo:hi, None], x[None, :]), dtype=float)
        if not same:
            kb[rows - lo, rows] = 0.0
        rh = hb.sum(axis=1)
        rk = rh if same else kb.sum(axis=1)
        return np.sum(rh * rk - np.sum(hb * kb, axis=1))

    return _parallel.exact_sum(
        _parallel.map_blocks(block, _parallel.blocks(0, m), workers)) / 6.0


def _guard(m: int, allow_large: bool) -> None:
    if m > ENUMERATION_MAX_N and not allow_large:
        raise EnumerationGuard(
            f"full enumeration over {m} increments exceeds the n <= {ENUMERATION_MAX_N} guard; "
            "pass allow_large=True to override")


def _enumerate(H: Kernel, x: np.ndarray, allow_large: bool) -> np.ndarray:
    """Per-chunk partial sums of H over all increasing tuples (chunk order fixed)."""
    m, d = len(x), H.d
    _guard(m, allow_large)
    partials = []
    it = itertools.combinations(range(m), d)
    while True:
        chunk = np.fromiter(itertools.chain.from_iterable(itertools.islice(it, ENUMERATION_CHUNK)),
                            dtype=np.int64)
        if chunk.size == 0:
            break
        idx = chunk.reshape(-1, d)
        partials.append(np.sum(H.func(*(x[idx[:, k]] for k in range(d)))))
    return np.asarray(partials, dtype=float)


# --- public operations ------------------------------------------------------------

def u_statistic(H: Kernel, series: IncrementSeries, window: EvaluationWindow, *,
                allow_large: bool = False, workers: int | None = None) -> float:
    """U(H)_t^n over the scaled increments of ``series``."""
    if window.d != H.d:
        raise ValueError(f"window order {window.d} != kernel order {H.d}")
    m = window.check(len(series))
    x = np.asarray(series.scaled_increments[:m])
    return tuple_sum(H, x, allow_large=allow_large, workers=workers) / comb(window.n, H.d)


def u_statistic_path(H: Kernel, series: IncrementSeries, *, allow_large: bool = False,
                     workers: int | None = None) -> StatisticPath:
    """U(H)_t^n for every t = k/n, k = d..[nT], computed incrementally.

    When the upper index grows to k, the unnormalised sum gains the sum of H
    over (d-1)-subsets of {1..k-1} joined with k.
    """
    x = np.asarray(series.scaled_increments, dtype=float)
    N, d, n = len(x), H.d, series.n
    if N < d:
        raise WindowTooShort(f"{N} increments < d={d}")
    gains = np.zeros(N)
    if H.additive is not None:
        g = np.asarray(H.additive(x), dtype=float)
        k = np.arange(N)  # k previous indices before position k
        prev = np.concatenate(([0.0], np.cumsum(g)[:-1]))
        c1 = np.array([comb(int(j), d - 1) for j in k], dtype=float)
        c2 = np.array([comb(int(j) - 1, d - 2) if j >= 1 and d >= 2 else 0 for j in k],
                      dtype=float)
        gains = c1 * g + (c2 * prev if d >= 2 else 0.0)
    elif d == 1:
        gains = np.asarray(H.func(x), dtype=float)
    elif d == 2:
        def block(lo, hi):
            vals = np.asarray(H.func(x[:hi, None], x[None, lo:hi]), dtype=float)
            mask = np.arange(hi)[:, None] < np.arange(lo, hi)[None, :]
            return np.sum(np.where(mask, vals, 0.0), axis=0)
        gains = np.concatenate(_parallel.map_blocks(block, _parallel.blocks(0, N), workers))
    else:
        _guard(N, allow_large)
        it = itertools.combinations(range(N), d)
        while True:
            chunk = np.fromiter(
                itertools.chain.from_iterable(itertools.islice(it, ENUMERATION_CHUNK)),
                dtype=np.int64)
            if chunk.size == 0:
                break
            idx = chunk.reshape(-1, d)
            vals = np.asarray(H.func(*(x[idx[:, k]] for k in range(d))), dtype=float)
            gains += np.bincount(idx[:, -1], weights=vals, minlength=N)
    sums = np.cumsum(gains)
    values = sums[d - 1:] / comb(n, d)
    return StatisticPath(n=n, first=d, values=values)


def v_statistic_alpha(H: Kernel, alpha: np.ndarray, n: int) -> float:
    """Full product-measure statistic int H dF_n^{(x)d} on alpha's, diagonals included.

    Test oracle only (order 2).
    """
    if H.d != 2:
        raise ValueError("only order-2 kernels are supported")
    a = np.asarray(alpha, dtype=float)
    return float(np.sum(H.func(a[:, None], a[None, :]))) / n ** 2


# --- empirical fields ---------------------------------------------------------------

def empirical_cdf(series: IncrementSeries, t: float, x, use_alpha: bool = True):
    """F_n(t, x) = (1/n) sum_{j <= [nt]} 1{alpha_j <= x}.

    With ``use_alpha=False`` the scaled increments stand in for alpha (for
    ingested data, where alpha does not exist).
    """
    if use_alpha:
        if series.alpha is None:
            raise AlphaUnavailable("series has no alpha approximants")
        src = series.alpha
    else:
        src = series.scaled_increments
    m = EvaluationWindow(t, series.n, 1).check(len(src))
    s = np.sort(np.asarray(src[:m]))
    counts = np.searchsorted(s, np.asarray(x, dtype=float), side="right")
    return counts / series.n


def empirical_process(series: IncrementSeries, sigma_values, t: float, x):
    """G_n(t, x) = n^{-1/2} sum_{j <= [nt]} (1{alpha_j <= x} - Phi_{sigma_{(j-1)/n}}(x))."""
    if series.alpha is None or sigma_values is None:
        raise AlphaUnavailable("empirical process needs alpha and sigma")
    m = EvaluationWindow(t, series.n, 1).check(len(series))
    a = np.asarray(series.alpha[:m])[:, None]
    s = np.abs(np.asarray(sigma_values, dtype=float)[:m])[:, None]
    xs = np.atleast_1d(np.asarray(x, dtype=float))[None, :]
    terms = (a <= xs).astype(float) - ndtr(xs / s)
    out = terms.sum(axis=0) / math.sqrt(series.n)
    return float(out[0]) if np.ndim(x) == 0 else out


def empirical_process_drift(series: IncrementSeries, sigma_values, t: float, x):
    """Discretised F-conditional drift sum_{j <= [nt]} PhiBar_{sigma_{(j-1)/n}}(x) Delta_j W.

    Subtracting it from G_n leaves the part whose conditional covariance is
    the Gaussian kernel Phi(x1^x2) - Phi Phi - PhiBar PhiBar.
    """
    from .limit import phi_bar

    if series.alpha is None or sigma_values is None:
        raise AlphaUnavailable("conditional drift needs alpha and sigma")
    m = EvaluationWindow(t, series.n, 1).check(len(series))
    s = np.asarray(sigma_values, dtype=float)[:m]
    dw = np.asarray(series.alpha[:m]) / (s * math.sqrt(series.n))
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.array([np.sum(phi_bar(s, xv) * dw) for xv in xs])
    return float(out[0]) if np.ndim(x) == 0 else out
