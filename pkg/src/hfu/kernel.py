"""Symmetric kernels of order d and the derived variance kernels.

A kernel is evaluated as ``H(x1, ..., xd)`` where each argument is a float or
numpy array; arrays broadcast against each other, so ``H(x[:, None], x[None, :])``
yields the full pairwise matrix for d = 2. Kernel callables must be pure.
"""
from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma as _gamma

from .errors import BadParam, KernelContractError, UnknownKernel

MAX_ORDER = 4
SELF_TEST_POINTS = 64
SELF_TEST_PERMS = 8
SELF_TEST_TOL = 1e-12


class Smoothness(enum.Enum):
    C0 = "C0"
    C1_PIECEWISE = "C1_piecewise"
    C1 = "C1"


@dataclass(frozen=True, eq=False)
class Kernel:
    """An order-d kernel together with the metadata the limit theorems rely on.

    ``additive`` (when set) is a function g with H(x) = sum_i g(x_i); the
    U-statistic engine then runs in O(n). ``g1_parts`` marks a kernel built by
    :func:`make_g1` so the engine can use the orbit-reduced O(n^2) route.
    ``gaussian_mean`` (when set) maps volatilities (s_1, ..., s_d), as
    broadcastable arrays, to E H(s_1 U_1, ..., s_d U_d) in closed form.
    """

    d: int
    func: Callable[..., np.ndarray]
    name: str = "custom"
    symmetric: bool = True
    even_each_coordinate: bool = False
    growth_degree: float = 0.0
    smoothness: Smoothness = Smoothness.C1
    params: dict = field(default_factory=dict)
    builtin: bool = False
    additive: Optional[Callable[[np.ndarray], np.ndarray]] = None
    homogeneity: Optional[float] = None
    g1_parts: Optional[tuple] = None
    gaussian_mean: Optional[Callable[..., np.ndarray]] = None
    self_test: bool = True

    def __post_init__(self):
        if not 1 <= self.d <= 2 * MAX_ORDER - 1:
            raise BadParam(f"kernel order {self.d} outside [1, {2 * MAX_ORDER - 1}]")
        if self.self_test:
            _check_contract(self)

    def __call__(self, *xs):
        if len(xs) != self.d:
            raise TypeError(f"kernel {self.name} of order {self.d} got {len(xs)} arguments")
        return self.func(*xs)

    def describe(self) -> dict:
        return {"name": self.name, "d": self.d, **self.params}


def _check_contract(k: Kernel) -> None:
    """Randomized symmetry / evenness self-test with a fixed seed."""
    if k.d == 1 or not (k.symmetric or k.even_each_coordinate):
        return
    rng = np.random.default_rng(20240917)
    pts = rng.standard_normal((SELF_TEST_POINTS, k.d)) * 1.5
    base = np.asarray(k.func(*pts.T), dtype=float)
    scale = SELF_TEST_TOL * (1.0 + np.abs(base))
    if k.symmetric:
        for _ in range(SELF_TEST_PERMS):
            perm = rng.permutation(k.d)
            val = np.asarray(k.func(*pts[:, perm].T), dtype=float)
            if np.any(np.abs(val - base) > scale):
                raise KernelContractError(f"kernel {k.name} is not symmetric")
    if k.even_each_coordinate:
        for _ in range(SELF_TEST_PERMS):
            signs = rng.choice([-1.0, 1.0], size=k.d)
            val = np.asarray(k.func(*(pts * signs).T), dtype=float)
            if np.any(np.abs(val - base) > scale):
                raise KernelContractError(f"kernel {k.name} is not even in each coordinate")


# --- Gaussian absolute moments ------------------------------------------------

def gaussian_abs_moment(p: float) -> float:
    """m_p = E|N(0,1)|^p = 2^{p/2} Gamma((p+1)/2) / sqrt(pi)."""
    if p <= -1:
        raise BadParam("absolute moment requires p > -1")
    if p == 0:
        return 1.0
    return float(2.0 ** (p / 2.0) * _gamma((p + 1.0) / 2.0) / math.sqrt(math.pi))


@dataclass(frozen=True)
class GaussianMoments:
    def m(self, p: float) -> float:
        return gaussian_abs_moment(p)

    __call__ = m


# --- built-in kernels ---------------------------------------------------------

def _gini_even(x, y):
    return 0.5 * (np.abs(x - y) + np.abs(x + y))


def builtin(name: str, **params) -> Kernel:
    """Construct a named kernel.

    ``gini_even``: 1/2(|x-y| + |x+y|).
    ``lp_power(p)``: 1/2(|x1-x2|^{2p} + |x1+x2|^{2p}), p > 1.
    ``sum_of_squares(d=2)``: sum_i x_i^2.
    ``abs_power(r, d=2)``: sum_i |x_i|^r.
    ``product_power(r, d=2)``: prod_i |x_i|^r.
    """
    if name == "gini_even":
        _no_params(name, params)
        m1 = gaussian_abs_moment(1.0)

        def gini_mean(s1, s2):
            # U1 +- U2 scaled are both N(0, s1^2 + s2^2)
            return m1 * np.sqrt(np.square(s1) + np.square(s2))

        return Kernel(2, _gini_even, name=name, even_each_coordinate=True, growth_degree=1.0,
                      smoothness=Smoothness.C1_PIECEWISE, builtin=True, homogeneity=1.0,
                      gaussian_mean=gini_mean)
    if name == "lp_power":
        p = float(_take(params, "p", name))
        _no_params(name, params)
        if not p > 1:
            raise BadParam("lp_power requires p > 1")
        q = 2.0 * p
        if q.is_integer() and int(q) % 2 == 0:
            qi = int(q)

            def lp(x, y):
                return 0.5 * (_ipow(x - y, qi) + _ipow(x + y, qi))
        else:
            def lp(x, y):
                return 0.5 * (np.abs(x - y) ** q + np.abs(x + y) ** q)

        m2p = gaussian_abs_moment(q)

        def lp_mean(s1, s2):
            return m2p * (np.square(s1) + np.square(s2)) ** p

        return Kernel(2, lp, name=name, params={"p": p}, even_each_coordinate=True,
                      growth_degree=q, smoothness=Smoothness.C1, builtin=True, homogeneity=q,
                      gaussian_mean=lp_mean)
    if name == "sum_of_squares":
        d = _order(params.pop("d", 2))
        _no_params(name, params)
        return Kernel(d, _sum_of(np.square, d), name=name, params={"d": d},
                      even_each_coordinate=True, growth_degree=2.0, smoothness=Smoothness.C1,
                      builtin=True, additive=np.square, homogeneity=2.0,
                      gaussian_mean=_sum_of(np.square, d))
    if name == "abs_power":
        r = float(_take(params, "r", name))
        d = _order(params.pop("d", 2))
        _no_params(name, params)
        if not r > 0:
            raise BadParam("abs_power requires r > 0")

        def g(x, _r=r):
            return np.abs(x) ** _r

        mr = gaussian_abs_moment(r)
        smooth = Smoothness.C1 if r > 1 else Smoothness.C1_PIECEWISE
        return Kernel(d, _sum_of(g, d), name=name, params={"r": r, "d": d},
                      even_each_coordinate=True, growth_degree=r, smoothness=smooth,
                      builtin=True, additive=g, homogeneity=r,
                      gaussian_mean=_sum_of(lambda v: mr * g(v), d))
    if name == "product_power":
        r = float(_take(params, "r", name))
        d = _order(params.pop("d", 2))
        _no_params(name, params)
        if not r > 0:
            raise BadParam("product_power requires r > 0")

        def prod(*xs, _r=r):
            out = np.abs(xs[0]) ** _r
            for x in xs[1:]:
                out = out * np.abs(x) ** _r
            return out

        mr = gaussian_abs_moment(r)

        def prod_mean(*ss):
            return mr ** d * prod(*ss)

        smooth = Smoothness.C1 if r > 1 else Smoothness.C1_PIECEWISE
        return Kernel(d, prod, name=name, params={"r": r, "d": d}, even_each_coordinate=True,
                      growth_degree=d * r, smoothness=smooth, builtin=True, homogeneity=d * r,
                      gaussian_mean=prod_mean)
    raise UnknownKernel(f"unknown kernel {name!r}")


BUILTIN_NAMES = ("gini_even", "lp_power", "sum_of_squares", "abs_power", "product_power")


def _ipow(v, k: int):
    """v**k for integer k >= 1 by repeated squaring (numpy's generic pow is slow)."""
    result = None
    base = v
    while k:
        if k & 1:
            result = base if result is None else result * base
        k >>= 1
        if k:
            base = base * base
    return result


def _sum_of(g, d):
    def h(*xs):
        out = g(xs[0])
        for x in xs[1:]:
            out = out + g(x)
        return out
    return h


def _take(params, key, name):
    if key not in params:
        raise BadParam(f"kernel {name} requires parameter {key!r}")
    return params.pop(key)


def _no_params(name, params):
    if params:
        raise BadParam(f"unexpected parameters for {name}: {sorted(params)}")


def _order(d) -> int:
    d = int(d)
    if not 1 <= d <= MAX_ORDER:
        raise BadParam(f"order d={d} outside [1, {MAX_ORDER}]")
    return d


def warn_user_piecewise(k: Kernel) -> None:
    if k.smoothness is Smoothness.C1_PIECEWISE and not k.builtin:
        warnings.warn(f"kernel {k.name} claims piecewise C1 smoothness; "
                      "the central limit theory is applied at the caller's risk",
                      stacklevel=3)


# --- symmetrizations ----------------------------------------------------------

@lru_cache(maxsize=None)
def _splits(m: int, k: int) -> tuple:
    """All ways to pick k of m positions (and the complement)."""
    out = []
    for a in itertools.combinations(range(m), k):
        b = tuple(i for i in range(m) if i not in a)
        out.append((a, b))
    return tuple(out)


def make_g1(H: Kernel, K: Optional[Kernel] = None) -> Kernel:
    """Full symmetrization of G1(x) = H(x1, x2..xd) K(x1, x_{d+1}..x_{2d-1}).

    The average over all (2d-1)! permutations is computed by orbits: pick the
    shared argument c (2d-1 ways), then which d-1 of the remaining arguments
    feed H; every orbit has (d-1)!^2 permutations. ``K`` defaults to ``H``;
    a different ``K`` gives the cross kernel used for covariance matrices.
    """
    K = H if K is None else K
    if not (H.symmetric and K.symmetric):
        raise BadParam("make_g1 requires symmetric kernels")
    if H.d != K.d:
        raise BadParam("make_g1 cross kernels must share the order")
    d = H.d
    order = 2 * d - 1
    rest = _splits(order - 1, d - 1)
    norm = 1.0 / (order * len(rest))

    def g1(*xs):
        total = 0.0
        for c in range(order):
            others = xs[:c] + xs[c + 1:]
            for a, b in rest:
                total = total + H.func(xs[c], *(others[i] for i in a)) * \
                    K.func(xs[c], *(others[i] for i in b))
        return norm * total

    hom = None
    if H.homogeneity is not None and K.homogeneity is not None:
        hom = H.homogeneity + K.homogeneity
    name = f"g1[{H.name}]" if K is H else f"g1[{H.name},{K.name}]"
    smooth = min(H.smoothness, K.smoothness, key=lambda s: list(Smoothness).index(s))
    return Kernel(order, g1, name=name, symmetric=True,
                  even_each_coordinate=H.even_each_coordinate and K.even_each_coordinate,
                  growth_degree=H.growth_degree + K.growth_degree, smoothness=smooth,
                  builtin=H.builtin and K.builtin, homogeneity=hom, g1_parts=(H, K),
                  self_test=d > 1)


def make_g2(H: Kernel, K: Optional[Kernel] = None) -> Callable:
    """Evaluation rule for G2~(x; y), G2 symmetrized over the 2d-2 y arguments.

    Returns ``g2(x1, x2, *ys)`` with G2(x; y) = H(x1, y1..y_{d-1}) K(x2, y_d..y_{2d-2});
    orbits are the choices of which d-1 y's join x1.
    """
    K = H if K is None else K
    if not (H.symmetric and K.symmetric):
        raise BadParam("make_g2 requires symmetric kernels")
    if H.d != K.d:
        raise BadParam("make_g2 cross kernels must share the order")
    d = H.d
    ny = 2 * d - 2
    splits = _splits(ny, d - 1)
    norm = 1.0 / len(splits)

    def g2(x1, x2, *ys):
        if len(ys) != ny:
            raise TypeError(f"g2 expects {ny} y arguments, got {len(ys)}")
        total = 0.0
        for a, b in splits:
            total = total + H.func(x1, *(ys[i] for i in a)) * K.func(x2, *(ys[i] for i in b))
        return norm * total

    g2.order = (2, ny)
    g2.parts = (H, K)
    return g2


def with_metadata(k: Kernel, **changes) -> Kernel:
    return replace(k, **changes)
