"""Shared naive oracles.

Everything here is deliberately written as plain loops over index tuples and
permutations so that it shares no code path with the package internals.
"""
import itertools
import math

import numpy as np
import pytest


def naive_u(H, x, n, m=None):
    """C(n, d)^{-1} * sum over i1 < ... < id <= m of H, by explicit loops."""
    m = len(x) if m is None else m
    total = 0.0
    for idx in itertools.combinations(range(m), H.d):
        total += float(H(*(x[i] for i in idx)))
    return total / math.comb(n, H.d)


def naive_sym(f, xs):
    """Average of f over every permutation of the arguments."""
    perms = list(itertools.permutations(xs))
    return sum(float(f(*p)) for p in perms) / len(perms)


def naive_g1(H, xs):
    d = H.d

    def g1(*z):
        return H(z[0], *z[1:d]) * H(z[0], *z[d:])
    return naive_sym(g1, xs)


def naive_g2(H, a, b, ys):
    d = H.d
    perms = list(itertools.permutations(ys))
    return sum(float(H(a, *p[:d - 1]) * H(b, *p[d - 1:])) for p in perms) / len(perms)


def naive_v1(H, x, n):
    d = H.d
    total = 0.0
    for idx in itertools.combinations(range(len(x)), 2 * d - 1):
        total += naive_g1(H, [x[i] for i in idx])
    return d * d * total / math.comb(n, 2 * d - 1)


def naive_v2(H, x, n):
    d = H.d
    m = len(x)
    total = 0.0
    for idx in itertools.combinations(range(m), 2 * d - 2):
        ys = [x[i] for i in idx]
        for j in range(m - 1):
            total += naive_g2(H, x[j], x[j + 1], ys)
    return d * d * total / (n * math.comb(n, 2 * d - 2))


def naive_wl(a, k, n):
    """(1/n^2) sum_{i <= k < j} 1{|a_i| <= |a_j|}."""
    c = 0
    for i in range(k):
        for j in range(k, len(a)):
            c += abs(a[i]) <= abs(a[j])
    return c / n ** 2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
