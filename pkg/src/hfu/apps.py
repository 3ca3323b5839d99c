"""Statistical applications: Gini mean difference, L^p homoscedasticity test,
and the Wilcoxon change-point procedure."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from .errors import BadParam, DegenerateDenominator, FlooredVariance, WindowTooShort
from .kernel import builtin, gaussian_abs_moment
from .limit import VolatilityPath, gini_limit, wilcoxon_limit
from .sim import IncrementSeries
from .ustat import EvaluationWindow, u_statistic
from .varest import VARIANCE_FLOOR, estimate_variance, v1n, v2n

DECISIONS = ("reject", "fail_to_reject", "estimate_only")


@dataclass
class TestReport:
    """Outcome of one application run; serialises to JSON via :meth:`to_dict`."""

    __test__ = False  # not a pytest class

    test: str
    statistic: float
    std_error: Optional[float] = None
    p_value: Optional[float] = None
    decision: str = "estimate_only"
    level: Optional[float] = None
    warnings: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    oracle: Optional[dict] = None

    def __post_init__(self):
        if self.decision not in DECISIONS:
            raise ValueError(f"bad decision {self.decision!r}")
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p_value outside [0, 1]")

    def to_dict(self) -> dict:
        out = {
            "test": self.test,
            "statistic": self.statistic,
            "std_error": self.std_error,
            "p_value": self.p_value,
            "decision": self.decision,
            "level": self.level,
            "warnings": list(self.warnings),
            "inputs": dict(self.inputs),
            "details": _plain(self.details),
        }
        if self.oracle is not None:
            out["oracle"] = _plain(self.oracle)
        return out


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _window_full(series: IncrementSeries, t: Optional[float]) -> EvaluationWindow:
    if t is None:
        t = len(series) / series.n
    return EvaluationWindow(t, series.n, 2)


# --- Gini mean difference -----------------------------------------------------------

def gini(series: IncrementSeries, window: Optional[EvaluationWindow] = None,
         vol: Optional[VolatilityPath] = None, gamma: float = 0.05,
         inputs: Optional[dict] = None) -> TestReport:
    """Gini mean difference U(H-bar)_t^n with a feasible (1 - gamma) confidence interval."""
    if not 0 < gamma < 1:
        raise BadParam("gamma must lie in (0, 1)")
    window = window or _window_full(series, None)
    if window.m < 3:
        raise WindowTooShort("Gini needs at least 3 increments")
    H = builtin("gini_even")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", FlooredVariance)
        stat = u_statistic(H, series, window)
        var = estimate_variance(H, series, window)
    se = math.sqrt(var.v / window.n)
    c = float(norm.ppf(1 - gamma / 2))
    report = TestReport(
        test="gini", statistic=stat, std_error=se, decision="estimate_only", level=gamma,
        warnings=[str(w.message) for w in caught],
        inputs={"n": window.n, "t": window.t, "kernel": H.name, **(inputs or {})},
        details={"ci": [stat - c * se, stat + c * se], "v1": var.v1, "v2": var.v2,
                 "variance": var.v, "floored": var.floored})
    if vol is not None:
        report.oracle = {"md": gini_limit(vol, window.t)}
    return report


# --- L^p homoscedasticity test -----------------------------------------------------

@dataclass
class LpTestState:
    u1: float
    u2: float
    m2p: float
    mn2: float
    grad_r: np.ndarray
    Vn: np.ndarray
    vn2: float
    p: float
    floored: bool = False


def r_function(x: float, y: float, p: float, m2p: float) -> float:
    """r(x, y) = 1 - m_{2p} y^p / x."""
    return 1.0 - m2p * y ** p / x


def r_gradient(x: float, y: float, p: float, m2p: float) -> np.ndarray:
    return np.array([m2p * y ** p / x ** 2, -p * m2p * y ** (p - 1) / x])


def lp_statistics(series: IncrementSeries, p: float = 2.0, **kw) -> LpTestState:
    """U(H1), U(H2), M_n^2 and the delta-method variance v_n^2 on [0, 1]."""
    if not p > 1:
        raise BadParam("p must exceed 1")
    if len(series) < series.n:
        raise WindowTooShort("the L^p test needs observations on the whole unit interval")
    window = EvaluationWindow(1.0, series.n, 2)
    H = (builtin("lp_power", p=p), builtin("sum_of_squares"))
    u1 = u_statistic(H[0], series, window, **kw)
    u2 = u_statistic(H[1], series, window, **kw)
    if not u1 > 0:
        raise DegenerateDenominator("U(H1) is not positive")
    m2p = gaussian_abs_moment(2 * p)
    mn2 = r_function(u1, u2, p, m2p)
    grad = r_gradient(u1, u2, p, m2p)
    # V^n_ij = 4 U(G1~^{ij}) - W_ij; W is averaged with its transpose (the two
    # lag orientations share a limit) so V^n is symmetric.
    U1 = np.empty((2, 2))
    W = np.empty((2, 2))
    for i in range(2):
        for j in range(i, 2):
            U1[i, j] = U1[j, i] = v1n(H[i], series, window, K=H[j], **kw)
            W[i, j] = v2n(H[i], series, window, K=H[j], **kw)
            if i != j:
                W[j, i] = v2n(H[j], series, window, K=H[i], **kw)
    W = 0.5 * (W + W.T)
    Vn = U1 - W
    vn2 = float(grad @ Vn @ grad)
    ref = float(np.sum(grad ** 2 * np.abs(np.diag(U1))))
    floor = max(VARIANCE_FLOOR * ref, np.finfo(float).tiny)
    floored = vn2 < floor
    if floored:
        warnings.warn(f"v_n^2 = {vn2:.6g} floored to {floor:.6g}", FlooredVariance, stacklevel=2)
        vn2 = floor
    return LpTestState(u1, u2, m2p, mn2, grad, Vn, vn2, float(p), floored)


def lp_test(series: IncrementSeries, p: float = 2.0, gamma: float = 0.05,
            inputs: Optional[dict] = None) -> tuple[TestReport, LpTestState]:
    """One-sided test of constant volatility: reject when S_n > c_{1-gamma}."""
    if not 0 < gamma < 1:
        raise BadParam("gamma must lie in (0, 1)")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", FlooredVariance)
        st = lp_statistics(series, p)
    s_n = math.sqrt(series.n) * st.mn2 / math.sqrt(st.vn2)
    p_value = float(norm.sf(s_n))
    decision = "reject" if s_n > norm.ppf(1 - gamma) else "fail_to_reject"
    report = TestReport(
        test="lp_test", statistic=s_n, std_error=math.sqrt(st.vn2 / series.n), p_value=p_value,
        decision=decision, level=gamma, warnings=[str(w.message) for w in caught],
        inputs={"n": series.n, "t": 1.0, "kernel": "lp_power", "p": p, **(inputs or {})},
        details={"u1": st.u1, "u2": st.u2, "m2p": st.m2p, "mn2": st.mn2,
                 "grad_r": st.grad_r, "Vn": st.Vn, "vn2": st.vn2, "floored": st.floored})
    return report, st


# --- Wilcoxon change point -------------------------------------------------------------

@dataclass
class WilcoxonState:
    wl_path: np.ndarray  # WL at t = k/n, k = 0..n
    sup_stat: float
    t_hat: float
    delta: float

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.wl_path)) / (len(self.wl_path) - 1)


def _fenwick_counts(ranks: np.ndarray, size: int):
    """For each k: #{i < k: r_i <= r_k} and #{i < k: r_i < r_k} (Fenwick tree)."""
    tree = [0] * (size + 1)
    le = np.empty(len(ranks), dtype=np.int64)
    lt = np.empty(len(ranks), dtype=np.int64)
    for k, r in enumerate(ranks.tolist()):
        # ranks are 1-based
        s, i = 0, r
        while i > 0:
            s += tree[i]
            i -= i & -i
        le[k] = s
        s, i = 0, r - 1
        while i > 0:
            s += tree[i]
            i -= i & -i
        lt[k] = s
        i = r
        while i <= size:
            tree[i] += 1
            i += i & -i
    return le, lt


def wilcoxon_path(increments) -> np.ndarray:
    """n^2 WL at every split k = 0..n, in O(n log n).

    Moving element k+1 from the right block to the left removes the pairs
    (i <= k, k+1) with |D_i| <= |D_{k+1}| and adds the pairs (k+1, j > k+1)
    with |D_{k+1}| <= |D_j|.
    """
    a = np.abs(np.asarray(increments, dtype=float))
    n = len(a)
    uniq, ranks = np.unique(a, return_inverse=True)
    ranks = ranks + 1
    le, lt = _fenwick_counts(ranks, len(uniq))
    srt = np.sort(a)
    all_ge = n - np.searchsorted(srt, a, side="left")  # #{j: a_j >= a_k}
    idx = np.arange(n)
    left_ge = idx - lt  # #{i < k: a_i >= a_k}
    right_ge = all_ge - 1 - left_ge
    steps = right_ge - le
    counts = np.concatenate(([0], np.cumsum(steps)))
    return counts.astype(float)


def wilcoxon(series: IncrementSeries, delta: float = 0.05,
             vol: Optional[VolatilityPath] = None,
             inputs: Optional[dict] = None) -> tuple[TestReport, WilcoxonState]:
    """WL_t^n path, sup_{t in [delta, 1-delta]} |WL_t^n - t(1-t)/2| and its argmax t_hat."""
    if not 0 < delta < 0.5:
        raise BadParam("delta must lie in (0, 1/2)")
    n = series.n
    if len(series) != n:
        raise BadParam("the Wilcoxon procedure needs exactly n increments on [0, 1]")
    if n < 2:
        raise WindowTooShort("need at least two increments")
    wl = wilcoxon_path(series.raw_increments) / n ** 2
    k = np.arange(n + 1)
    t = k / n
    inside = (k >= math.ceil(delta * n - 1e-9)) & (k <= math.floor((1 - delta) * n + 1e-9))
    if not inside.any():
        raise WindowTooShort("no grid point inside [delta, 1 - delta]")
    dev = np.abs(wl - 0.5 * t * (1 - t))
    cand = np.flatnonzero(inside)
    best = cand[np.argmax(dev[cand])]  # first maximiser
    state = WilcoxonState(wl, float(dev[best]), float(t[best]), float(delta))
    report = TestReport(
        test="wilcoxon", statistic=state.sup_stat, decision="estimate_only",
        inputs={"n": n, "t": 1.0, "kernel": "wilcoxon_indicator", "delta": delta,
                **(inputs or {})},
        details={"t_hat": state.t_hat, "wl_at_t_hat": float(wl[best])})
    if vol is not None:
        report.oracle = {"wl_at_t_hat": wilcoxon_limit(vol, state.t_hat)}
    return report, state


def wilcoxon_permutation_pvalue(series: IncrementSeries, delta: float = 0.05,
                                n_perm: int = 199, seed: int = 0) -> float:
    """Heuristic calibration of sup_stat by shuffling increments.

    Not part of the limit theory: shuffling destroys any volatility pattern,
    so the reference distribution is that of an exchangeable sample.
    """
    _, st = wilcoxon(series, delta)
    rng = np.random.Generator(np.random.Philox(seed))
    x = np.asarray(series.scaled_increments).copy()
    exceed = 0
    for _ in range(n_perm):
        rng.shuffle(x)
        _, sp = wilcoxon(IncrementSeries(series.n, x), delta)
        exceed += sp.sup_stat >= st.sup_stat
    return (exceed + 1) / (n_perm + 1)
