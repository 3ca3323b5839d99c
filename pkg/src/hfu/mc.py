"""Monte Carlo harness for the limit theorems.

Replication r of an experiment simulates with seed ``seed_base + r``; every
replication is independent of the others and of the worker count, and
per-n summaries are computed from results held in seed order.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from . import _parallel
from .apps import gini, lp_test, wilcoxon
from .errors import BadParam, BudgetExceeded, FlooredVariance, TooFewSamples
from .kernel import builtin
from .limit import VolatilityPath, limit_cdf, limit_u
from .sim import ProcessSpec, increments, make_model, simulate_path
from .ustat import EvaluationWindow, empirical_cdf, empirical_process, \
    empirical_process_drift, u_statistic
from .varest import standardized_statistic

TARGETS = ("lln", "feasible_clt", "gini", "level", "power", "changepoint", "fn_diag", "gn_diag")
DEFAULT_BUDGET = 2e10
KS_MIN_SAMPLES = 20


def ks_distance(samples: Sequence[float]) -> float:
    """sup_x |F_M(x) - Phi(x)| evaluated at the sample points."""
    x = np.sort(np.asarray(samples, dtype=float))
    M = len(x)
    if M < KS_MIN_SAMPLES:
        raise TooFewSamples(f"KS distance needs at least {KS_MIN_SAMPLES} samples, got {M}")
    cdf = ndtr(x)
    upper = np.arange(1, M + 1) / M - cdf
    lower = cdf - np.arange(M) / M
    return float(max(upper.max(), lower.max()))


@dataclass
class Experiment:
    target: str
    model: str = "constant"
    model_params: dict = field(default_factory=dict)
    kernel: str = "sum_of_squares"
    kernel_params: dict = field(default_factory=dict)
    n_values: tuple = (1000,)
    replications: int = 100
    seed_base: int = 0
    t: float = 1.0
    x: float = 0.0
    gamma: float = 0.05
    p: float = 2.0
    delta: float = 0.05
    change_point: Optional[float] = None
    tolerance: float = 0.05
    budget: float = DEFAULT_BUDGET

    def __post_init__(self):
        if self.target not in TARGETS:
            raise BadParam(f"unknown target {self.target!r}; expected one of {TARGETS}")
        if self.replications < 1:
            raise BadParam("replications must be at least 1")
        self.n_values = tuple(int(n) for n in self.n_values)
        if any(n < 4 for n in self.n_values):
            raise BadParam("every n must be at least 2d = 4")

    def spec(self) -> ProcessSpec:
        return make_model(self.model, **self.model_params)

    def describe(self) -> dict:
        return {
            "target": self.target, "model": self.model, "model_params": self.model_params,
            "kernel": self.kernel, "kernel_params": self.kernel_params,
            "n_values": list(self.n_values), "replications": self.replications,
            "seed_base": self.seed_base, "t": self.t, "x": self.x, "gamma": self.gamma,
            "p": self.p, "delta": self.delta, "change_point": self.change_point,
            "tolerance": self.tolerance,
        }


@dataclass
class McReport:
    experiment: dict
    per_n: list
    seeds: list
    runtime: float = 0.0
    raw: dict = field(default_factory=dict, repr=False)

    def to_dict(self, include_runtime: bool = True) -> dict:
        out = {"experiment": self.experiment, "per_n": self.per_n,
               "seeds": {"first": self.seeds[0], "last": self.seeds[-1],
                         "count": len(self.seeds)}}
        if include_runtime:
            out["runtime"] = self.runtime
        return out

    def to_json(self, include_runtime: bool = True) -> str:
        return json.dumps(self.to_dict(include_runtime), sort_keys=True, indent=2,
                          allow_nan=False, default=_json_default)

    def raw_csv(self) -> str:
        """Per-replication statistics: one row per (n, seed)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = sorted({k for rows in self.raw.values() for r in rows for k in r})
        w.writerow(["n", "seed", *cols])
        for n, rows in self.raw.items():
            for seed, r in zip(self.seeds, rows):
                w.writerow([n, seed, *[repr(r.get(c)) for c in cols]])
        return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serialisable: {type(o)}")


def _finite(v):
    return None if v is None or not math.isfinite(v) else float(v)


# --- per-replication computations ---------------------------------------------------

def _replicate(exp: Experiment, spec: ProcessSpec, n: int, seed: int) -> dict:
    path = simulate_path(spec, n, seed)
    need_alpha = exp.target in ("fn_diag", "gn_diag")
    series = increments(path, with_alpha=need_alpha)
    vol = VolatilityPath.from_path(path)
    target = exp.target
    if target in ("lln", "feasible_clt"):
        H = builtin(exp.kernel, **exp.kernel_params)
        window = EvaluationWindow(exp.t, n, H.d)
        u = u_statistic(H, series, window, workers=1)
        lim = limit_u(H, vol, exp.t)
        if target == "lln":
            return {"u": u, "limit": lim, "abs_error": abs(u - lim)}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FlooredVariance)
            st = standardized_statistic(H, series, window, lim, u=u, workers=1)
        return {"u": u, "limit": lim, "z": st.statistic, "v": st.variance.v,
                "floored": float(st.floored), "raw_negative": float(st.variance.raw < 0)}
    if target == "gini":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FlooredVariance)
            rep = gini(series, EvaluationWindow(exp.t, n, 2), vol,
                       gamma=exp.gamma)
        md = rep.oracle["md"]
        lo, hi = rep.details["ci"]
        return {"statistic": rep.statistic, "std_error": rep.std_error, "md": md,
                "covered": float(lo <= md <= hi),
                "within_3se": float(abs(rep.statistic - md) <= 3 * rep.std_error)}
    if target in ("level", "power"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FlooredVariance)
            rep, st = lp_test(series, p=exp.p, gamma=exp.gamma)
        return {"s_n": rep.statistic, "mn2": st.mn2, "reject": float(rep.decision == "reject")}
    if target == "changepoint":
        rep, st = wilcoxon(series, exp.delta)
        out = {"sup_stat": st.sup_stat, "t_hat": st.t_hat}
        if exp.change_point is not None:
            out["hit"] = float(abs(st.t_hat - exp.change_point) < exp.tolerance)
        return out
    if target == "fn_diag":
        fn = float(empirical_cdf(series, exp.t, exp.x))
        return {"fn": fn, "limit": limit_cdf(vol, exp.t, exp.x)}
    if target == "gn_diag":
        g = empirical_process(series, path.sigma_values, exp.t, exp.x)
        drift = empirical_process_drift(series, path.sigma_values, exp.t, exp.x)
        return {"gn": g, "drift": drift, "centered": g - drift}
    raise BadParam(target)


def _summarise(exp: Experiment, rows: list[dict]) -> dict:
    M = len(rows)
    col = lambda k: np.array([r[k] for r in rows], dtype=float)  # noqa: E731
    out: dict = {"replications": M}
    t = exp.target
    if t == "lln":
        err = col("abs_error")
        out.update(median_abs_error=float(np.median(err)), mean_abs_error=float(err.mean()))
    elif t == "feasible_clt":
        z = col("z")
        out.update(mean=float(z.mean()), sd=float(z.std(ddof=1)) if M > 1 else None,
                   floored_frequency=float(col("floored").mean()),
                   negative_raw_variance_frequency=float(col("raw_negative").mean()))
        if M >= KS_MIN_SAMPLES:
            out.update(ks_distance=ks_distance(z), ks_defined=True)
        else:
            out.update(ks_distance=None, ks_defined=False)
    elif t == "gini":
        out.update(coverage=float(col("covered").mean()),
                   within_3se_frequency=float(col("within_3se").mean()),
                   median_statistic=float(np.median(col("statistic"))))
    elif t in ("level", "power"):
        out.update(rejection_frequency=float(col("reject").mean()),
                   median_mn2=float(np.median(col("mn2"))))
    elif t == "changepoint":
        out.update(median_sup_stat=float(np.median(col("sup_stat"))),
                   median_t_hat=float(np.median(col("t_hat"))))
        if exp.change_point is not None:
            out["hit_frequency"] = float(col("hit").mean())
    elif t == "fn_diag":
        fn = col("fn")
        out.update(mean=float(fn.mean()), mean_limit=float(col("limit").mean()),
                   std_error=float(fn.std(ddof=1) / math.sqrt(M)) if M > 1 else None)
    elif t == "gn_diag":
        for key in ("gn", "centered"):
            v = col(key)
            if M > 1:
                var = float(v.var(ddof=1))
                m4 = float(np.mean((v - v.mean()) ** 4))
                se = math.sqrt(max(m4 - var ** 2, 0.0) / M)
            else:
                var, se = None, None
            out[f"{key}_variance"] = var
            out[f"{key}_variance_se"] = se
    return {k: (_finite(v) if isinstance(v, float) else v) for k, v in out.items()}


def run(exp: Experiment, workers: int | None = None) -> McReport:
    """Run every replication for each n and aggregate.

    Raises
    ------
    BudgetExceeded
        If replications * max(n)^2 exceeds ``exp.budget``.
    """
    cost = exp.replications * max(exp.n_values) ** 2
    if cost > exp.budget:
        raise BudgetExceeded(f"{cost:.3g} kernel evaluations exceed the budget {exp.budget:.3g}")
    spec = exp.spec()
    seeds = [exp.seed_base + r for r in range(exp.replications)]
    start = time.perf_counter()
    per_n, raw = [], {}
    w = _parallel.worker_count(workers)
    for n in exp.n_values:
        if w == 1:
            rows = [_replicate(exp, spec, n, s) for s in seeds]
        else:
            with ThreadPoolExecutor(max_workers=w) as pool:
                rows = list(pool.map(lambda s: _replicate(exp, spec, n, s), seeds))
        raw[n] = rows
        per_n.append({"n": n, **_summarise(exp, rows)})
    return McReport(exp.describe(), per_n, seeds, time.perf_counter() - start, raw)
