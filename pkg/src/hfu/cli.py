"""Command-line front end.

Subcommands
-----------
simulate   simulate a named model, optionally write the path as CSV, report a statistic
analyze    read a ``time,value`` CSV observed at frequency ``--n`` and report a statistic
mc         run a Monte Carlo experiment
limits     print the analytic limit functionals of a named model

Settings come from an optional TOML file (``--config``); command-line flags
override it. Results are JSON on stdout (or ``--output``). Errors are JSON on
stderr with exit code 2 for configuration problems and 3 for failures during
computation.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
from scipy.stats import norm

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from . import mc as mc_mod
from .apps import TestReport, gini, lp_test, wilcoxon
from .errors import BadParam, ConfigError, HfuError, IrregularGrid
from .kernel import builtin
from .limit import VolatilityPath, gini_limit, limit_u, variance_terms, wilcoxon_limit
from .sim import MODELS, increments, ingest_path, make_model, simulate_path
from .ustat import EvaluationWindow, u_statistic
from .varest import estimate_variance, standardized_statistic

STATISTICS = ("u_stat", "gini", "lp_test", "wilcoxon", "variance")
EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise ConfigError(message)


@dataclass
class RunConfig:
    mode: str
    model: str = "constant"
    model_params: dict = field(default_factory=dict)
    kernel: str = "sum_of_squares"
    kernel_params: dict = field(default_factory=dict)
    statistic: str = "u_stat"
    n: Optional[int] = None
    T: float = 1.0
    t: Optional[float] = None
    seed: int = 0
    substeps: int = 1
    gamma: float = 0.05
    p: float = 2.0
    delta: float = 0.05
    limit: Optional[float] = None
    output: Optional[str] = None
    input: Optional[str] = None
    emit_csv: Optional[str] = None
    raw_csv: Optional[str] = None
    workers: Optional[int] = None
    mc: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.model not in MODELS:
            raise BadParam(f"unknown model {self.model!r}; expected one of {sorted(MODELS)}")
        if self.statistic not in STATISTICS:
            raise BadParam(f"unknown statistic {self.statistic!r}; expected one of {STATISTICS}")
        if self.n is not None and self.n < 2:
            raise BadParam("n must be at least 2")
        if not self.T > 0:
            raise BadParam("T must be positive")
        if self.t is not None and not 0 <= self.t <= self.T:
            raise BadParam("t must lie in [0, T]")
        if not 0 < self.gamma < 1:
            raise BadParam("gamma must lie in (0, 1)")
        if not 0 < self.delta < 0.5:
            raise BadParam("delta must lie in (0, 1/2)")
        if not self.p > 1:
            raise BadParam("p must exceed 1")
        if self.substeps < 1:
            raise BadParam("substeps must be positive")

    def make_kernel(self):
        params = dict(self.kernel_params)
        if self.kernel == "lp_power" and "p" not in params:
            params["p"] = self.p
        return builtin(self.kernel, **params)

    def make_spec(self):
        params = dict(self.model_params)
        params.setdefault("horizon", self.T)
        return make_model(self.model, **params)


# --- configuration -------------------------------------------------------------------

def _parse_value(text: str) -> Any:
    """Interpret KEY=VALUE right-hand sides: JSON, else comma list of floats, else string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        try:
            return [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            pass
    return text


def _pairs(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"expected KEY=VALUE, got {item!r}")
        out[key.strip().replace("-", "_")] = _parse_value(value.strip())
    return out


def _named_block(raw: dict, key: str) -> tuple[Optional[str], dict]:
    """Accept ``key = "name"`` (+ ``key_params`` table) or a ``[key]`` table with ``name``."""
    value = raw.get(key)
    params = dict(raw.get(f"{key}_params", {}))
    if isinstance(value, dict):
        value = dict(value)
        name = value.pop("name", None)
        params.update(value)
        return name, params
    return value, params


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None


def build_config(mode: str, args: argparse.Namespace) -> RunConfig:
    raw = load_config(args.config)
    cfg = RunConfig(mode=mode)
    model, mparams = _named_block(raw, "model")
    kernel, kparams = _named_block(raw, "kernel")
    stat = raw.get("statistic")
    if isinstance(stat, dict):
        stat = stat.get("name")
    if model:
        cfg.model = model
    if kernel:
        cfg.kernel = kernel
    if stat:
        cfg.statistic = stat
    cfg.model_params.update(mparams)
    cfg.kernel_params.update(kparams)
    scalars = ("n", "T", "t", "seed", "substeps", "gamma", "p", "delta", "limit", "output",
               "input", "emit_csv", "raw_csv", "workers")
    for key in scalars:
        if key in raw:
            setattr(cfg, key, raw[key])
    cfg.mc.update(raw.get("mc", {}))

    # flags win over the file
    if getattr(args, "model", None):
        cfg.model = args.model
    if getattr(args, "kernel", None):
        cfg.kernel = args.kernel
    if getattr(args, "stat", None):
        cfg.statistic = args.stat
    if getattr(args, "sigma", None) is not None:
        cfg.model_params["sigma"] = args.sigma
    cfg.model_params.update(_pairs(getattr(args, "model_param", None)))
    cfg.kernel_params.update(_pairs(getattr(args, "kernel_param", None)))
    for key in scalars:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    for key in ("target", "replications", "seed_base", "n_values", "x", "change_point",
                "tolerance", "budget"):
        value = getattr(args, key, None)
        if value is not None:
            cfg.mc[key] = value
    try:
        cfg.n = None if cfg.n is None else int(cfg.n)
        cfg.T, cfg.gamma, cfg.p, cfg.delta = map(float, (cfg.T, cfg.gamma, cfg.p, cfg.delta))
        cfg.t = None if cfg.t is None else float(cfg.t)
        cfg.limit = None if cfg.limit is None else float(cfg.limit)
        cfg.seed, cfg.substeps = int(cfg.seed), int(cfg.substeps)
    except (TypeError, ValueError) as exc:
        raise BadParam(f"bad numeric setting: {exc}") from None
    cfg.validate()
    return cfg


# --- CSV ---------------------------------------------------------------------------------

def read_csv(path: str) -> list[tuple[float, float]]:
    """Read ``time,value`` rows; a non-numeric first row is taken as a header."""
    rows = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for k, rec in enumerate(csv.reader(fh)):
                if not rec or not "".join(rec).strip():
                    continue
                if len(rec) < 2:
                    raise ConfigError(f"{path}:{k + 1}: expected two columns time,value")
                try:
                    rows.append((float(rec[0]), float(rec[1])))
                except ValueError:
                    if rows or k > 0:
                        raise ConfigError(f"{path}:{k + 1}: non-numeric row {rec!r}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return rows


def write_csv(path: str, times, values) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("time,value\n")
        for t, v in zip(times, values):
            fh.write(f"{float(t):.17g},{float(v):.17g}\n")


# --- statistics --------------------------------------------------------------------------

def analyze_series(cfg: RunConfig, series, vol: Optional[VolatilityPath] = None) -> TestReport:
    """Compute ``cfg.statistic`` on the increments; attach oracles when ``vol`` is known."""
    horizon = len(series) / series.n
    t = horizon if cfg.t is None else cfg.t
    inputs = {"statistic": cfg.statistic}
    if cfg.statistic == "gini":
        return gini(series, EvaluationWindow(t, series.n, 2), vol, gamma=cfg.gamma,
                    inputs=inputs)
    if cfg.statistic == "lp_test":
        report, _ = lp_test(series, p=cfg.p, gamma=cfg.gamma, inputs=inputs)
        return report
    if cfg.statistic == "wilcoxon":
        report, _ = wilcoxon(series, cfg.delta, vol, inputs=inputs)
        return report

    H = cfg.make_kernel()
    window = EvaluationWindow(t, series.n, H.d)
    base = {"n": series.n, "t": t, "kernel": H.name, **H.params, **inputs}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg.statistic == "variance":
            var = estimate_variance(H, series, window, workers=cfg.workers)
            report = TestReport(test="variance", statistic=var.v, inputs=base,
                                details={"v1": var.v1, "v2": var.v2, "raw": var.raw,
                                         "floored": var.floored})
            oracle = _oracle(lambda: dict(zip(("v1", "v2"), variance_terms(H, vol, t))), vol)
            if oracle and "v1" in oracle:
                oracle["v"] = oracle["v1"] - oracle["v2"]
        else:
            u = u_statistic(H, series, window, workers=cfg.workers)
            report = TestReport(test="u_stat", statistic=u, inputs=base)
            if cfg.limit is not None:
                st = standardized_statistic(H, series, window, cfg.limit, u=u,
                                            workers=cfg.workers)
                crit = float(norm.ppf(1 - cfg.gamma / 2))
                report.std_error = math.sqrt(st.variance.v / series.n)
                report.p_value = float(2 * norm.sf(abs(st.statistic)))
                report.decision = "reject" if abs(st.statistic) > crit else "fail_to_reject"
                report.level = cfg.gamma
                report.details = {"z": st.statistic, "hypothesised_limit": cfg.limit,
                                  "variance": st.variance.v, "floored": st.floored}
            oracle = _oracle(lambda: {"limit_u": limit_u(H, vol, t)}, vol)
    report.warnings = [str(w.message) for w in caught] + report.warnings
    if oracle:
        report.oracle = oracle
    return report


def _oracle(fn, vol) -> Optional[dict]:
    if vol is None:
        return None
    try:
        return fn()
    except HfuError as exc:
        return {"unavailable": f"{type(exc).__name__}: {exc}"}


# --- subcommands ---------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> dict:
    if cfg.n is None:
        raise BadParam("simulate needs --n")
    spec = cfg.make_spec()
    path = simulate_path(spec, cfg.n, cfg.seed, substeps=cfg.substeps)
    if cfg.emit_csv:
        write_csv(cfg.emit_csv, path.times, path.x_values)
    series = increments(path)
    vol = VolatilityPath.from_path(path)
    report = analyze_series(cfg, series, vol)
    return {"command": "simulate", "model": cfg.model, "model_params": spec.params,
            "n": cfg.n, "seed": cfg.seed, "observations": len(path),
            "csv": cfg.emit_csv, "report": report.to_dict()}


def cmd_analyze(cfg: RunConfig) -> dict:
    if cfg.n is None:
        raise IrregularGrid("IrregularGrid or missing frequency: analyze needs --n")
    if not cfg.input:
        raise ConfigError("analyze needs --input")
    path = ingest_path(read_csv(cfg.input), cfg.n)
    report = analyze_series(cfg, increments(path))
    return {"command": "analyze", "input": cfg.input, "n": cfg.n,
            "observations": len(path), "report": report.to_dict()}


def cmd_mc(cfg: RunConfig) -> dict:
    opts = dict(cfg.mc)
    if "target" not in opts:
        raise ConfigError("mc needs a target (--target or [mc] target)")
    n_values = opts.pop("n_values", None) or ([cfg.n] if cfg.n else [1000])
    if isinstance(n_values, (int, float)):
        n_values = [n_values]
    kernel_params = dict(cfg.kernel_params)
    if cfg.kernel == "lp_power":
        kernel_params.setdefault("p", cfg.p)
    model_params = dict(cfg.model_params)
    model_params.setdefault("horizon", cfg.T)
    try:
        exp = mc_mod.Experiment(
            model=cfg.model, model_params=model_params, kernel=cfg.kernel,
            kernel_params=kernel_params, n_values=tuple(n_values),
            t=cfg.t if cfg.t is not None else cfg.T, gamma=cfg.gamma, p=cfg.p,
            delta=cfg.delta, **opts)
    except TypeError as exc:
        raise BadParam(f"bad mc settings: {exc}") from None
    report = mc_mod.run(exp, workers=cfg.workers)
    if cfg.raw_csv:
        Path(cfg.raw_csv).write_text(report.raw_csv(), encoding="utf-8")
    return {"command": "mc", **report.to_dict()}


def cmd_limits(cfg: RunConfig) -> dict:
    spec = cfg.make_spec()
    n = cfg.n or 1000
    if spec.stochastic_vol:
        vol = VolatilityPath.from_path(simulate_path(spec, n, cfg.seed))
        source = f"simulated volatility path (seed {cfg.seed}, n {n})"
    else:
        vol = VolatilityPath.from_spec(spec, n)
        source = f"deterministic volatility on the grid 1/{n}"
    t = vol.horizon if cfg.t is None else cfg.t
    H = cfg.make_kernel()
    out: dict = {"command": "limits", "model": cfg.model, "model_params": spec.params,
                 "kernel": H.describe(), "t": t, "volatility": source,
                 "limit_u": limit_u(H, vol, t),
                 "gini_limit": gini_limit(vol, t)}
    out["wilcoxon_limit"] = wilcoxon_limit(vol, t) if vol.horizon == 1.0 else None
    try:
        v1, v2 = variance_terms(H, vol, t)
        out["analytic_variance"] = {"v": v1 - v2, "v1": v1, "v2": v2}
    except HfuError as exc:
        out["analytic_variance"] = {"unavailable": f"{type(exc).__name__}: {exc}"}
    return out


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "mc": cmd_mc,
            "limits": cmd_limits}


# --- argument parsing -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hfu", description="U-statistics of high-frequency observations.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--output", "-o", help="write the JSON result here instead of stdout")
    common.add_argument("--n", type=int, help="observations per unit time")
    common.add_argument("--T", type=float, help="time horizon")
    common.add_argument("--t", type=float, help="evaluation time (default: whole sample)")
    common.add_argument("--workers", type=int, help="worker threads (also capped by HFU_THREADS)")
    common.add_argument("--kernel", help="built-in kernel name")
    common.add_argument("--kernel-param", action="append", metavar="KEY=VALUE")
    common.add_argument("--gamma", type=float)
    common.add_argument("--p", type=float, help="exponent of the L^p test")
    common.add_argument("--delta", type=float, help="trim of the change-point search")

    model = _Parser(add_help=False)
    model.add_argument("--model", help=f"one of {', '.join(MODELS)}")
    model.add_argument("--model-param", action="append", metavar="KEY=VALUE",
                       help="model parameter, e.g. sigma=2 or breaks=0.5")
    model.add_argument("--sigma", type=float, help="shortcut for --model-param sigma=...")
    model.add_argument("--seed", type=int)

    stat = _Parser(add_help=False)
    stat.add_argument("--stat", choices=STATISTICS)
    stat.add_argument("--limit", type=float, help="hypothesised limit for u_stat")

    p = sub.add_parser("simulate", parents=[common, model, stat], help="simulate and analyze")
    p.add_argument("--substeps", type=int)
    p.add_argument("--emit-csv", help="write the simulated path as time,value CSV")

    p = sub.add_parser("analyze", parents=[common, stat], help="analyze a CSV path")
    p.add_argument("--input", help="CSV with columns time,value")

    p = sub.add_parser("mc", parents=[common, model], help="Monte Carlo experiment")
    p.add_argument("--target", choices=mc_mod.TARGETS)
    p.add_argument("--replications", type=int)
    p.add_argument("--seed-base", type=int)
    p.add_argument("--n-values", type=lambda s: [int(v) for v in s.split(",")],
                   help="comma separated sample sizes")
    p.add_argument("--x", type=float, help="evaluation point of the empirical cdf")
    p.add_argument("--change-point", type=float)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--budget", type=float)
    p.add_argument("--raw-csv", help="write per-replication statistics as CSV")

    sub.add_parser("limits", parents=[common, model], help="analytic limit functionals")
    return parser


# --- entry point -------------------------------------------------------------------------------

def _clean(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _fail(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError("a subcommand is required: simulate, analyze, mc or limits")
        cfg = build_config(args.command, args)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)

    try:
        result = COMMANDS[args.command](cfg)
        result["config"] = asdict(cfg)
        text = json.dumps(_clean(result), indent=2, sort_keys=True, allow_nan=False)
        if cfg.output:
            Path(cfg.output).write_text(text + "\n", encoding="utf-8")
        else:
            print(text)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except (HfuError, ValueError, ArithmeticError, OSError) as exc:
        return _fail(exc, EXIT_COMPUTE)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
