"""Path simulation and ingestion for continuous Ito semimartingales.

The observed process is

    X_t = x0 + int_0^t a_s ds + int_0^t sigma_s dW_s,

with the volatility itself a continuous Ito semimartingale

    sigma_t = sigma_0 + int a~_s ds + int s~_s dW_s + int v~_s dV_s,

where V is a Brownian motion independent of W. Paths are produced by an
Euler-Maruyama recursion on the observation grid {i/n} (optionally refined by
an integer substep factor) and observed at times i/n.

Gaussian variates come from numpy's counter-based Philox generator. The W, V
and bridge streams are independent children of one ``SeedSequence``, so a
``(spec, n, seed)`` triple always reproduces the same bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import AlphaUnavailable, BadParam, IrregularGrid, NonFinite, TooShort, VolVanished

DEFAULT_VOL_FLOOR = 1e-8


@dataclass(frozen=True)
class ProcessSpec:
    """Coefficients and initial state of the pair (X, sigma).

    Coefficient callables are evaluated on scalars. ``None`` means the
    coefficient is identically zero, which enables vectorised fast paths.
    ``vol_path`` replaces the volatility SDE by a deterministic function of
    time; it is how piecewise-constant (break) models are expressed.
    """

    x0: float = 0.0
    drift: Optional[Callable[[float, float, float], float]] = None
    vol0: float = 1.0
    vol_drift: Optional[Callable[[float, float], float]] = None
    vol_vol_w: Optional[Callable[[float, float], float]] = None
    vol_vol_v: Optional[Callable[[float, float], float]] = None
    horizon: float = 1.0
    vol_path: Optional[Callable[[float], float]] = None
    vol_positive: bool = True
    vol_floor: float = DEFAULT_VOL_FLOOR
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    @property
    def stochastic_vol(self) -> bool:
        return any(f is not None for f in (self.vol_drift, self.vol_vol_w, self.vol_vol_v))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SamplePath:
    n: int
    times: np.ndarray
    x_values: np.ndarray
    sigma_values: Optional[np.ndarray] = None
    seed: Optional[int] = None
    dW: Optional[np.ndarray] = None  # coarse W increments, retained for simulated paths

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def simulated(self) -> bool:
        return self.sigma_values is not None and self.dW is not None

    def __len__(self) -> int:
        return len(self.x_values)


@dataclass(frozen=True)
class IncrementSeries:
    """Scaled increments sqrt(n) * Delta_i X and optional first-order approximants."""

    n: int
    scaled_increments: np.ndarray
    alpha: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.scaled_increments)

    @property
    def raw_increments(self) -> np.ndarray:
        return self.scaled_increments / math.sqrt(self.n)

    @classmethod
    def from_increments(cls, values: Sequence[float], n: int) -> "IncrementSeries":
        """Wrap already scaled increments (mainly for tests and oracles)."""
        return cls(n=int(n), scaled_increments=_frozen(np.asarray(values, dtype=float)))


def grid_size(n: int, horizon: float) -> int:
    """Number of increments floor(n*T), robust to binary rounding of n*T."""
    return int(math.floor(n * horizon + 1e-9))


def _generator(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seq))


def _bridge_split(total: np.ndarray, k: int, step: float, rng: np.random.Generator) -> np.ndarray:
    """Split each coarse Brownian increment into k pieces via the Brownian bridge."""
    out = np.empty((len(total), k))
    remaining = total.copy()
    z = rng.standard_normal((len(total), k - 1))
    for j in range(k - 1):
        r = k - j
        piece = remaining / r + math.sqrt(step * (r - 1) / r) * z[:, j]
        out[:, j] = piece
        remaining = remaining - piece
    out[:, k - 1] = remaining
    return out


def simulate_path(spec: ProcessSpec, n: int, seed: int, substeps: int = 1) -> SamplePath:
    """Simulate X and sigma on the grid {i/n : i = 0..floor(nT)}.

    Parameters
    ----------
    spec : ProcessSpec
    n : int
        Observations per unit time, at least 2.
    seed : int
        Seed of the W/V/bridge streams.
    substeps : int
        Internal Euler steps per observation interval. The coarse Brownian
        increments do not depend on this factor; finer steps are Brownian
        bridge refinements of them, so paths at different substeps share the
        same driving noise at observation times.

    Raises
    ------
    VolVanished
        If ``spec.vol_positive`` and some |sigma| falls below ``spec.vol_floor``.
    NonFinite
        If any state leaves the finite reals.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not spec.horizon > 0:
        raise ValueError("horizon must be positive")
    if substeps < 1:
        raise ValueError("substeps must be a positive integer")
    n = int(n)
    N = grid_size(n, spec.horizon)
    if N < 1:
        raise ValueError("horizon shorter than one observation interval")
    k = int(substeps)
    h = 1.0 / (n * k)

    w_seq, v_seq, b_seq = np.random.SeedSequence(int(seed)).spawn(3)
    dW = _generator(w_seq).standard_normal(N) * math.sqrt(1.0 / n)
    dV = _generator(v_seq).standard_normal(N) * math.sqrt(1.0 / n)
    if k > 1:
        rng_b = _generator(b_seq)
        dw_fine = _bridge_split(dW, k, h, rng_b).ravel()
        dv_fine = _bridge_split(dV, k, h, rng_b).ravel()
    else:
        dw_fine, dv_fine = dW, dV

    steps = N * k
    t_fine = np.arange(steps + 1) * h

    if not spec.stochastic_vol:
        if spec.vol_path is not None:
            sig = np.array([float(spec.vol_path(t)) for t in t_fine])
        else:
            sig = np.full(steps + 1, float(spec.vol0))
        if spec.drift is None:
            x = np.empty(steps + 1)
            x[0] = spec.x0
            np.cumsum(sig[:-1] * dw_fine, out=x[1:])
            x[1:] += spec.x0
        else:
            x = _euler_x(spec, sig, dw_fine, t_fine, h)
    else:
        x, sig = _euler_joint(spec, dw_fine, dv_fine, t_fine, h)

    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(sig))):
        raise NonFinite("simulated state left the finite reals")
    if spec.vol_positive:
        bad = np.flatnonzero(np.abs(sig) < spec.vol_floor)
        if bad.size:
            raise VolVanished(
                f"|sigma| < {spec.vol_floor:g} at t={t_fine[bad[0]]:.6g}")

    times = np.arange(N + 1) / n
    return SamplePath(n=n, times=_frozen(times), x_values=_frozen(x[::k]),
                      sigma_values=_frozen(sig[::k]), seed=int(seed), dW=_frozen(dW))


def _euler_x(spec, sig, dw, t, h):
    x = np.empty(len(sig))
    x[0] = spec.x0
    a = spec.drift
    for i in range(len(dw)):
        x[i + 1] = x[i] + a(t[i], x[i], sig[i]) * h + sig[i] * dw[i]
    return x


def _euler_joint(spec, dw, dv, t, h):
    steps = len(dw)
    x = np.empty(steps + 1)
    sig = np.empty(steps + 1)
    x[0] = spec.x0
    sig[0] = spec.vol0
    a, va, vw, vv = spec.drift, spec.vol_drift, spec.vol_vol_w, spec.vol_vol_v
    floor = spec.vol_floor if spec.vol_positive else -1.0
    for i in range(steps):
        ti, xi, si = t[i], x[i], sig[i]
        dx = si * dw[i]
        if a is not None:
            dx += a(ti, xi, si) * h
        ds = 0.0
        if va is not None:
            ds += va(ti, si) * h
        if vw is not None:
            ds += vw(ti, si) * dw[i]
        if vv is not None:
            ds += vv(ti, si) * dv[i]
        x[i + 1] = xi + dx
        s_next = si + ds
        sig[i + 1] = s_next
        if not math.isfinite(s_next) or abs(s_next) < floor:
            # fail fast; the caller reports the exact error
            sig[i + 2:] = s_next
            x[i + 2:] = x[i + 1]
            break
    return x, sig


def increments(path: SamplePath, with_alpha: bool = False) -> IncrementSeries:
    """Scaled increments sqrt(n)(X_{i/n} - X_{(i-1)/n}), optionally with
    alpha_j = sqrt(n) sigma_{(j-1)/n} Delta_j W."""
    rt = math.sqrt(path.n)
    scaled = rt * np.diff(np.asarray(path.x_values))
    alpha = None
    if with_alpha:
        if not path.simulated:
            raise AlphaUnavailable("alpha requires a simulated path with retained W increments")
        alpha = _frozen(rt * np.asarray(path.sigma_values)[:-1] * np.asarray(path.dW))
    return IncrementSeries(n=path.n, scaled_increments=_frozen(scaled), alpha=alpha)


def ingest_path(rows: Iterable[Sequence[float]], declared_n: int, min_order: int = 2,
                rtol: float = 1e-6) -> SamplePath:
    """Build a SamplePath from observed ``(time, value)`` rows.

    Times must increase with spacing 1/declared_n up to relative tolerance
    ``rtol``. The resulting path has no sigma or W information.
    """
    data = [(float(t), float(v)) for t, v in rows]
    if len(data) < min_order + 1:
        raise TooShort(f"need at least {min_order + 1} observations, got {len(data)}")
    if declared_n is None or int(declared_n) < 1:
        raise IrregularGrid("missing or invalid sampling frequency")
    n = int(declared_n)
    arr = np.asarray(data)
    times, values = arr[:, 0], arr[:, 1]
    steps = np.diff(times)
    dt = 1.0 / n
    if np.any(steps <= 0) or np.any(np.abs(steps - dt) > rtol * dt):
        raise IrregularGrid(f"times are not equidistant with step 1/{n}")
    if not np.all(np.isfinite(values)):
        raise NonFinite("non-finite observation value")
    return SamplePath(n=n, times=_frozen(times), x_values=_frozen(values))


# --- named models -----------------------------------------------------------

def constant_vol(sigma: float = 1.0, drift: float = 0.0, x0: float = 0.0,
                 horizon: float = 1.0) -> ProcessSpec:
    a = None if drift == 0 else (lambda t, x, s, _d=float(drift): _d)
    return ProcessSpec(x0=x0, drift=a, vol0=float(sigma), horizon=horizon,
                       name="constant", params={"sigma": sigma, "drift": drift})


def piecewise_constant_vol(breaks: Sequence[float], sigmas: Sequence[float],
                           x0: float = 0.0, horizon: float = 1.0) -> ProcessSpec:
    """sigma = sigmas[k] on [breaks[k-1], breaks[k]) with breaks[-1] = 0 implicitly."""
    breaks = [float(b) for b in breaks]
    sigmas = [float(s) for s in sigmas]
    if len(sigmas) != len(breaks) + 1:
        raise BadParam("need len(sigmas) == len(breaks) + 1")
    if sorted(breaks) != breaks:
        raise BadParam("breaks must be increasing")
    edges = np.asarray(breaks)
    levels = np.asarray(sigmas)

    def vol_path(t: float) -> float:
        # small tolerance so grid points i/n sitting on a break land on the right side
        return float(levels[np.searchsorted(edges, t + 1e-12, side="right")])

    return ProcessSpec(x0=x0, vol0=sigmas[0], vol_path=vol_path, horizon=horizon,
                       name="piecewise_constant", params={"breaks": breaks, "sigmas": sigmas})


def gbm_vol(sigma0: float = 1.0, vol_of_vol: float = 1.0, rho: float = 1.0,
            x0: float = 0.0, horizon: float = 1.0) -> ProcessSpec:
    """d sigma = vol_of_vol * sigma * (rho dW + sqrt(1 - rho^2) dV).

    With sigma0 = 1, vol_of_vol = 1, rho = 1 this is sigma_t = exp(W_t - t/2).
    """
    if not -1.0 <= rho <= 1.0:
        raise BadParam("rho must lie in [-1, 1]")
    cw = vol_of_vol * rho
    cv = vol_of_vol * math.sqrt(1.0 - rho * rho)
    return ProcessSpec(
        x0=x0, vol0=float(sigma0), horizon=horizon,
        vol_vol_w=(lambda t, s: cw * s) if cw != 0 else None,
        vol_vol_v=(lambda t, s: cv * s) if cv != 0 else None,
        name="gbm_vol",
        params={"sigma0": sigma0, "vol_of_vol": vol_of_vol, "rho": rho})


def ou_vol(sigma0: float = 1.0, kappa: float = 2.0, mean_log: float = 0.0, xi: float = 0.5,
           rho: float = 0.0, x0: float = 0.0, horizon: float = 1.0) -> ProcessSpec:
    """sigma = exp(Y) with dY = kappa(mean_log - Y)dt + xi dB, B = rho W + sqrt(1-rho^2) V,
    written in Ito form for sigma."""
    if not -1.0 <= rho <= 1.0:
        raise BadParam("rho must lie in [-1, 1]")
    cw = xi * rho
    cv = xi * math.sqrt(1.0 - rho * rho)

    def vdrift(t, s):
        return s * (kappa * (mean_log - math.log(s)) + 0.5 * xi * xi)

    return ProcessSpec(
        x0=x0, vol0=float(sigma0), horizon=horizon, vol_drift=vdrift,
        vol_vol_w=(lambda t, s: cw * s) if cw != 0 else None,
        vol_vol_v=(lambda t, s: cv * s) if cv != 0 else None,
        name="ou_vol",
        params={"sigma0": sigma0, "kappa": kappa, "mean_log": mean_log, "xi": xi, "rho": rho})


MODELS = {
    "constant": constant_vol,
    "piecewise_constant": piecewise_constant_vol,
    "gbm_vol": gbm_vol,
    "ou_vol": ou_vol,
}


def make_model(name: str, **params) -> ProcessSpec:
    try:
        factory = MODELS[name]
    except KeyError:
        raise BadParam(f"unknown model {name!r}; expected one of {sorted(MODELS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise BadParam(f"bad parameters for model {name!r}: {exc}") from None
