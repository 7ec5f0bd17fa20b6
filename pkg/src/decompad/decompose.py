"""Robust seasonal-trend decomposition.

A series is split as ``x = trend + seasonal + remainder``. Periodic series go
through bilateral denoising, alternating LAD trend / seasonal bilateral
extraction and a final zero-mean adjustment of the seasonal component;
non-periodic series only get the denoised trend filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import LabeledSeries, TimeSeries, mad
from .trend import SolverError, TrendResult, WarmStart, solve_trend

__all__ = [
    "DecomposeConfig", "Decomposition", "PeriodEstimate", "SolverError",
    "adjust", "bilateral_denoise", "decompose", "detect_period",
    "extract_seasonal", "extract_trend", "robust_trend_filter",
    "save_decomposition_csv",
]


@dataclass(frozen=True)
class DecomposeConfig:
    """Knobs of the decomposition.

    ``sigma_i`` and ``seasonal_sigma_i`` default to ``None``, meaning a
    scale-adaptive value of ``1.4826 * MAD`` of the first difference (denoising)
    or of the lag-``period`` difference (seasonal extraction).
    """
    window: int = 2                      # H: half-width of the bilateral windows
    sigma_d: float = 1.0
    sigma_i: Optional[float] = None
    lam1: float = 1.0
    lam2: float = 3.0
    seasonal_neighbors: int = 2          # K_s periods on each side
    seasonal_sigma_d: float = 1.0
    seasonal_sigma_i: Optional[float] = None
    seasonal_sigma_scale: float = 3.0    # multiplies the adaptive seasonal_sigma_i
    max_iterations: int = 5
    tolerance: float = 1e-3
    # gate overrides: period=T forces the seasonal path, periodic=False the trend path
    period: Optional[int] = None
    periodic: Optional[bool] = None
    # trend solver
    rho: float = 1.0
    solver_tol: float = 1e-6
    solver_max_iter: int = 2000          # ADMM budget before the interior-point finish
    solver_method: str = "auto"
    solver_fallback: bool = True

    def __post_init__(self):
        if self.window < 0:
            raise ValueError("window must be >= 0")
        for name in ("sigma_d", "seasonal_sigma_d", "seasonal_sigma_scale", "rho"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("sigma_i", "seasonal_sigma_i"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.lam1 < 0 or self.lam2 < 0:
            raise ValueError("lam1 and lam2 must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.seasonal_neighbors < 1:
            raise ValueError("seasonal_neighbors must be >= 1")
        if self.period is not None and self.period < 2:
            raise ValueError("period must be >= 2")
        if self.solver_method not in ("auto", "admm", "ipm"):
            raise ValueError(f"unknown solver_method {self.solver_method!r}")


@dataclass(frozen=True)
class PeriodEstimate:
    periodic: bool
    period: Optional[int] = None


@dataclass
class Decomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray
    period: Optional[int] = None
    trend_result: Optional[TrendResult] = field(default=None, repr=False)

    def __len__(self):
        return self.trend.size

    def reconstruct(self) -> np.ndarray:
        return self.trend + self.seasonal + self.remainder


# -- periodicity -----------------------------------------------------------

def _moving_average(x: np.ndarray, width: int) -> np.ndarray:
    """Centred moving average, truncated (renormalised) at the ends."""
    width = max(int(width), 1)
    left = width // 2
    right = width - 1 - left
    c = np.concatenate([[0.0], np.cumsum(x)])
    n = x.size
    idx = np.arange(n)
    lo = np.clip(idx - left, 0, n)
    hi = np.clip(idx + right + 1, 0, n)
    return (c[hi] - c[lo]) / (hi - lo)


def _acf(x: np.ndarray) -> np.ndarray:
    """Autocorrelation with the unbiased ``n / (n - lag)`` correction."""
    n = x.size
    x = x - x.mean()
    denom = float(x @ x)
    if denom == 0.0:
        return np.zeros(n)
    f = np.fft.rfft(x, 2 * n)
    r = np.fft.irfft(f * np.conj(f), 2 * n)[:n]
    return r / denom * n / (n - np.arange(n))


def detect_period(values, peak_ratio: float = 3.0, acf_threshold: float = 0.5,
                  n_candidates: int = 5) -> PeriodEstimate:
    """Periodogram peak search confirmed by the autocorrelation.

    A candidate frequency bin must carry at least ``peak_ratio`` times the
    median spectral power. Its period is refined to the autocorrelation local
    maximum within the bin's lag range, after removing slow variation with a
    moving average of the candidate length; the period is accepted when that
    autocorrelation reaches ``acf_threshold``.
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 8:
        raise ValueError(f"period detection needs at least 8 points, got {n}")
    if not np.all(np.isfinite(x)) or np.ptp(x) == 0.0:
        return PeriodEstimate(False)
    t = np.arange(n)
    xd = x - np.polyval(np.polyfit(t, x, 1), t)
    power = np.abs(np.fft.rfft(xd)) ** 2
    spectrum = power[1:]
    med = float(np.median(spectrum))
    if not np.any(spectrum > 0):
        return PeriodEstimate(False)

    bins = np.arange(2, power.size)
    bins = bins[n / bins >= 2]
    order = bins[np.argsort(-power[bins], kind="stable")][:n_candidates]
    for k in order:
        if power[k] < peak_ratio * med:
            break
        p0 = n / k
        lo = max(2, int(np.floor(n / (k + 1))))
        hi = min(n // 2, int(np.ceil(n / (k - 1))) if k > 1 else n // 2)
        if lo > hi:
            continue
        hp = x - _moving_average(x, int(round(p0)))
        acf = _acf(hp)
        best_lag, best_val = None, -np.inf
        for lag in range(lo, hi + 1):
            if lag + 1 >= n:
                break
            if acf[lag] >= acf[lag - 1] and acf[lag] >= acf[lag + 1] and acf[lag] > best_val:
                best_lag, best_val = lag, acf[lag]
        if best_lag is not None and best_val >= acf_threshold:
            return PeriodEstimate(True, int(best_lag))
    return PeriodEstimate(False)


# -- filters ---------------------------------------------------------------

def _value_scale(diffs: np.ndarray, values: np.ndarray) -> float:
    s = 1.4826 * mad(diffs) if diffs.size else 0.0
    if s > 0:
        return s
    # degenerate (e.g. exactly periodic or constant): near-indicator kernel
    return 1e-12 * (1.0 + float(np.max(np.abs(values), initial=0.0)))


def bilateral_denoise(values, cfg: DecomposeConfig = DecomposeConfig()) -> np.ndarray:
    """Edge-preserving smoothing over ``[t-H, t+H]`` (truncated at the ends)."""
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    h = cfg.window
    if n == 0 or h == 0:
        return x.copy()
    sigma_i = cfg.sigma_i if cfg.sigma_i is not None else _value_scale(np.diff(x), x)
    num = np.zeros(n)
    den = np.zeros(n)
    for j in range(-h, h + 1):
        lo, hi = max(0, -j), min(n, n - j)
        if lo >= hi:
            continue
        xj = x[lo + j:hi + j]
        w = np.exp(-j * j / (2 * cfg.sigma_d ** 2) - (x[lo:hi] - xj) ** 2 / (2 * sigma_i ** 2))
        num[lo:hi] += w * xj
        den[lo:hi] += w
    return num / den


def extract_trend(detrend_input, cfg: DecomposeConfig = DecomposeConfig(),
                  warm: Optional[WarmStart] = None) -> np.ndarray:
    """LAD fit with l1 first- and second-difference penalties (see :mod:`decompad.trend`)."""
    return _trend_result(detrend_input, cfg, warm).trend


def _trend_result(y, cfg: DecomposeConfig, warm=None) -> TrendResult:
    return solve_trend(y, cfg.lam1, cfg.lam2, warm=warm, rho=cfg.rho,
                       method=cfg.solver_method, tol_abs=cfg.solver_tol,
                       tol_rel=cfg.solver_tol, max_iter=cfg.solver_max_iter,
                       fallback=cfg.solver_fallback)


def extract_seasonal(detrended, period: int, cfg: DecomposeConfig = DecomposeConfig()) -> np.ndarray:
    """Bilateral average over neighbouring periods.

    ``seasonal[t]`` averages ``y[t + k*T + d]`` for ``k`` in
    ``±1..±seasonal_neighbors`` and ``d`` in ``[-H, H]``, weighting phase
    offset ``d`` and the value distance to ``y[t]``. The current period is
    excluded so a point never explains itself.
    """
    y = np.asarray(detrended, dtype=np.float64)
    n = y.size
    T = int(period)
    if T < 2:
        raise ValueError("period must be >= 2")
    if n < 2 * T:
        raise ValueError(f"seasonal extraction needs two full periods ({2 * T} points), got {n}")
    if cfg.seasonal_sigma_i is not None:
        sigma_i = cfg.seasonal_sigma_i
    else:
        sigma_i = cfg.seasonal_sigma_scale * _value_scale(y[T:] - y[:-T], y)
    h = cfg.window
    ks = [k for k in range(-cfg.seasonal_neighbors, cfg.seasonal_neighbors + 1) if k != 0]
    offsets = [k * T + d for k in ks for d in range(-h, h + 1)]
    phase = np.array([d for k in ks for d in range(-h, h + 1)], dtype=np.float64)

    idx = np.arange(n)[None, :] + np.array(offsets)[:, None]
    valid = (idx >= 0) & (idx < n)
    yj = y[np.clip(idx, 0, n - 1)]
    logw = (-(phase[:, None] ** 2) / (2 * cfg.seasonal_sigma_d ** 2)
            - (yj - y[None, :]) ** 2 / (2 * sigma_i ** 2))
    logw = np.where(valid, logw, -np.inf)
    logw -= logw.max(axis=0, keepdims=True)
    w = np.exp(logw)
    return (w * yj).sum(axis=0) / w.sum(axis=0)


def adjust(trend, seasonal, remainder, values, period: int) -> Decomposition:
    """Move each full period's seasonal mean into the trend and recompute the remainder.

    Windows are aligned at index 0; a trailing partial period is shifted by the
    mean of the last full one. ``remainder`` is accepted for symmetry and
    recomputed as ``values - trend - seasonal``.
    """
    x = np.asarray(values, dtype=np.float64)
    tr = np.array(trend, dtype=np.float64)
    se = np.array(seasonal, dtype=np.float64)
    T = int(period)
    n = x.size
    if not (tr.size == se.size == n == np.asarray(remainder).size):
        raise ValueError("all components must have the input length")
    full = n // T
    m = 0.0
    for k in range(full):
        sl = slice(k * T, (k + 1) * T)
        m = se[sl].mean()
        se[sl] -= m
        tr[sl] += m
    if full * T < n:
        se[full * T:] -= m
        tr[full * T:] += m
    return Decomposition(tr, se, x - tr - se, T)


def robust_trend_filter(values, cfg: DecomposeConfig = DecomposeConfig(),
                        warm: Optional[WarmStart] = None) -> Decomposition:
    x = np.asarray(values, dtype=np.float64)
    if x.size < 3:
        raise ValueError("trend filtering needs at least 3 points")
    res = _trend_result(bilateral_denoise(x, cfg), cfg, warm)
    return Decomposition(res.trend, np.zeros_like(x), x - res.trend, None, res)


def initial_seasonal(values: np.ndarray, period: int) -> np.ndarray:
    """Per-phase median of the series after removing a one-period moving average."""
    x = np.asarray(values, dtype=np.float64)
    T = int(period)
    rough = x - _moving_average(x, T)
    n = x.size
    prof = np.array([np.median(rough[p::T]) for p in range(T)])
    prof -= prof.mean()
    return prof[np.arange(n) % T]


def seasonal_trend(values, period: int, cfg: DecomposeConfig = DecomposeConfig(),
                   seasonal0: Optional[np.ndarray] = None,
                   warm: Optional[WarmStart] = None) -> Decomposition:
    """Alternating trend/seasonal extraction for a known period, then adjustment."""
    x = np.asarray(values, dtype=np.float64)
    T = int(period)
    d = bilateral_denoise(x, cfg)
    seasonal = initial_seasonal(d, T) if seasonal0 is None else np.asarray(seasonal0, float)
    scale = max(1.4826 * mad(x), float(np.std(x)), 1e-12)
    res = None
    trend = None
    for _ in range(cfg.max_iterations):
        # only the first pass takes the caller's warm start; later passes move
        # the target by whole seasonal profiles, where cold solves are faster
        res = _trend_result(d - seasonal, cfg, warm if res is None else None)
        new_seasonal = extract_seasonal(d - res.trend, T, cfg)
        change = np.max(np.abs(new_seasonal - seasonal))
        if trend is not None:
            change = max(change, np.max(np.abs(res.trend - trend)))
        trend, seasonal = res.trend, new_seasonal
        if change < cfg.tolerance * scale:
            break
    out = adjust(trend, seasonal, x - trend - seasonal, x, T)
    out.trend_result = res
    return out


def decompose(s, cfg: DecomposeConfig = DecomposeConfig()) -> Decomposition:
    """Gate on periodicity and run the seasonal or the trend-only path.

    ``s`` may be a :class:`TimeSeries`, :class:`LabeledSeries` or array.
    """
    x = np.asarray(s.values if isinstance(s, (TimeSeries, LabeledSeries)) else s,
                   dtype=np.float64)
    if x.size < 8:
        raise ValueError(f"decomposition needs at least 8 points, got {x.size}")
    if cfg.periodic is False:
        est = PeriodEstimate(False)
    elif cfg.period is not None:
        est = PeriodEstimate(True, cfg.period)
    else:
        est = detect_period(x)
    if not est.periodic or x.size < 2 * est.period:
        return robust_trend_filter(x, cfg)
    return seasonal_trend(x, est.period, cfg)


def save_decomposition_csv(s, dec: Decomposition, path) -> None:
    """Write ``timestamp,input,trend,seasonal,remainder``."""
    ts = s.timestamps if hasattr(s, "timestamps") else np.arange(len(dec))
    x = s.values if hasattr(s, "values") else np.asarray(s)
    lines = ["timestamp,input,trend,seasonal,remainder"]
    for i in range(len(dec)):
        lines.append(f"{int(ts[i])},{float(x[i])!r},{float(dec.trend[i])!r},"
                     f"{float(dec.seasonal[i])!r},{float(dec.remainder[i])!r}")
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


