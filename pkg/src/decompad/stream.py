"""Online decomposition and scoring of one point at a time.

The decomposition is refreshed every ``q`` pushes over the last ``buffer``
raw values, warm-starting the trend solver from the previous solution.
Between refreshes the trend continues with its median recent increment and the
seasonal component is read from a per-phase profile cached at the last
refresh.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Optional, Protocol

import numpy as np

from .core import DEFAULT_WINDOW, LabeledSeries, TimeSeries
from .decompose import (DecomposeConfig, detect_period, robust_trend_filter,
                        seasonal_trend)
from .trend import SolverError, WarmStart, shift_warm_start

MIN_SOLVE_POINTS = 8
EXTRAPOLATE_SPAN = 24    # increments used for the trend slope when there is no period


@dataclass(frozen=True)
class StreamConfig:
    buffer: int = 4 * DEFAULT_WINDOW     # points kept for re-solves
    q: int = 5                           # re-solve every q pushes
    window: int = DEFAULT_WINDOW
    threshold: float = 0.5
    admm_budget: int = 100               # warm ADMM iterations before the interior-point finish
    resolve_iterations: int = 2          # trend/seasonal passes per re-solve, seeded by the cached profile
    decompose: DecomposeConfig = DecomposeConfig()

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.resolve_iterations < 1:
            raise ValueError("resolve_iterations must be >= 1")
        if self.buffer < self.window:
            raise ValueError(f"buffer ({self.buffer}) must be at least the window ({self.window})")

    def exact(self) -> "StreamConfig":
        """Same settings with a re-solve at every point."""
        return replace(self, q=1)


@dataclass
class Components:
    trend: float
    seasonal: float
    remainder: float


@dataclass
class Verdict:
    score: float
    is_anomaly: bool
    components: Components
    warmed_up: bool
    degraded: bool = False
    latency: float = 0.0


class WindowScorer(Protocol):
    def score_windows(self, windows: np.ndarray) -> np.ndarray: ...


class OnlineDecomposer:
    """Keeps the buffer and the latest decomposition of it.

    The period is detected at each re-solve until the buffer first fills and
    then frozen; pass ``DecomposeConfig(period=...)`` or ``periodic=False`` to
    skip detection.
    """

    def __init__(self, cfg: StreamConfig = StreamConfig(), history=None):
        self.cfg = cfg
        dcfg = cfg.decompose
        self._dcfg = replace(dcfg, solver_max_iter=cfg.admm_budget, solver_method="auto",
                             max_iterations=cfg.resolve_iterations)
        self._period = dcfg.period if dcfg.periodic is not False else None
        self._period_frozen = dcfg.period is not None or dcfg.periodic is False
        self._x = np.zeros(0)
        self._t0 = 0                  # global index of _x[0]
        self._trend = np.zeros(0)     # trend over the buffer as of the last solve
        self._seasonal = np.zeros(0)
        self._solved_len = 0          # buffer length at the last solve
        self._warm: Optional[WarmStart] = None
        self._profile: Optional[np.ndarray] = None
        self._since = 0
        self._pending_drop = 0      # points dropped since the last solve
        self.solves = 0
        self.degraded = False
        if history is not None:
            vals = history.values if isinstance(history, (TimeSeries, LabeledSeries)) else history
            vals = np.asarray(vals, dtype=np.float64)[-cfg.buffer:]
            self._x = vals.copy()
            self._t0 = 0
            if self._x.size >= MIN_SOLVE_POINTS:
                self._solve()

    def __len__(self):
        return self._x.size

    @property
    def period(self) -> Optional[int]:
        return self._period

    @property
    def next_index(self) -> int:
        return self._t0 + self._x.size

    def push(self, value: float) -> None:
        value = float(value)
        if not np.isfinite(value):
            raise ValueError("stream values must be finite")
        self._x = np.append(self._x, value)
        drop = self._x.size - self.cfg.buffer
        if drop > 0:
            self._x = self._x[drop:]
            self._t0 += drop
            self._trend = self._trend[drop:]
            self._seasonal = self._seasonal[drop:]
            self._solved_len -= drop
            self._pending_drop += drop
        self._since += 1
        due = self._since >= self.cfg.q or self._solved_len <= 0
        if due and self._x.size >= MIN_SOLVE_POINTS:
            self._solve()

    def _solve(self) -> None:
        x = self._x
        n = x.size
        dcfg = self._dcfg
        if not self._period_frozen:
            est = detect_period(x)
            self._period = est.period if est.periodic else None
            if n >= self.cfg.buffer:
                self._period_frozen = True
        warm = None
        if self._warm is not None:
            try:
                warm = shift_warm_start(self._warm, self._pending_drop, n)
            except ValueError:
                warm = None
        T = self._period
        try:
            if T is not None and n >= 2 * T:
                seasonal0 = None
                if self._profile is not None and self._profile.size == T:
                    seasonal0 = self._profile[(self._t0 + np.arange(n)) % T]
                dec = seasonal_trend(x, T, dcfg, seasonal0=seasonal0, warm=warm)
            else:
                dec = robust_trend_filter(x, dcfg, warm=warm)
            self.degraded = False
        except SolverError:
            # keep the previous solution, extended over the new points
            self.degraded = True
            self._since = 0
            return
        self._trend = dec.trend
        self._seasonal = dec.seasonal
        self._solved_len = n
        self._warm = dec.trend_result.warm if dec.trend_result is not None else None
        self._pending_drop = 0
        if dec.period is not None:
            T = dec.period
            prof = np.zeros(T)
            last = self._t0 + n - 1
            for j in range(T):
                prof[(last - j) % T] = dec.seasonal[n - 1 - j]
            self._profile = prof
        else:
            self._profile = None
        self._since = 0
        self.solves += 1

    def components(self):
        """Trend and seasonal over the whole buffer, extending the last solve."""
        n = self._x.size
        k = self._solved_len
        if k <= 0 or self._trend.size == 0:
            return self._x.copy(), np.zeros(n)
        trend = np.empty(n)
        seasonal = np.empty(n)
        trend[:k] = self._trend[:k]
        seasonal[:k] = self._seasonal[:k]
        if k < n:
            # median increment over the last period: a level shift just
            # absorbed by the trend would otherwise extrapolate as a ramp
            span = self._profile.size if self._profile is not None else EXTRAPOLATE_SPAN
            inc = np.diff(self._trend[max(0, k - span - 1):k])
            step = float(np.median(inc)) if inc.size else 0.0
            trend[k:] = self._trend[k - 1] + step * np.arange(1, n - k + 1)
            if self._profile is not None:
                idx = self._t0 + np.arange(k, n)
                seasonal[k:] = self._profile[idx % self._profile.size]
            else:
                seasonal[k:] = 0.0
        return trend, seasonal

    def remainder(self) -> np.ndarray:
        trend, seasonal = self.components()
        return self._x - trend - seasonal

    def remainder_window(self, width: Optional[int] = None) -> np.ndarray:
        width = self.cfg.window if width is None else width
        return self.remainder()[-width:]

    def last_components(self) -> Components:
        trend, seasonal = self.components()
        return Components(float(trend[-1]), float(seasonal[-1]),
                          float(self._x[-1] - trend[-1] - seasonal[-1]))


class StreamDetector:
    """Per-point verdicts from an online decomposition and a window scorer.

    ``model`` needs a ``score_windows(windows)`` method returning one score
    per row; ``None`` scores everything 0.
    """

    def __init__(self, model: Optional[WindowScorer] = None,
                 cfg: StreamConfig = StreamConfig(), history=None):
        self.cfg = cfg
        self.model = model
        self.decomposer = OnlineDecomposer(cfg, history)

    def swap_model(self, model: Optional[WindowScorer]) -> None:
        self.model = model

    @property
    def warmed_up(self) -> bool:
        return len(self.decomposer) >= self.cfg.window

    def push(self, value: float) -> Verdict:
        start = time.perf_counter()
        d = self.decomposer
        d.push(value)
        comps = d.last_components()
        if not self.warmed_up:
            return Verdict(0.0, False, comps, False, d.degraded, time.perf_counter() - start)
        score = 0.0
        if self.model is not None:
            score = float(self.model.score_windows(d.remainder_window()[None, :])[0])
        return Verdict(score, score >= self.cfg.threshold, comps, True, d.degraded,
                       time.perf_counter() - start)


def stream_remainder_windows(values, cfg: StreamConfig = StreamConfig(), history=None):
    """Remainder window as seen after each push of ``values``.

    Returns an array ``[len(values), W]``; rows whose buffer is still shorter
    than ``W`` are left-padded with zeros.
    """
    dec = OnlineDecomposer(cfg, history)
    vals = np.asarray(values, dtype=np.float64)
    out = np.zeros((vals.size, cfg.window))
    for i, v in enumerate(vals):
        dec.push(v)
        r = dec.remainder_window()
        out[i, cfg.window - r.size:] = r
    return out
