"""Rolling z-score detector and F1-maximising threshold selection."""

from __future__ import annotations

import numpy as np

from .metrics import confusion_strict


def zscore_scores(values, window: int = 48, min_points: int = 3) -> np.ndarray:
    """``|x_t - mean| / std`` over the ``window`` points before ``t``.

    The current point is excluded from its own statistics. Points with fewer
    than ``min_points`` predecessors, or a zero trailing deviation next to an
    equal value, score 0; a nonzero deviation from a constant history scores
    infinity.
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    c1 = np.concatenate([[0.0], np.cumsum(x)])
    c2 = np.concatenate([[0.0], np.cumsum(x * x)])
    out = np.zeros(n)
    t = np.arange(n)
    lo = np.maximum(0, t - window)
    cnt = t - lo
    ok = cnt >= min_points
    mean = np.where(ok, (c1[t] - c1[lo]) / np.maximum(cnt, 1), 0.0)
    var = np.where(ok, (c2[t] - c2[lo]) / np.maximum(cnt, 1) - mean ** 2, 0.0)
    std = np.sqrt(np.maximum(var, 0.0))
    dev = np.abs(x - mean)
    # cumulative sums lose precision on long flat stretches; treat tiny spreads as zero
    tiny = std <= 1e-12 * (1.0 + np.abs(mean))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = dev / std
    z = np.where(tiny, np.where(dev <= 1e-12 * (1.0 + np.abs(mean)), 0.0, np.inf), z)
    out[ok] = z[ok]
    return out


def baseline_zscore(values, window: int = 48, threshold: float = 3.0) -> np.ndarray:
    """Flag points with ``|x_t - mean| > threshold * std`` over the trailing window."""
    return zscore_scores(values, window) > threshold


def tune_threshold(scores, labels) -> float:
    """Threshold maximising strict F1 of ``scores >= threshold``.

    Candidates are the distinct finite scores; ties go to the higher one.
    Without positive labels the result is ``inf`` (never fire).
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=bool).reshape(-1)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not y.any():
        return float("inf")
    cand = np.unique(s[np.isfinite(s)])
    if cand.size == 0:
        return float("inf")
    # sweep thresholds from high to low with cumulative counts
    order = np.argsort(-s, kind="stable")
    ss, yy = s[order], y[order]
    tp = np.cumsum(yy)
    fp = np.cumsum(~yy)
    total = y.sum()
    best_f1, best_thr = -1.0, float("inf")
    # index of the last occurrence of each distinct value in the sorted order
    last = np.r_[np.flatnonzero(ss[1:] != ss[:-1]), ss.size - 1]
    for i in last:
        thr = ss[i]
        if not np.isfinite(thr):
            continue
        f1 = 2 * tp[i] / (tp[i] + fp[i] + total)
        if f1 > best_f1 + 1e-15:
            best_f1, best_thr = f1, float(thr)
    return best_thr


def f1_at(scores, labels, threshold: float) -> float:
    return confusion_strict(np.asarray(scores) >= threshold, labels).f1
