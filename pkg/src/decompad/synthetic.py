"""Synthetic labeled series: trend, daily-style seasonality, level shifts, spikes."""

from __future__ import annotations

import os
from typing import List, Optional

import numpy as np

from .core import LabeledSeries, save_csv


def make_series(rng: np.random.Generator, length: int = 1440, period: int = 24,
                anomaly_rate: float = 0.01, n_shifts: Optional[int] = None,
                noise: Optional[float] = None) -> LabeledSeries:
    """One series with labeled point anomalies.

    Level shifts are structural and stay unlabeled; anomalies are single-point
    spikes (occasionally two adjacent points) of 4 to 8 noise standard
    deviations in either direction.
    """
    t = np.arange(length)
    sigma = rng.uniform(0.3, 1.5) if noise is None else noise
    amp = rng.uniform(4.0, 10.0) * sigma
    # peaked daily shape: a sine plus a narrower harmonic bump
    phase = rng.uniform(0, 2 * np.pi)
    ang = 2 * np.pi * t / period + phase
    shape = np.sin(ang) + 0.6 * np.maximum(np.sin(ang), 0) ** 4 + 0.3 * np.sin(2 * ang + 1.0)
    seasonal = amp * shape / np.abs(shape).max()
    trend = rng.uniform(-0.01, 0.01) * t * sigma + np.cumsum(rng.normal(0, 0.02 * sigma, length))
    if n_shifts is None:
        n_shifts = int(rng.integers(1, 4))
    for _ in range(n_shifts):
        at = int(rng.integers(length // 10, length - length // 10))
        trend[at:] += rng.choice([-1, 1]) * rng.uniform(5.0, 15.0) * sigma
    x = trend + seasonal + rng.normal(0, sigma, length)

    labels = np.zeros(length, dtype=bool)
    n_anom = max(1, int(round(anomaly_rate * length)))
    placed = 0
    while placed < n_anom:
        i = int(rng.integers(period, length))
        if labels[max(0, i - 3):i + 4].any():
            continue
        width = 2 if rng.random() < 0.2 and i + 1 < length else 1
        mag = rng.choice([-1, 1]) * rng.uniform(4.0, 8.0) * sigma
        x[i:i + width] += mag
        labels[i:i + width] = True
        placed += width
    return LabeledSeries.from_arrays(x, labels)


def make_corpus(n_series: int = 20, length: int = 1440, period: int = 24,
                anomaly_rate: float = 0.01, seed: int = 0) -> List[LabeledSeries]:
    rng = np.random.default_rng(seed)
    return [make_series(rng, length, period, anomaly_rate) for _ in range(n_series)]


def write_corpus(directory, corpus: List[LabeledSeries], prefix: str = "series") -> List[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, s in enumerate(corpus):
        p = os.path.join(directory, f"{prefix}_{i:03d}.csv")
        save_csv(s, p)
        paths.append(p)
    return paths
