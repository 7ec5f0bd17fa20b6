"""Time- and frequency-domain augmentation of labeled series.

Frequency-domain edits work on the half spectrum of a real signal under the
``1/N`` normalisation,

    F[k] = (1/N) * sum_t x[t] * exp(-2j*pi*k*t/N),    k = 0 .. ceil((N+1)/2) - 1

and return to the time domain through the conjugate-symmetric full spectrum,
so outputs are always real.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .core import DataError, LabeledSeries

MAX_SEGMENT_DRAWS = 1000


@dataclass(frozen=True)
class Spectrum:
    amplitude: np.ndarray
    phase: np.ndarray
    original_length: int

    def __post_init__(self):
        amp = np.asarray(self.amplitude, dtype=np.float64)
        ph = np.asarray(self.phase, dtype=np.float64)
        if amp.shape != ph.shape or amp.ndim != 1:
            raise ValueError("amplitude and phase must be 1-D and equally long")
        if amp.size != half_length(self.original_length):
            raise ValueError(f"half spectrum of N={self.original_length} has "
                             f"{half_length(self.original_length)} bins, got {amp.size}")
        if np.any(amp < 0):
            raise ValueError("amplitudes must be non-negative")
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "phase", ph)

    def complex(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phase)


@dataclass(frozen=True)
class AugmentPolicy:
    """Which transforms run and how.

    ``magnitude_mean`` is ``"zero"`` or ``"segment-mean"``; it picks the
    centre of the Gaussian that replaces amplitudes in a selected segment.
    """
    flip: bool = True
    downsample: bool = False
    crop: bool = False
    label_expansion: bool = False
    magnitude: bool = True
    phase: bool = True
    downsample_rate: int = 2
    crop_length: Optional[int] = None    # None: largest of 240 and N/2, capped at N
    expand_radius: int = 1
    expand_tolerance: float = 0.5
    ratio: float = 0.05
    segments: int = 1
    magnitude_mean: str = "zero"
    magnitude_var: float = 0.1
    phase_var: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("ratio must lie in (0, 1)")
        if self.segments < 0:
            raise ValueError("segments must be >= 0")
        if self.magnitude_var < 0 or self.phase_var < 0:
            raise ValueError("variances must be >= 0")
        if self.downsample_rate < 2:
            raise ValueError("downsample_rate must be >= 2")
        if self.magnitude_mean not in ("zero", "segment-mean"):
            raise ValueError("magnitude_mean must be 'zero' or 'segment-mean'")
        if self.expand_radius < 0 or self.expand_tolerance < 0:
            raise ValueError("label expansion radii must be >= 0")
        if self.crop_length is not None and self.crop_length < 1:
            raise ValueError("crop_length must be >= 1")

    @property
    def enabled(self) -> Tuple[str, ...]:
        names = ("flip", "downsample", "crop", "label_expansion", "magnitude", "phase")
        return tuple(n for n in names if getattr(self, n))

    @classmethod
    def disabled(cls, **kw) -> "AugmentPolicy":
        off = dict(flip=False, downsample=False, crop=False, label_expansion=False,
                   magnitude=False, phase=False)
        off.update(kw)
        return cls(**off)

    def with_seed(self, seed: int) -> "AugmentPolicy":
        return replace(self, seed=seed)


# -- time domain -------------------------------------------------------------

def flip(s: LabeledSeries) -> LabeledSeries:
    return s.with_values(-s.values)


def downsample(s: LabeledSeries, k: int) -> LabeledSeries:
    """Keep every ``k``-th point starting at 0; labels at other indices are lost."""
    if k < 2:
        raise ValueError("downsample rate must be >= 2")
    n = len(s)
    if n < k:
        raise DataError(f"cannot downsample {n} points at rate {k}")
    idx = np.arange(n // k) * k
    return LabeledSeries.from_arrays(s.values[idx], s.labels[idx], s.timestamps[idx])


def crop(s: LabeledSeries, length: int, rng: np.random.Generator) -> LabeledSeries:
    n = len(s)
    if not 1 <= length <= n:
        raise DataError(f"crop length {length} outside [1, {n}]")
    start = int(rng.integers(0, n - length + 1))
    return s.slice(start, start + length)


def label_expansion(s: LabeledSeries, radius: int, tolerance: float) -> LabeledSeries:
    """Label points close to a labeled anomaly in both time and value."""
    if radius < 0 or tolerance < 0:
        raise ValueError("radius and tolerance must be >= 0")
    x = s.values
    lab = s.labels.copy()
    n = x.size
    for t in np.flatnonzero(s.labels):
        lo, hi = max(0, t - radius), min(n, t + radius + 1)
        lab[lo:hi] |= np.abs(x[lo:hi] - x[t]) <= tolerance
    return s.with_labels(lab)


# -- frequency domain -----------------------------------------------------------

def half_length(n: int) -> int:
    return (n + 2) // 2      # ceil((n+1)/2)


def dft(values) -> Spectrum:
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 1:
        raise ValueError("dft needs at least one sample")
    f = np.fft.rfft(x) / n
    return Spectrum(np.abs(f), np.arctan2(f.imag, f.real), n)


def idft(spec: Spectrum) -> np.ndarray:
    """Invert :func:`dft`; the Hermitian mirror keeps the output real."""
    n = spec.original_length
    f = spec.complex() * n
    f[0] = f[0].real
    if n % 2 == 0:
        f[-1] = f[-1].real
    return np.fft.irfft(f, n)


def segment_length(n_half: int, ratio: float) -> int:
    return max(1, int(round(ratio * n_half)))


def select_segments(n_half: int, ratio: float, count: int,
                    rng: np.random.Generator) -> List[range]:
    """Draw ``count`` bin ranges of length ``round(ratio * n_half)``.

    Starts are uniform on ``[0, n_half - K]``; a draw is rejected when two
    consecutive sorted starts are closer than ``K/2``.
    """
    if count < 1:
        raise ValueError("segment count must be >= 1")
    k = segment_length(n_half, ratio)
    gap = -(-k // 2)
    if k > n_half or (count - 1) * gap + k > n_half:
        raise ValueError(f"{count} segments of length {k} do not fit in {n_half} bins")
    for _ in range(MAX_SEGMENT_DRAWS):
        starts = np.sort(rng.integers(0, n_half - k + 1, size=count))
        if count == 1 or np.all(np.diff(starts) >= k / 2):
            return [range(int(a), int(a) + k) for a in starts]
    raise RuntimeError(f"no valid segment placement after {MAX_SEGMENT_DRAWS} draws")


def magnitude_augment(s: LabeledSeries, policy: AugmentPolicy,
                      rng: np.random.Generator) -> LabeledSeries:
    """Resample amplitudes inside random frequency segments; phases untouched."""
    if policy.segments == 0:
        return s
    spec = dft(s.values)
    amp = spec.amplitude.copy()
    for seg in select_segments(amp.size, policy.ratio, policy.segments, rng):
        idx = np.asarray(seg)
        seg_amp = spec.amplitude[idx]
        mean = seg_amp.mean() if policy.magnitude_mean == "segment-mean" else 0.0
        std = np.sqrt(policy.magnitude_var * seg_amp.var())
        amp[idx] = np.maximum(rng.normal(mean, std, size=idx.size) if std > 0
                              else np.full(idx.size, mean), 0.0)
    return s.with_values(idft(Spectrum(amp, spec.phase, spec.original_length)))


def phase_augment(s: LabeledSeries, policy: AugmentPolicy,
                  rng: np.random.Generator) -> LabeledSeries:
    """Add Gaussian offsets to phases inside random segments.

    The DC bin and, for even lengths, the Nyquist bin keep their phase since
    those coefficients must stay real.
    """
    if policy.segments == 0:
        return s
    spec = dft(s.values)
    n = spec.original_length
    ph = spec.phase.copy()
    fixed = {0} | ({ph.size - 1} if n % 2 == 0 else set())
    sd = np.sqrt(policy.phase_var)
    for seg in select_segments(ph.size, policy.ratio, policy.segments, rng):
        idx = np.array([i for i in seg if i not in fixed], dtype=int)
        if idx.size and sd > 0:
            ph[idx] += rng.normal(0.0, sd, size=idx.size)
    return s.with_values(idft(Spectrum(spec.amplitude, ph, n)))


# -- pool expansion -------------------------------------------------------------

def augment_series(s: LabeledSeries, policy: AugmentPolicy,
                   rng: np.random.Generator) -> List[Tuple[str, LabeledSeries]]:
    """One augmented copy of ``s`` per enabled transform, as ``(name, series)`` pairs.

    Transforms that cannot apply (series shorter than the rate or crop
    length) are skipped.
    """
    out = []
    n = len(s)
    for name in policy.enabled:
        if name == "flip":
            out.append((name, flip(s)))
        elif name == "downsample":
            if n >= policy.downsample_rate:
                out.append((name, downsample(s, policy.downsample_rate)))
        elif name == "crop":
            length = policy.crop_length or min(n, max(240, n // 2))
            if length <= n:
                out.append((name, crop(s, length, rng)))
        elif name == "label_expansion":
            out.append((name, label_expansion(s, policy.expand_radius,
                                              policy.expand_tolerance)))
        elif name == "magnitude":
            out.append((name, magnitude_augment(s, policy, rng)))
        elif name == "phase":
            out.append((name, phase_augment(s, policy, rng)))
    return out
