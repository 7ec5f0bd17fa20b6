import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decompad.augment import (AugmentPolicy, Spectrum, augment_series, crop, dft, downsample,
                              flip, half_length, idft, label_expansion, magnitude_augment,
                              phase_augment, segment_length, select_segments)
from decompad.core import DataError, LabeledSeries


def series(values, labels=None):
    return LabeledSeries.from_arrays(np.asarray(values, dtype=float), labels)


def rand_series(n, seed=0):
    rng = np.random.default_rng(seed)
    return series(rng.normal(size=n), rng.random(n) < 0.1)


# -- time domain -------------------------------------------------------------

def test_flip():
    s = series([1, -2, 3], [0, 1, 0])
    f = flip(s)
    assert f.values.tolist() == [-1, 2, -3]
    assert f.labels.tolist() == [False, True, False]
    assert np.array_equal(flip(f).values, s.values)
    assert np.all(flip(series(np.zeros(4))).values == 0)


def test_downsample():
    lab = np.zeros(10, dtype=bool)
    lab[4] = True
    d = downsample(series(np.arange(10), lab), 2)
    assert d.values.tolist() == [0, 2, 4, 6, 8]
    assert d.labels.tolist() == [False, False, True, False, False]
    lab = np.zeros(10, dtype=bool)
    lab[3] = True
    assert not downsample(series(np.arange(10), lab), 2).labels.any()
    with pytest.raises(DataError):
        downsample(series([1.0]), 2)


def test_crop():
    s = rand_series(10)
    full = crop(s, 10, np.random.default_rng(99))
    assert np.array_equal(full.values, s.values)
    a = crop(s, 5, np.random.default_rng(3))
    b = crop(s, 5, np.random.default_rng(3))
    assert np.array_equal(a.values, b.values) and len(a) == 5
    with pytest.raises(DataError):
        crop(s, 11, np.random.default_rng(0))


def test_crop_samples_with_replacement():
    s = series(np.arange(10))
    rng = np.random.default_rng(0)
    starts = [int(crop(s, 5, rng).values[0]) for _ in range(50)]
    assert len(set(starts)) > 1 and len(set(starts)) < 50


def test_label_expansion():
    x = np.zeros(10)
    x[5], x[6] = 10.0, 10.1
    lab = np.zeros(10, dtype=bool)
    lab[5] = True
    out = label_expansion(series(x, lab), 2, 0.5)
    assert out.labels[6] and out.labels[5] and out.labels.sum() == 2
    x[6] = 3.0
    assert label_expansion(series(x, lab), 2, 0.5).labels.sum() == 1
    assert not label_expansion(series(x), 2, 0.5).labels.any()


# -- spectra -----------------------------------------------------------------

def test_dft_constant():
    spec = dft(np.full(8, 2.5))
    assert spec.amplitude.size == 5
    assert np.allclose(spec.amplitude, [2.5, 0, 0, 0, 0], atol=1e-15)


def test_dft_cosine():
    spec = dft(np.cos(2 * np.pi * np.arange(8) / 8))
    assert abs(spec.amplitude[1] - 0.5) < 1e-12
    assert np.all(np.delete(spec.amplitude, 1) <= 1e-12)


@pytest.mark.parametrize("n", [1, 2, 7, 8, 240, 1440])
def test_half_length(n):
    assert half_length(n) == int(np.ceil((n + 1) / 2))
    assert dft(np.ones(n)).amplitude.size == half_length(n)


@pytest.mark.parametrize("n", [7, 8, 240])
def test_parseval(n):
    x = np.random.default_rng(n).normal(size=n)
    a = dft(x).amplitude
    # bins other than DC and (even n) Nyquist stand for a conjugate pair
    w = np.full(a.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    assert abs(np.sum(x ** 2) - n * np.sum(w * a ** 2)) <= 1e-9 * max(1.0, np.sum(x ** 2))


@settings(max_examples=60)
@given(st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_round_trip(n, seed):
    x = np.random.default_rng(seed).normal(size=n) * 10
    assert np.max(np.abs(idft(dft(x)) - x)) <= 1e-9


def test_idft_zero_and_dc():
    assert np.all(idft(Spectrum(np.zeros(5), np.zeros(5), 8)) == 0)
    amp = np.zeros(4)
    amp[0] = 3.0
    assert np.allclose(idft(Spectrum(amp, np.zeros(4), 7)), 3.0, atol=1e-15)


def test_spectrum_invariants():
    with pytest.raises(ValueError):
        Spectrum(np.zeros(4), np.zeros(4), 8)
    with pytest.raises(ValueError):
        Spectrum(-np.ones(5), np.zeros(5), 8)


# -- segments ----------------------------------------------------------------

def test_segment_length():
    assert segment_length(100, 0.05) == 5
    assert segment_length(10, 0.01) == 1


def test_single_segment_anywhere():
    rng = np.random.default_rng(0)
    for _ in range(100):
        (seg,) = select_segments(100, 0.05, 1, rng)
        assert 0 <= seg.start <= 95 and len(seg) == 5


def test_infeasible_segments():
    with pytest.raises(ValueError):
        select_segments(10, 0.5, 5, np.random.default_rng(0))


@settings(max_examples=50)
@given(st.integers(10, 400), st.floats(0.01, 0.3), st.integers(1, 4), st.integers(0, 1000))
def test_segments_spacing(n_half, ratio, count, seed):
    k = segment_length(n_half, ratio)
    if (count - 1) * -(-k // 2) + k > n_half:
        return
    try:
        segs = select_segments(n_half, ratio, count, np.random.default_rng(seed))
    except RuntimeError:
        return
    starts = [s.start for s in segs]
    assert starts == sorted(starts)
    assert all(b - a >= k / 2 for a, b in zip(starts, starts[1:]))
    assert all(s.stop <= n_half and len(s) == k for s in segs)


# -- magnitude / phase -----------------------------------------------------------

def _changed_bins(before, after):
    return np.flatnonzero(np.abs(before - after) > 1e-9)


def test_magnitude_zero_variance_segment_mean():
    s = rand_series(240)
    pol = AugmentPolicy(magnitude_var=0.0, magnitude_mean="segment-mean", ratio=0.1)
    rng = np.random.default_rng(4)
    (seg,) = select_segments(half_length(240), 0.1, 1, np.random.default_rng(4))
    out = magnitude_augment(s, pol, rng)
    before, after = dft(s.values).amplitude, dft(out.values).amplitude
    idx = np.asarray(seg)
    assert np.allclose(after[idx], before[idx].mean(), atol=1e-9)


def test_magnitude_zero_variance_zero_mean_is_band_stop():
    s = rand_series(240)
    pol = AugmentPolicy(magnitude_var=0.0, magnitude_mean="zero", ratio=0.1)
    (seg,) = select_segments(half_length(240), 0.1, 1, np.random.default_rng(4))
    out = magnitude_augment(s, pol, np.random.default_rng(4))
    assert np.all(dft(out.values).amplitude[np.asarray(seg)] <= 1e-9)


@pytest.mark.parametrize("n", [239, 240])
def test_magnitude_leaves_other_bins_and_phases(n):
    s = rand_series(n, seed=n)
    pol = AugmentPolicy(magnitude_var=2.0, magnitude_mean="segment-mean", segments=2, ratio=0.05)
    segs = select_segments(half_length(n), 0.05, 2, np.random.default_rng(8))
    out = magnitude_augment(s, pol, np.random.default_rng(8))
    assert len(out) == n and np.all(np.isfinite(out.values))
    inside = np.zeros(half_length(n), dtype=bool)
    for seg in segs:
        inside[np.asarray(seg)] = True
    b, a = dft(s.values), dft(out.values)
    assert np.max(np.abs(b.amplitude[~inside] - a.amplitude[~inside])) <= 1e-9
    keep = ~inside
    dphi = np.angle(np.exp(1j * (b.phase[keep] - a.phase[keep])))
    assert np.max(np.abs(dphi)) <= 1e-9
    assert np.array_equal(out.labels, s.labels)


def test_phase_zero_variance_is_identity():
    s = rand_series(240)
    out = phase_augment(s, AugmentPolicy(phase_var=0.0), np.random.default_rng(0))
    assert np.max(np.abs(out.values - s.values)) <= 1e-9


@pytest.mark.parametrize("n", [7, 8, 240, 1440])
def test_phase_preserves_amplitudes(n):
    s = rand_series(n, seed=n)
    pol = AugmentPolicy(phase_var=3.0, ratio=0.4 if n < 20 else 0.05, segments=1)
    out = phase_augment(s, pol, np.random.default_rng(1))
    assert np.isrealobj(out.values) and len(out) == n
    assert np.max(np.abs(dft(out.values).amplitude - dft(s.values).amplitude)) <= 1e-9


def test_phase_dc_and_nyquist_untouched():
    s = rand_series(8)
    pol = AugmentPolicy(phase_var=3.0, ratio=0.99)   # one segment spanning every bin
    out = phase_augment(s, pol, np.random.default_rng(2))
    b, a = dft(s.values).complex(), dft(out.values).complex()
    assert abs(a[0] - b[0]) <= 1e-12 and abs(a[-1] - b[-1]) <= 1e-12
    assert np.max(np.abs(a[1:-1] - b[1:-1])) > 1e-3


# -- pool ----------------------------------------------------------------------------

def test_augment_series_names_and_lengths():
    s = rand_series(480)
    pol = AugmentPolicy(flip=True, downsample=True, crop=True, label_expansion=True,
                        magnitude=True, phase=True)
    out = dict(augment_series(s, pol, np.random.default_rng(0)))
    assert list(out) == ["flip", "downsample", "crop", "label_expansion", "magnitude", "phase"]
    assert len(out["downsample"]) == 240
    assert len(out["crop"]) == 240
    for name in ("flip", "label_expansion", "magnitude", "phase"):
        assert len(out[name]) == 480
    for x in out.values():
        assert x.labels.size == x.values.size


def test_augment_series_reproducible():
    s = rand_series(300)
    a = augment_series(s, AugmentPolicy(), np.random.default_rng(5))
    b = augment_series(s, AugmentPolicy(), np.random.default_rng(5))
    assert all(np.array_equal(x.values, y.values) for (_, x), (_, y) in zip(a, b))


def test_disabled_policy():
    assert augment_series(rand_series(50), AugmentPolicy.disabled(), np.random.default_rng(0)) == []


def test_policy_validation():
    for kw in (dict(ratio=0.0), dict(ratio=1.0), dict(segments=-1), dict(magnitude_var=-1),
               dict(phase_var=-0.1), dict(downsample_rate=1), dict(magnitude_mean="x")):
        with pytest.raises(ValueError):
            AugmentPolicy(**kw)
