import json

import numpy as np
import pytest

from decompad.core import LabeledSeries, split_train_test
from decompad.net import NetConfig
from decompad.stream import StreamConfig
from decompad.synthetic import make_corpus, make_series
from decompad.train import (VARIANTS, PipelineConfig, baseline_results, evaluate_batch,
                            evaluation_windows, prepare_dataset, report_for, train_model)

W = 16


def tiny(**kw):
    base = dict(window=W, net=NetConfig(depth=2, base_channels=3, window=W, epochs=1, batch_size=32),
                stream=StreamConfig(buffer=64, window=W), stride=4)
    base.update(kw)
    return PipelineConfig(**base)


@pytest.fixture(scope="module")
def corpus():
    return make_corpus(3, length=160, seed=5)


class Oracle:
    """Scores the last point 1 exactly when its truth label is set."""

    def __init__(self, corpus):
        self.queue = [split_train_test(s)[1].labels.astype(float) for s in corpus]

    def score_windows(self, windows):
        return self.queue.pop(0)


class Const:
    def __init__(self, v):
        self.v = v

    def score_windows(self, windows):
        return np.full(len(windows), self.v)


# -- configuration -------------------------------------------------------------

def test_config_round_trip():
    cfg = tiny(seed=3)
    back = PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_config_rejects_unknown_and_mismatched():
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"nope": 1})
    with pytest.raises(ValueError):
        PipelineConfig(window=16)
    with pytest.raises(ValueError):
        tiny(stride=0)
    with pytest.raises(ValueError):
        tiny(train_source="file")


def test_window_override_propagates():
    cfg = PipelineConfig.from_dict({"window": 48})
    assert cfg.net.window == cfg.stream.window == 48


def test_variants():
    assert set(VARIANTS) == {"raw", "de", "dew", "dewa"}
    cfg = tiny().variant("raw")
    assert not cfg.use_decomposition and not cfg.weighted and not cfg.augmented
    assert tiny().variant("dewa").augmented


# -- datasets ---------------------------------------------------------------------------

@pytest.mark.parametrize("source", ["stream", "batch"])
def test_window_accounting(corpus, source):
    cfg = tiny(train_source=source).variant("de")
    data = prepare_dataset(corpus, cfg)
    half = 80
    per_series = len(range(0, half - W + 1, cfg.stride))
    assert len(data) == data.report["windows"] == 3 * per_series
    assert data.inputs.shape == data.labels.shape == data.weights.shape == (len(data), W)
    assert np.all(data.weights == 1.0)


def test_augmented_pool_counts(corpus):
    cfg = tiny()
    data = prepare_dataset(corpus, cfg)
    counts = data.report["per_transform"]
    assert counts["base"] > 0
    assert set(counts) == {"base", *cfg.augment.enabled}
    for name in cfg.augment.enabled:
        assert counts[name] == counts["base"]
    assert sum(counts.values()) == len(data)
    assert np.all(data.weights >= 1.0)


def test_short_series_skipped(corpus):
    short = LabeledSeries.from_arrays(np.arange(20.0))
    data = prepare_dataset([short] + list(corpus), tiny().variant("de"))
    assert data.report["skipped"] == [0]


def test_dataset_is_deterministic(corpus):
    a = prepare_dataset(corpus, tiny())
    b = prepare_dataset(corpus, tiny())
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.labels, b.labels)


def test_cache_reuse(corpus):
    cache = {}
    a = prepare_dataset(corpus, tiny(), cache)
    assert cache
    b = prepare_dataset(corpus, tiny(), cache)
    assert np.array_equal(a.inputs, b.inputs)


# -- training ------------------------------------------------------------------------

def test_training_never_sees_test_labels(corpus):
    cfg = tiny()
    det_a, _ = train_model(corpus, cfg)
    flipped = []
    for s in corpus:
        lab = s.labels.copy()
        lab[len(s) // 2:] = ~lab[len(s) // 2:]
        flipped.append(LabeledSeries.from_arrays(s.values, lab))
    det_b, _ = train_model(flipped, cfg)
    assert np.array_equal(det_a.net.flat(), det_b.net.flat())


def test_training_is_reproducible(corpus):
    a, ra = train_model(corpus, tiny(seed=2))
    b, rb = train_model(corpus, tiny(seed=2))
    assert np.array_equal(a.net.flat(), b.net.flat())
    assert ra["epoch_loss"] == rb["epoch_loss"]


def test_label_weight_only_when_weighted(corpus):
    _, rep = train_model(corpus, tiny().variant("de"))
    assert rep["beta_label"] == 1.0
    _, rep = train_model(corpus, tiny(net=NetConfig(depth=2, base_channels=3, window=W, epochs=1,
                                                    beta_label=4.0)))
    assert rep["beta_label"] == 4.0
    net = NetConfig(depth=2, base_channels=3, window=W, epochs=1, beta_label=None)
    _, rep = train_model(corpus, tiny(net=net))
    assert 1.0 < rep["beta_label"] <= net.beta_cap


def test_all_series_too_short():
    with pytest.raises(ValueError):
        train_model([LabeledSeries.from_arrays(np.arange(20.0))], tiny())


# -- evaluation --------------------------------------------------------------------

def test_one_prediction_per_test_point():
    s = make_series(np.random.default_rng(0), length=1440)
    res = evaluate_batch(Const(0.1), [s], PipelineConfig())
    assert res[0].predictions.size == 720 and res[0].scores.size == 720


def test_half_probability_flags_everything(corpus):
    res = evaluate_batch(Const(0.5), corpus, tiny())
    assert all(r.predictions.all() for r in res)


def test_perfect_scorer_gets_f1_one(corpus):
    res = evaluate_batch(Oracle(corpus), corpus, tiny())
    assert report_for(res).f1 == 1.0


def test_raw_windows_end_at_each_test_point(corpus):
    cfg = tiny().variant("raw")
    s = corpus[0]
    w = evaluation_windows(s, cfg)
    _, test = split_train_test(s)
    assert w.shape == (len(test), W)
    assert np.array_equal(w[:, -1], test.values)


def test_decomposed_windows_use_train_context(corpus):
    s = corpus[0]
    w = evaluation_windows(s, tiny())
    assert w.shape == (80, W)
    assert np.all(np.isfinite(w)) and np.any(w[0, :-1] != 0)


def test_baseline_threshold_from_train_halves(corpus):
    thr, res = baseline_results(corpus, window=12, min_length=2 * W)
    assert len(res) == 3 and np.isfinite(thr)
    assert all(r.predictions.size == 80 for r in res)
