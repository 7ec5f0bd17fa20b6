"""Train a small detector, evaluate it and replay a test half as a stream.

A reduced window and network keep this to a minute or two on one core;
the defaults (window 240, depth 3) are what the acceptance suite uses.

    python demos/train_and_stream.py
"""

import numpy as np

from decompad.core import split_train_test
from decompad.net import NetConfig
from decompad.stream import StreamConfig, StreamDetector
from decompad.synthetic import make_corpus
from decompad.train import PipelineConfig, baseline_results, evaluate_batch, report_for, train_model

W = 48
cfg = PipelineConfig(window=W, stride=2,
                     net=NetConfig(depth=2, base_channels=8, window=W, epochs=5, beta_label=3.0),
                     stream=StreamConfig(window=W, buffer=480))
corpus = make_corpus(6, length=960, seed=2)
cache = {}

for name in ("raw", "dewa"):
    vcfg = cfg.variant(name)
    det, rep = train_model(corpus, vcfg, cache)
    res = report_for(evaluate_batch(det, corpus, vcfg, cache))
    print(f"{name:5s} {rep['windows']:6d} windows, {rep['seconds']:5.0f}s  {res.summary()}")

_, base = baseline_results(corpus, 48, min_length=2 * W)
print(f"z-score baseline       {report_for(base).summary()}")

# stream the last series' test half after seeding with its train half
train, test = split_train_test(corpus[-1])
sd = StreamDetector(det, cfg.stream, history=train.values)
flags = [i for i, v in enumerate(test.values) if sd.push(v).is_anomaly]
print("stream flags:   ", flags)
print("true anomalies: ", np.flatnonzero(test.labels).tolist())
