"""Training and evaluation pipeline.

decompose train half -> remainder -> augment -> sliding windows -> fit, and
for evaluation the online decomposition of each test half with context
crossing into its train half.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .augment import AugmentPolicy, augment_series
from .baseline import tune_threshold, zscore_scores
from .core import (DEFAULT_WINDOW, LabeledSeries, robust_standardize,
                   sliding_windows, split_train_test)
from .decompose import DecomposeConfig, decompose
from .metrics import MetricReport, evaluate
from .net import (Batch, NetConfig, Network, compute_value_weights, fit,
                  label_weight, predict_last_many)
from .stream import StreamConfig, stream_remainder_windows

log = logging.getLogger(__name__)

VARIANTS = {
    "raw": dict(use_decomposition=False, weighted=False, augmented=False),
    "de": dict(use_decomposition=True, weighted=False, augmented=False),
    "dew": dict(use_decomposition=True, weighted=True, augmented=False),
    "dewa": dict(use_decomposition=True, weighted=True, augmented=True),
}


@dataclass(frozen=True)
class PipelineConfig:
    decompose: DecomposeConfig = DecomposeConfig()
    augment: AugmentPolicy = AugmentPolicy()
    net: NetConfig = NetConfig()
    stream: StreamConfig = StreamConfig()
    window: int = DEFAULT_WINDOW
    stride: int = 1
    seed: int = 0
    use_decomposition: bool = True
    weighted: bool = True
    augmented: bool = True
    standardize: bool = True
    threshold: float = 0.5
    m: int = 3
    # "stream": train on the same online remainder windows the detector sees
    # when scoring; "batch": window one decomposition of the whole train half
    train_source: str = "stream"

    def __post_init__(self):
        if self.window != self.net.window:
            raise ValueError(f"window {self.window} differs from the network window {self.net.window}")
        if self.window != self.stream.window:
            raise ValueError(f"window {self.window} differs from the stream window {self.stream.window}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.train_source not in ("stream", "batch"):
            raise ValueError(f"unknown train_source {self.train_source!r}")

    def variant(self, name: str) -> "PipelineConfig":
        return replace(self, **VARIANTS[name])

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if "window" in d:
            # a top-level window sizes the network and the stream unless they say otherwise
            for key in ("net", "stream"):
                if key not in d or isinstance(d[key], dict):
                    d[key] = dict(d.get(key, {}))
                    d[key].setdefault("window", d["window"])
            st = d["stream"]
            if "buffer" not in st:
                st["buffer"] = max(StreamConfig.buffer, st["window"])
        sub = {"decompose": DecomposeConfig, "augment": AugmentPolicy, "net": NetConfig}
        kw = {}
        for key, typ in sub.items():
            if key in d:
                kw[key] = _build(typ, d.pop(key), key)
        if "stream" in d:
            st = dict(d.pop("stream"))
            dec = kw.get("decompose", DecomposeConfig())
            if "decompose" in st:
                dec = _build(DecomposeConfig, st.pop("decompose"), "stream.decompose")
            kw["stream"] = replace(_build(StreamConfig, st, "stream"), decompose=dec)
        elif "decompose" in kw:
            kw["stream"] = replace(StreamConfig(), decompose=kw["decompose"])
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw.update(d)
        return cls(**kw)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def _build(typ, d, where):
    if not isinstance(d, dict):
        raise ValueError(f"{where} must be a mapping")
    names = {f.name for f in fields(typ)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {where} keys: {sorted(unknown)}")
    return typ(**d)


# -- scoring ----------------------------------------------------------------

class Detector:
    """A trained network plus the window preprocessing it was trained with."""

    def __init__(self, net: Network, standardize: bool = True):
        self.net = net
        self.standardize = standardize

    def prepare(self, windows: np.ndarray) -> np.ndarray:
        w = np.asarray(windows, dtype=np.float64)
        return robust_standardize(w) if self.standardize else w

    def score_windows(self, windows: np.ndarray) -> np.ndarray:
        return predict_last_many(self.net, self.prepare(windows)[:, None, :])


# -- datasets ---------------------------------------------------------------

@dataclass
class Dataset:
    inputs: np.ndarray              # [N, W], network-ready
    labels: np.ndarray              # [N, W]
    weights: np.ndarray             # [N, W]
    origin: List[str]               # "base" or the transform name, per window
    report: dict = field(default_factory=dict)

    def __len__(self):
        return self.inputs.shape[0]

    def batches(self, batch_size: int, rng: np.random.Generator) -> List[Batch]:
        order = rng.permutation(len(self))
        return [Batch(self.inputs[idx, None, :], self.labels[idx], self.weights[idx])
                for idx in np.array_split(order, max(1, -(-len(self) // batch_size)))]


def _key(s: LabeledSeries, cfg) -> str:
    h = hashlib.sha256(s.values.tobytes())
    h.update(json.dumps(_plain(asdict(cfg)), sort_keys=True).encode())
    return h.hexdigest()


def train_component(s: LabeledSeries, cfg: PipelineConfig,
                    cache: Optional[dict] = None) -> LabeledSeries:
    """Series the network sees for a train half: its remainder, or itself for raw input."""
    if not cfg.use_decomposition:
        return s
    key = ("dec", _key(s, cfg.decompose))
    if cache is not None and key in cache:
        return cache[key]
    rem = s.with_values(decompose(s, cfg.decompose).remainder)
    if cache is not None:
        cache[key] = rem
    return rem


def train_windows(s: LabeledSeries, cfg: PipelineConfig,
                  cache: Optional[dict] = None) -> np.ndarray:
    """Online remainder windows over a train half, one per index from ``W - 1`` on."""
    key = ("train", _key(s, cfg.stream))
    if cache is not None and key in cache:
        return cache[key]
    wins = stream_remainder_windows(s.values, cfg.stream)[cfg.window - 1:]
    if cache is not None:
        cache[key] = wins
    return wins


# transforms that keep a window's length apply window by window
_PER_WINDOW = ("flip", "label_expansion", "magnitude", "phase")


def _window_pools(train: LabeledSeries, cfg: PipelineConfig, cache, rng):
    W = cfg.window
    if cfg.use_decomposition and cfg.train_source == "stream":
        wins = train_windows(train, cfg, cache)[::cfg.stride]
        labs = np.lib.stride_tricks.sliding_window_view(train.labels, W)[::cfg.stride]
        pools = {"base": (wins, labs)}
        if cfg.augmented:
            names = [n for n in cfg.augment.enabled if n in _PER_WINDOW]
            skipped = sorted(set(cfg.augment.enabled) - set(names))
            if skipped:
                log.warning("per-window augmentation skips %s", ", ".join(skipped))
            out = {n: ([], []) for n in names}
            for x, y in zip(wins, labs):
                for name, aug in augment_series(LabeledSeries.from_arrays(x, y),
                                                replace(cfg.augment, **{k: False for k in skipped}),
                                                rng):
                    out[name][0].append(aug.values)
                    out[name][1].append(aug.labels)
            for name, (xs, ys) in out.items():
                pools[name] = (np.asarray(xs).reshape(-1, W), np.asarray(ys, dtype=bool).reshape(-1, W))
        return pools
    comp = train_component(train, cfg, cache)
    series = [("base", comp)]
    if cfg.augmented:
        series += augment_series(comp, cfg.augment, rng)
    pools = {}
    for name, ser in series:
        views = list(sliding_windows(ser, W, cfg.stride))
        pools[name] = (np.array([v.take(ser.values) for v in views]).reshape(-1, W),
                       np.array([v.take(ser.labels) for v in views], dtype=bool).reshape(-1, W))
    return pools


def prepare_dataset(corpus: Sequence[LabeledSeries], cfg: PipelineConfig,
                    cache: Optional[dict] = None) -> Dataset:
    """Window the train halves (and their augmented copies) of a corpus.

    Series shorter than two windows are skipped and listed in the report.
    """
    W = cfg.window
    rng = np.random.default_rng(cfg.seed)
    xs, ys, origin = [], [], []
    counts: Dict[str, int] = {"base": 0}
    skipped = []
    for i, s in enumerate(corpus):
        if len(s) < 2 * W:
            log.warning("series %d has %d points, needs %d; skipped", i, len(s), 2 * W)
            skipped.append(i)
            continue
        train, _ = split_train_test(s)
        for name, (x, y) in _window_pools(train, cfg, cache, rng).items():
            counts[name] = counts.get(name, 0) + len(x)
            xs.append(x)
            ys.append(y)
            origin.extend([name] * len(x))
    x = np.concatenate(xs) if xs else np.zeros((0, W))
    y = np.concatenate(ys) if ys else np.zeros((0, W), dtype=bool)
    x = robust_standardize(x) if (cfg.standardize and len(x)) else x
    if cfg.weighted and len(x):
        w = compute_value_weights(x, cfg.net.value_gamma, cfg.net.value_scale, cfg.net.value_cap)
    else:
        w = np.ones_like(x)
    report = {
        "windows": int(len(x)),
        "per_transform": counts,
        "skipped": skipped,
        "positive_points": int(y.sum()),
        "points": int(y.size),
    }
    return Dataset(x, y, w, origin, report)


def train_model(corpus: Sequence[LabeledSeries], cfg: PipelineConfig,
                cache: Optional[dict] = None, data: Optional[Dataset] = None):
    """Fit a network on the corpus' train halves. Returns ``(Detector, report)``."""
    t0 = time.perf_counter()
    data = prepare_dataset(corpus, cfg, cache) if data is None else data
    if len(data) == 0:
        raise ValueError("no training windows: every series is too short")
    rng = np.random.default_rng(cfg.seed)
    beta = 1.0
    if cfg.weighted:
        beta = cfg.net.beta_label if cfg.net.beta_label is not None else \
            label_weight(data.labels, cfg.net.beta_cap)
    net = Network(cfg.net, seed=cfg.seed)
    batches = data.batches(cfg.net.batch_size, rng)
    trace = fit(net, batches, beta_label=beta, rng=rng)
    report = dict(data.report)
    epoch_len = len(batches)
    report.update({
        "beta_label": beta,
        "epochs": cfg.net.epochs,
        "steps": len(trace),
        "epoch_loss": [float(np.mean(trace[i:i + epoch_len])) for i in range(0, len(trace), epoch_len)],
        "seconds": time.perf_counter() - t0,
    })
    return Detector(net, cfg.standardize), report


# -- evaluation ---------------------------------------------------------------

@dataclass
class SeriesResult:
    scores: np.ndarray
    predictions: np.ndarray
    labels: np.ndarray


def evaluation_windows(s: LabeledSeries, cfg: PipelineConfig,
                 cache: Optional[dict] = None) -> np.ndarray:
    """One input window per test-half index, context crossing into the train half."""
    train, test = split_train_test(s)
    W = cfg.window
    if not cfg.use_decomposition:
        x = s.values
        h = len(train)
        idx = np.arange(h, len(s))
        lo = idx - W + 1
        if lo.min() < 0:
            raise ValueError("train half shorter than the window")
        return np.lib.stride_tricks.sliding_window_view(x, W)[lo]
    key = ("test", _key(s, cfg.stream))
    if cache is not None and key in cache:
        return cache[key]
    hist = train.values[-cfg.stream.buffer:]
    wins = stream_remainder_windows(test.values, cfg.stream, history=hist)
    if cache is not None:
        cache[key] = wins
    return wins


def evaluate_batch(model, corpus: Sequence[LabeledSeries], cfg: PipelineConfig,
                   cache: Optional[dict] = None) -> List[SeriesResult]:
    """Last-point scores for every test-half index of every series."""
    out = []
    for s in corpus:
        if len(s) < 2 * cfg.window:
            continue
        _, test = split_train_test(s)
        wins = evaluation_windows(s, cfg, cache)
        scores = model.score_windows(wins)
        out.append(SeriesResult(scores, scores >= cfg.threshold, test.labels.copy()))
    return out


def report_for(results: Sequence[SeriesResult], m: int = 3) -> MetricReport:
    return evaluate([r.predictions for r in results], [r.labels for r in results], m)


def baseline_results(corpus: Sequence[LabeledSeries], window: int = 48, m: int = 3,
                     min_length: int = 2 * DEFAULT_WINDOW):
    """Rolling z-score with a threshold tuned on the train halves.

    Returns ``(threshold, [SeriesResult])`` for the test halves.
    """
    train_scores, train_labels, per = [], [], []
    for s in corpus:
        if len(s) < min_length:
            continue
        train, test = split_train_test(s)
        z = zscore_scores(s.values, window)
        h = len(train)
        train_scores.append(z[:h])
        train_labels.append(train.labels)
        per.append((z[h:], test.labels))
    thr = tune_threshold(np.concatenate(train_scores), np.concatenate(train_labels))
    return thr, [SeriesResult(z, z >= thr, lab.copy()) for z, lab in per]
