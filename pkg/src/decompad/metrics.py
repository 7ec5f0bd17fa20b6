"""Point-wise and lag-tolerant precision / recall / F1."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be >= 0")

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)


def _ratio(a: int, b: int) -> float:
    return a / b if b > 0 else 0.0


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=bool).reshape(-1)
    truth = np.asarray(truth, dtype=bool).reshape(-1)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions, {truth.size} labels")
    return pred, truth


def confusion_strict(pred, truth) -> Confusion:
    pred, truth = _pair(pred, truth)
    return Confusion(int(np.sum(pred & truth)), int(np.sum(pred & ~truth)),
                     int(np.sum(~pred & truth)))


def relaxed_matches(pred, truth, m: int = 3):
    """One-to-one (prediction, truth) pairs with ``|p - t| <= m``.

    Predictions are scanned left to right and each takes the earliest still
    unmatched truth in ``[p - m, p + m]``. Since every window has the same
    width, this yields a maximum matching.
    """
    if m < 0:
        raise ValueError("lag m must be >= 0")
    pred, truth = _pair(pred, truth)
    ts = np.flatnonzero(truth)
    pairs = []
    j = 0                       # first truth not yet matched or passed
    for p in np.flatnonzero(pred):
        while j < ts.size and ts[j] < p - m:
            j += 1
        if j < ts.size and ts[j] <= p + m:
            pairs.append((int(p), int(ts[j])))
            j += 1
    return pairs


def confusion_relaxed(pred, truth, m: int = 3) -> Confusion:
    pred, truth = _pair(pred, truth)
    tp = len(relaxed_matches(pred, truth, m))
    return Confusion(tp, int(pred.sum()) - tp, int(truth.sum()) - tp)


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    f1: float
    relaxed_precision: float
    relaxed_recall: float
    relaxed_f1: float
    strict: Confusion
    relaxed: Confusion
    m: int = 3

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(tp=self.strict.tp, fp=self.strict.fp, fn=self.strict.fn)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def summary(self) -> str:
        return (f"P={self.precision:.3f} R={self.recall:.3f} F1={self.f1:.3f} "
                f"relaxed F1(m={self.m})={self.relaxed_f1:.3f}")


def micro_aggregate(strict: Sequence[Confusion], relaxed: Sequence[Confusion] = None,
                    m: int = 3) -> MetricReport:
    """Sum counts over series, then compute the ratios (0 when a denominator is 0).

    ``relaxed`` defaults to ``strict`` so a single list gives a plain report.
    """
    strict = list(strict)
    if not strict:
        raise ValueError("nothing to aggregate")
    relaxed = strict if relaxed is None else list(relaxed)
    if len(relaxed) != len(strict):
        raise ValueError("strict and relaxed lists differ in length")
    s = sum(strict, Confusion())
    r = sum(relaxed, Confusion())
    return MetricReport(s.precision, s.recall, s.f1, r.precision, r.recall, r.f1, s, r, m)


def evaluate(preds: Iterable, truths: Iterable, m: int = 3) -> MetricReport:
    """Micro-averaged report over paired prediction/label sequences."""
    strict, relaxed = [], []
    for p, t in zip(preds, truths):
        strict.append(confusion_strict(p, t))
        relaxed.append(confusion_relaxed(p, t, m))
    return micro_aggregate(strict, relaxed, m)
