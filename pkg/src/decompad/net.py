"""1-D encoder-decoder network with skip connections, written against numpy.

Layout for depth ``D`` and base width ``c``::

    enc l  (l = 0..D-1):  conv(k) -> relu -> [skip l] -> maxpool 2
    dec l  (l = D-1..0):  upsample 2 -> concat skip l -> conv(k) -> relu
    head:                 1x1 conv -> sigmoid

Encoder level ``l`` has ``c * 2**l`` channels, as does the decoder level that
consumes its skip. All arithmetic is float64 so finite differences can check
every gradient.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit


EPS = 1e-7
FORMAT_VERSION = 1
# the logistic saturates to exactly 0 or 1 in double precision; keep outputs open
_P_LO, _P_HI = np.finfo(np.float64).tiny, np.nextafter(1.0, 0.0)


class NumericError(RuntimeError):
    """Training produced a non-finite loss or parameter."""


class ModelFormatError(ValueError):
    """A model file is malformed or its config hash does not match."""


@dataclass(frozen=True)
class NetConfig:
    in_channels: int = 1
    depth: int = 3
    base_channels: int = 16
    kernel: int = 3
    window: int = 240
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 64
    beta_label: Optional[float] = 3.0    # None: neg/pos ratio of the training pool, capped
    beta_cap: float = 50.0
    value_gamma: float = 1.0
    value_scale: float = 1.0
    value_cap: float = 10.0
    init_scale: float = 1.0

    def __post_init__(self):
        if self.depth < 1 or self.base_channels < 1 or self.in_channels < 1:
            raise ValueError("depth, base_channels and in_channels must be >= 1")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.window % (2 ** self.depth):
            raise ValueError(f"window {self.window} not divisible by 2**depth = {2 ** self.depth}")
        if self.lr < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid optimiser settings")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown NetConfig keys: {sorted(extra)}")
        return cls(**d)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _layer_shapes(cfg: NetConfig) -> List[Tuple[str, int, int, int]]:
    """(name, out_channels, in_channels, kernel) in parameter order."""
    widths = [cfg.base_channels * 2 ** l for l in range(cfg.depth)]
    out = []
    cin = cfg.in_channels
    for l, c in enumerate(widths):
        out.append((f"enc{l}", c, cin, cfg.kernel))
        cin = c
    for l in reversed(range(cfg.depth)):
        out.append((f"dec{l}", widths[l], cin + widths[l], cfg.kernel))
        cin = widths[l]
    out.append(("head", 1, cin, 1))
    return out


class Network:
    """Parameters plus the cached activations of the last forward pass."""

    def __init__(self, cfg: NetConfig, params: Optional[Dict[str, np.ndarray]] = None,
                 seed: int = 0):
        self.cfg = cfg
        self.shapes = _layer_shapes(cfg)
        if params is None:
            params = self._init(np.random.default_rng(seed))
        self.params = {}
        for name, o, c, k in self.shapes:
            w = np.array(params[name + ".w"], dtype=np.float64).reshape(o, c, k)
            b = np.array(params[name + ".b"], dtype=np.float64).reshape(o)
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"non-finite parameters in layer {name}")
            self.params[name + ".w"] = w
            self.params[name + ".b"] = b
        self._cache = None

    def _init(self, rng) -> Dict[str, np.ndarray]:
        p = {}
        for name, o, c, k in self.shapes:
            std = self.cfg.init_scale * np.sqrt(2.0 / (c * k))    # He
            p[name + ".w"] = rng.normal(0.0, std, size=(o, c, k))
            p[name + ".b"] = np.zeros(o)
        return p

    @classmethod
    def zeros(cls, cfg: NetConfig) -> "Network":
        p = {}
        for name, o, c, k in _layer_shapes(cfg):
            p[name + ".w"] = np.zeros((o, c, k))
            p[name + ".b"] = np.zeros(o)
        return cls(cfg, p)

    def copy(self) -> "Network":
        return Network(self.cfg, {k: v.copy() for k, v in self.params.items()})

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.param_names])

    @property
    def param_names(self) -> List[str]:
        return [f"{n}.{s}" for n, *_ in self.shapes for s in ("w", "b")]

    # -- forward/backward ----------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Probabilities ``[B, W]`` for inputs ``[B, C, W]`` (or ``[B, W]`` when C = 1)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, None, :]
        cfg = self.cfg
        if x.ndim != 3 or x.shape[1] != cfg.in_channels or x.shape[2] != cfg.window:
            raise ValueError(f"expected input [B, {cfg.in_channels}, {cfg.window}], got {x.shape}")
        cache = {}
        skips = []
        h = x
        for l in range(cfg.depth):
            z, cols = _conv_forward(h, *self._wb(f"enc{l}"))
            a = np.maximum(z, 0.0)
            cache[f"enc{l}"] = (cols, h.shape, z)
            skips.append(a)
            h, arg = _pool_forward(a)
            cache[f"pool{l}"] = (arg, a.shape)
        for l in reversed(range(cfg.depth)):
            u = np.repeat(h, 2, axis=2)
            cat = np.concatenate([u, skips[l]], axis=1)
            z, cols = _conv_forward(cat, *self._wb(f"dec{l}"))
            cache[f"dec{l}"] = (cols, cat.shape, z, h.shape[1])
            h = np.maximum(z, 0.0)
        z, cols = _conv_forward(h, *self._wb("head"))
        cache["head"] = (cols, h.shape)
        p = np.clip(expit(z[:, 0, :]), _P_LO, _P_HI)
        self._cache = cache
        return p

    def backward(self, dz: np.ndarray) -> Dict[str, np.ndarray]:
        """Parameter gradients given ``dL/dlogit`` of shape ``[B, W]``."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        cfg = self.cfg
        cache = self._cache
        grads = {}
        cols, shape = cache["head"]
        dh, grads["head.w"], grads["head.b"] = _conv_backward(
            dz[:, None, :], cols, self.params["head.w"], shape)
        dskips = [None] * cfg.depth
        for l in range(cfg.depth):
            cols, shape, z, c_up = cache[f"dec{l}"]
            dz_l = dh * (z > 0)
            dcat, grads[f"dec{l}.w"], grads[f"dec{l}.b"] = _conv_backward(
                dz_l, cols, self.params[f"dec{l}.w"], shape)
            du, dskips[l] = dcat[:, :c_up], dcat[:, c_up:]
            dh = du[:, :, 0::2] + du[:, :, 1::2]
        for l in reversed(range(cfg.depth)):
            arg, ashape = cache[f"pool{l}"]
            da = _pool_backward(dh, arg, ashape) + dskips[l]
            cols, shape, z = cache[f"enc{l}"]
            dz_l = da * (z > 0)
            dh, grads[f"enc{l}.w"], grads[f"enc{l}.b"] = _conv_backward(
                dz_l, cols, self.params[f"enc{l}.w"], shape)
        return grads

    def _wb(self, name):
        return self.params[name + ".w"], self.params[name + ".b"]

    # -- persistence -----------------------------------------------------------

    def to_json(self, extra: Optional[dict] = None) -> str:
        doc = {
            "format": "rtad",
            "version": FORMAT_VERSION,
            "config": self.cfg.to_dict(),
            "config_hash": self.cfg.hash(),
            "params": {k: {"shape": list(v.shape), "data": [repr(float(a)) for a in v.ravel()]}
                       for k, v in self.params.items()},
        }
        if extra:
            doc["meta"] = extra
        return json.dumps(doc, sort_keys=True, indent=1)

    def save(self, path, extra: Optional[dict] = None) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json(extra))

    @classmethod
    def from_json(cls, text: str, expect: Optional[NetConfig] = None) -> Tuple["Network", dict]:
        try:
            doc = json.loads(text)
            if doc.get("format") != "rtad" or doc.get("version") != FORMAT_VERSION:
                raise ModelFormatError("not a version-1 .rtad model")
            cfg = NetConfig.from_dict(doc["config"])
            params = {k: np.array([float(a) for a in v["data"]]).reshape(v["shape"])
                      for k, v in doc["params"].items()}
        except ModelFormatError:
            raise
        except (ValueError, KeyError, TypeError) as err:
            raise ModelFormatError(f"malformed model file: {err}") from None
        if doc.get("config_hash") != cfg.hash():
            raise ModelFormatError("config hash does not match the stored config")
        if expect is not None and expect.hash() != cfg.hash():
            raise ModelFormatError("model was trained with a different network config")
        return cls(cfg, params), doc.get("meta", {})

    @classmethod
    def load(cls, path, expect: Optional[NetConfig] = None) -> Tuple["Network", dict]:
        with open(path) as fh:
            return cls.from_json(fh.read(), expect)


# -- layers ----------------------------------------------------------------------

def _conv_forward(x, w, b):
    """Same-padded 1-D convolution (cross-correlation) via im2col."""
    B, C, W = x.shape
    O, _, K = w.shape
    p = K // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p))) if p else x
    cols = np.stack([xp[:, :, k:k + W] for k in range(K)], axis=2).reshape(B, C * K, W)
    out = np.matmul(w.reshape(O, C * K), cols) + b[None, :, None]
    return out, cols


def _conv_backward(dout, cols, w, xshape):
    B, C, W = xshape
    O, _, K = w.shape
    p = K // 2
    dw = np.tensordot(dout, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
    db = dout.sum(axis=(0, 2))
    dcols = np.matmul(w.reshape(O, C * K).T, dout).reshape(B, C, K, W)
    dxp = np.zeros((B, C, W + 2 * p))
    for k in range(K):
        dxp[:, :, k:k + W] += dcols[:, :, k]
    return dxp[:, :, p:p + W], dw, db


def _pool_forward(a):
    pairs = a.reshape(a.shape[0], a.shape[1], -1, 2)
    arg = pairs[..., 1] > pairs[..., 0]          # ties go to the left element
    return np.where(arg, pairs[..., 1], pairs[..., 0]), arg


def _pool_backward(dh, arg, shape):
    out = np.zeros(shape[:2] + (shape[2] // 2, 2))
    out[..., 0] = np.where(arg, 0.0, dh)
    out[..., 1] = np.where(arg, dh, 0.0)
    return out.reshape(shape)


# -- loss and weights --------------------------------------------------------------

def weighted_bce_loss(probs, labels, value_weights=None, beta_label: float = 1.0):
    """Weighted mean binary cross-entropy and its gradient with respect to ``probs``.

    ``w = value_weight * (beta_label if label else 1)``; the loss is
    ``sum(w * bce) / sum(w)``. Probabilities are clamped to ``[EPS, 1-EPS]``
    and the gradient is zero where clamping is active.
    """
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    vw = np.ones_like(p) if value_weights is None else np.asarray(value_weights, np.float64)
    if p.shape != y.shape or p.shape != vw.shape:
        raise ValueError("probs, labels and weights must share a shape")
    w = vw * np.where(y > 0.5, beta_label, 1.0)
    total = w.sum()
    if total <= 0:
        raise ValueError("loss weights sum to zero")
    pc = np.clip(p, EPS, 1 - EPS)
    bce = -(y * np.log(pc) + (1 - y) * np.log1p(-pc))
    loss = float((w * bce).sum() / total)
    inside = (p > EPS) & (p < 1 - EPS)
    grad = np.where(inside, w * (-y / pc + (1 - y) / (1 - pc)), 0.0) / total
    return loss, grad


def _loss_and_logit_grad(p, y, w):
    """Same loss as :func:`weighted_bce_loss`, gradient taken at the logits."""
    total = w.sum()
    pc = np.clip(p, EPS, 1 - EPS)
    bce = -(y * np.log(pc) + (1 - y) * np.log1p(-pc))
    inside = (p > EPS) & (p < 1 - EPS)
    dz = np.where(inside, w * (p - y), 0.0) / total
    return float((w * bce).sum() / total), dz


def compute_value_weights(values, gamma: float = 1.0, scale: float = 1.0,
                          cap: float = 10.0, eps: float = 1e-8) -> np.ndarray:
    """``1 + scale * (|x - median| / (1.4826 MAD + eps))**gamma``, capped; last axis is the window."""
    x = np.asarray(values, dtype=np.float64)
    med = np.median(x, axis=-1, keepdims=True)
    dev = np.abs(x - med)
    s = 1.4826 * np.median(dev, axis=-1, keepdims=True) + eps
    with np.errstate(divide="ignore", invalid="ignore"):
        r = dev / s
    if gamma == 0:
        r = np.ones_like(r)
    else:
        r = r ** gamma
    return np.minimum(1.0 + scale * r, cap)


def label_weight(labels, cap: float = 50.0) -> float:
    """Negative/positive ratio of a label pool, capped; 1 when there are no positives."""
    y = np.asarray(labels, dtype=bool)
    pos = int(y.sum())
    if pos == 0:
        return 1.0
    return float(min(cap, (y.size - pos) / pos))


# -- training ---------------------------------------------------------------------

@dataclass
class Batch:
    inputs: np.ndarray          # [B, C, W]
    labels: np.ndarray          # [B, W] bool
    weights: np.ndarray         # [B, W] value weights

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim == 2:
            self.inputs = self.inputs[:, None, :]
        self.labels = np.asarray(self.labels, dtype=bool)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        B, _, W = self.inputs.shape
        if self.labels.shape != (B, W) or self.weights.shape != (B, W):
            raise ValueError("batch dimensions disagree")
        if np.any(self.weights < 0):
            raise ValueError("value weights must be >= 0")

    def __len__(self):
        return self.inputs.shape[0]


def loss_and_grads(net: Network, batch: Batch, beta_label: float = 1.0):
    p = net.forward(batch.inputs)
    y = batch.labels.astype(np.float64)
    w = batch.weights * np.where(batch.labels, beta_label, 1.0)
    loss, dz = _loss_and_logit_grad(p, y, w)
    return loss, net.backward(dz)


class Adam:
    def __init__(self, params: Dict[str, np.ndarray], lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def fit(net: Network, batches: Sequence[Batch], epochs: Optional[int] = None,
        beta_label: float = 1.0, lr: Optional[float] = None,
        rng: Optional[np.random.Generator] = None, shuffle: bool = True,
        callback=None) -> List[float]:
    """Adam over the given batches; returns the per-step loss trace.

    Batch order is reshuffled each epoch from ``rng`` (seeded from 0 when not
    given), so a fixed seed reproduces the trace exactly.
    """
    if not batches:
        raise ValueError("fit needs at least one batch")
    epochs = net.cfg.epochs if epochs is None else epochs
    lr = net.cfg.lr if lr is None else lr
    rng = np.random.default_rng(0) if rng is None else rng
    opt = Adam(net.params, lr=lr)
    trace = []
    for epoch in range(epochs):
        order = rng.permutation(len(batches)) if shuffle else np.arange(len(batches))
        for i in order:
            loss, grads = loss_and_grads(net, batches[i], beta_label)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, step {len(trace)}")
            opt.step(net.params, grads)
            trace.append(loss)
            if callback is not None:
                callback(epoch, len(trace), loss)
    for k, v in net.params.items():
        if not np.all(np.isfinite(v)):
            raise NumericError(f"non-finite parameters in {k} after training")
    return trace


def predict_proba(net: Network, windows: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Per-point probabilities for many windows, evaluated in chunks."""
    windows = np.asarray(windows, dtype=np.float64)
    out = [net.forward(windows[i:i + batch_size]) for i in range(0, len(windows), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, net.cfg.window))


def predict_last(net: Network, window: np.ndarray, threshold: float = 0.5) -> Tuple[float, bool]:
    """Score of the right-most point and whether it reaches ``threshold``."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim == 1:
        w = w[None, :]
    score = float(net.forward(w[None])[0, -1])
    return score, score >= threshold


def predict_last_many(net: Network, windows: np.ndarray, batch_size: int = 256) -> np.ndarray:
    p = predict_proba(net, windows, batch_size)
    return p[:, -1]
