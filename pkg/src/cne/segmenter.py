"""Small fully convolutional per-pixel classifier with MC-Dropout sampling.

Architecture: three 3x3 same-padded convolutions with ReLU, spatial dropout
(whole feature channels are dropped), a 1x1 classifier to C channels and a
per-pixel softmax. Dropout sits directly before the classifier, so the J
Monte Carlo runs of ``mc_sample`` share one pass through the conv stack.
"""

import io
import json
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np

from . import kernels
from .raster import argmax_channel, read_tensor, write_tensor
from .rng import derive_seed, generator

_INIT_STREAM = 11
_SPLIT_STREAM = 12
_SHUFFLE_STREAM = 13
_DROPOUT_STREAM = 14

PARAM_ORDER = ("w1", "b1", "w2", "b2", "w3", "b3", "wc", "bc")


class StochasticSegmenter(Protocol):
    """What downstream code needs from a segmenter."""

    num_classes: int

    def forward(self, image, dropout_active=False, rng_seed=0): ...

    def mc_sample(self, image, runs, seed): ...


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    learning_rate: float = 0.05
    batch_size: int = 8
    seed: int = 0
    split: float = 0.8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.split < 1.0:
            raise ValueError("split must lie strictly between 0 and 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class SegModel:
    num_classes: int
    params: dict
    p_drop: float = 0.1
    in_channels: int = 3
    widths: tuple = (16, 16, 16)
    lineage: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.p_drop < 1.0:
            raise ValueError("p_drop must lie in [0, 1)")

    def copy(self):
        return SegModel(self.num_classes, {k: v.copy() for k, v in self.params.items()},
                        self.p_drop, self.in_channels, tuple(self.widths), json.loads(json.dumps(self.lineage)))

    def astype(self, dtype):
        m = self.copy()
        m.params = {k: v.astype(dtype) for k, v in m.params.items()}
        return m

    def forward(self, image, dropout_active=False, rng_seed=0):
        return forward(self, image, dropout_active, rng_seed)

    def mc_sample(self, image, runs, seed):
        return mc_sample(self, image, runs, seed)


def init_model(num_classes, p_drop=0.1, widths=(16, 16, 16), in_channels=3, seed=0):
    """He-normal conv weights, zero biases, all drawn from ``seed``."""
    rng = generator(seed, _INIT_STREAM)
    params = {}
    cin = in_channels
    for k, cout in enumerate(widths, start=1):
        std = np.sqrt(2.0 / (cin * 9))
        params[f"w{k}"] = (rng.standard_normal((cout, cin, 3, 3)) * std).astype(np.float32)
        params[f"b{k}"] = np.zeros(cout, dtype=np.float32)
        cin = cout
    params["wc"] = (rng.standard_normal((num_classes, cin)) * np.sqrt(1.0 / cin)).astype(np.float32)
    params["bc"] = np.zeros(num_classes, dtype=np.float32)
    return SegModel(num_classes=num_classes, params=params, p_drop=float(p_drop),
                    in_channels=in_channels, widths=tuple(widths),
                    lineage={"init_seed": int(seed)})


def _batch(images, model):
    x = np.ascontiguousarray(images, dtype=model.params["w1"].dtype)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != model.in_channels:
        raise ValueError(f"expected {model.in_channels}-channel images, got shape {np.shape(images)}")
    if not np.all(np.isfinite(x)):
        raise ValueError("image contains non-finite values")
    return x


def _features(model, x):
    p = model.params
    cache = [x]
    h = x
    for k in range(1, len(model.widths) + 1):
        h = kernels.conv3x3_forward(h, p[f"w{k}"], p[f"b{k}"])
        np.maximum(h, 0, out=h)
        cache.append(h)
    return h, cache


def _dropout_scale(model, rng, n_images):
    """(N, width) per-channel multipliers: 0 or 1/(1 - p_drop)."""
    width = model.widths[-1]
    dtype = model.params["wc"].dtype
    if model.p_drop == 0.0:
        return np.ones((n_images, width), dtype=dtype)
    keep = rng.random((n_images, width)) >= model.p_drop
    return (keep / (1.0 - model.p_drop)).astype(dtype)


def _head(model, feats, scale=None):
    if scale is not None:
        feats = feats * scale[:, :, None, None]
    logits = np.einsum("kc,nchw->nkhw", model.params["wc"], feats)
    logits += model.params["bc"][None, :, None, None]
    return logits


def softmax_channels(logits, axis=1):
    z = logits - logits.max(axis=axis, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=axis, keepdims=True)
    return z


def forward(model, image, dropout_active=False, rng_seed=0):
    """Softmax probabilities (C, H, W) for one (3, H, W) image.

    With ``dropout_active`` each feature channel before the classifier is
    zeroed with probability ``p_drop`` (survivors scaled by 1/(1-p_drop)),
    drawn from ``rng_seed``; otherwise the output is deterministic.
    """
    x = _batch(image, model)
    feats, _ = _features(model, x)
    scale = _dropout_scale(model, generator(rng_seed), x.shape[0]) if dropout_active else None
    probs = softmax_channels(_head(model, feats, scale))
    return probs[0] if np.ndim(image) == 3 else probs


def predict_mask(model, image):
    """Argmax label mask of the dropout-off forward pass."""
    return argmax_channel(forward(model, image).astype(np.float32))


def mc_sample(model, image, runs, seed):
    """Stack of ``runs`` dropout-active forwards, shape (J, C, H, W).

    Run j draws its dropout mask from ``derive_seed(seed, j)``, so slice j equals
    ``forward(model, image, True, derive_seed(seed, j))``.
    """
    if runs < 1:
        raise ValueError("MC sampling needs at least one run")
    x = _batch(image, model)
    if x.shape[0] != 1:
        raise ValueError("mc_sample takes a single (3, H, W) image")
    feats, _ = _features(model, x)
    out = np.empty((runs, model.num_classes) + x.shape[2:], dtype=np.float32)
    for j in range(runs):
        scale = _dropout_scale(model, generator(derive_seed(seed, j)), 1)
        out[j] = softmax_channels(_head(model, feats, scale))[0]
    return out


def loss_and_grads(model, images, masks, dropout_rng=None):
    """Mean per-pixel cross-entropy and its gradient for every parameter.

    ``dropout_rng`` switches dropout on for the pass (training mode).
    """
    p = model.params
    x = _batch(images, model)
    y = np.asarray(masks)
    if y.ndim == 2:
        y = y[None]
    if y.max(initial=0) >= model.num_classes:
        raise ValueError("mask class id exceeds the model's class count")
    feats, cache = _features(model, x)
    scale = _dropout_scale(model, dropout_rng, x.shape[0]) if dropout_rng is not None else None
    probs = softmax_channels(_head(model, feats, scale))

    n, _, h, w = probs.shape
    count = n * h * w
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, y[:, None].astype(np.intp), 1.0, axis=1)
    picked = np.take_along_axis(probs, y[:, None].astype(np.intp), axis=1)
    loss = float(-np.log(np.maximum(picked.astype(np.float64), 1e-30)).sum() / count)

    g_logits = (probs - onehot) / probs.dtype.type(count)
    dropped = feats if scale is None else feats * scale[:, :, None, None]
    grads = {
        "wc": np.einsum("nkhw,nchw->kc", g_logits, dropped),
        "bc": g_logits.sum(axis=(0, 2, 3)),
    }
    g = np.einsum("kc,nkhw->nchw", p["wc"], g_logits)
    if scale is not None:
        g = g * scale[:, :, None, None]
    for k in range(len(model.widths), 0, -1):
        g = g * (cache[k] > 0)
        g = np.ascontiguousarray(g, dtype=x.dtype)
        gx, grads[f"w{k}"], grads[f"b{k}"] = kernels.conv3x3_backward(
            cache[k - 1], p[f"w{k}"], g, need_input_grad=k > 1)
        g = gx
    grads = {k: np.asarray(v, dtype=p[k].dtype) for k, v in grads.items()}
    return loss, grads


def split_indices(n, fraction, seed):
    """Seeded train/test partition of ``range(n)``; both halves sorted."""
    perm = generator(seed, _SPLIT_STREAM).permutation(n)
    n_train = int(round(fraction * n))
    if n >= 2:
        n_train = min(max(n_train, 1), n - 1)
    else:
        n_train = n
    return sorted(int(i) for i in perm[:n_train]), sorted(int(i) for i in perm[n_train:])


def confusion_counts(pred, truth, num_classes):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    idx = truth.astype(np.int64).ravel() * num_classes + pred.astype(np.int64).ravel()
    return np.bincount(idx, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def iou_from_confusion(conf):
    """Per-class IoU (NaN where a class is absent from both) and their mean."""
    inter = np.diag(conf).astype(np.float64)
    union = conf.sum(axis=0) + conf.sum(axis=1) - inter
    per_class = np.full(len(inter), np.nan)
    present = union > 0
    per_class[present] = inter[present] / union[present]
    mean = float(per_class[present].mean()) if present.any() else float("nan")
    return per_class, mean


def iou(pred, truth, num_classes):
    return iou_from_confusion(confusion_counts(pred, truth, num_classes))


def evaluate_iou(model, samples):
    """Pooled IoU over a list of SceneSample, using dropout-off predictions."""
    conf = np.zeros((model.num_classes, model.num_classes), dtype=np.int64)
    for s in samples:
        conf += confusion_counts(predict_mask(model, s.image), s.mask, model.num_classes)
    return iou_from_confusion(conf)


@dataclass
class TrainResult:
    model: SegModel
    train_iou: float
    test_iou: float
    train_per_class: list
    test_per_class: list
    losses: list


def train(model, samples, cfg):
    """Mini-batch gradient descent on per-pixel cross-entropy with dropout on.

    Returns a new model; the input model is left untouched.
    """
    if not samples:
        raise ValueError("cannot train on an empty dataset")
    for s in samples:
        if s.mask.max(initial=0) >= model.num_classes:
            raise ValueError(f"scene {s.index} uses class ids beyond the model's {model.num_classes}")
    model = model.copy()
    train_idx, test_idx = split_indices(len(samples), cfg.split, cfg.seed)
    train_set = [samples[i] for i in train_idx]
    test_set = [samples[i] for i in test_idx]
    lr = np.float32(cfg.learning_rate)

    losses = []
    for epoch in range(cfg.epochs):
        order = generator(cfg.seed, _SHUFFLE_STREAM, epoch).permutation(len(train_set))
        epoch_loss = 0.0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            chunk = [train_set[i] for i in order[start:start + cfg.batch_size]]
            images = np.stack([s.image for s in chunk])
            masks = np.stack([s.mask for s in chunk])
            loss, grads = loss_and_grads(model, images, masks,
                                         dropout_rng=generator(cfg.seed, _DROPOUT_STREAM, epoch, b))
            for k in PARAM_ORDER:
                model.params[k] -= lr * grads[k]
            epoch_loss += loss * len(chunk)
        losses.append(epoch_loss / len(train_set))

    tr_pc, tr_mean = evaluate_iou(model, train_set)
    if test_set:
        te_pc, te_mean = evaluate_iou(model, test_set)
    else:
        te_pc, te_mean = np.full(model.num_classes, np.nan), float("nan")
    model.lineage = dict(model.lineage, train=asdict(cfg),
                         split={"train": [samples[i].index for i in train_idx],
                                "test": [samples[i].index for i in test_idx]})
    return TrainResult(model, tr_mean, te_mean, _nan_to_none(tr_pc), _nan_to_none(te_pc), losses)


def _nan_to_none(values):
    return [None if np.isnan(v) else float(v) for v in values]


def save_model(model, path):
    """Manifest (JSON bytes as a u8 CNET record) followed by one CNET record per parameter."""
    manifest = {
        "format": "cne-segmodel",
        "version": 1,
        "in_channels": model.in_channels,
        "widths": list(model.widths),
        "num_classes": model.num_classes,
        "p_drop": model.p_drop,
        "params": [[k, list(model.params[k].shape)] for k in PARAM_ORDER],
        "lineage": model.lineage,
    }
    blob = json.dumps(manifest, sort_keys=True).encode()
    buf = io.BytesIO()
    write_tensor(buf, np.frombuffer(blob, dtype=np.uint8))
    for k in PARAM_ORDER:
        write_tensor(buf, np.ascontiguousarray(model.params[k], dtype=np.float32))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_model(path):
    with open(path, "rb") as fh:
        manifest = json.loads(read_tensor(fh).tobytes())
        if manifest.get("format") != "cne-segmodel":
            raise ValueError(f"{path} is not a segmenter model file")
        params = {}
        for name, shape in manifest["params"]:
            t = read_tensor(fh)
            if list(t.shape) != shape:
                raise ValueError(f"parameter {name}: stored shape {t.shape}, manifest says {shape}")
            params[name] = t
    return SegModel(num_classes=manifest["num_classes"], params=params, p_drop=manifest["p_drop"],
                    in_channels=manifest["in_channels"], widths=tuple(manifest["widths"]),
                    lineage=manifest["lineage"])
