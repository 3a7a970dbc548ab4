"""MC-Dropout statistics, per-class uncertainty, mask rendering and calibration error."""

import math
from dataclasses import dataclass

import numpy as np

from .raster import argmax_channel, as_tensor, reduce_mean_std_axis

# Fixed class palette (RGB). Index = class id; 64 entries.
PALETTE = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 212), (0, 128, 128), (220, 190, 255),
    (170, 110, 40), (255, 250, 200), (128, 0, 0), (170, 255, 195),
    (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
    (255, 255, 255), (0, 0, 0), (100, 40, 20), (20, 100, 40),
    (40, 20, 100), (200, 100, 100), (100, 200, 100), (100, 100, 200),
    (200, 200, 100), (200, 100, 200), (100, 200, 200), (60, 60, 60),
    (190, 190, 190), (255, 128, 0), (0, 255, 128), (128, 0, 255),
    (255, 0, 128), (128, 255, 0), (0, 128, 255), (96, 0, 0),
    (0, 96, 0), (0, 0, 96), (96, 96, 0), (0, 96, 96),
    (96, 0, 96), (255, 160, 160), (160, 255, 160), (160, 160, 255),
    (220, 220, 0), (0, 220, 220), (220, 0, 220), (140, 70, 0),
    (0, 140, 70), (70, 0, 140), (255, 99, 71), (46, 139, 87),
    (65, 105, 225), (218, 165, 32), (199, 21, 133), (72, 209, 204),
    (147, 112, 219), (188, 143, 143), (85, 107, 47), (30, 30, 30),
)


@dataclass
class UncertaintyMaps:
    mean: np.ndarray  # (C, H, W)
    std: np.ndarray  # (C, H, W)
    predicted: np.ndarray  # (H, W) uint8
    pixel_std: np.ndarray  # (H, W)


def mc_statistics(stack):
    """Mean, population std, argmax mask and predicted-class std of a (J, C, H, W) stack."""
    stack = as_tensor(stack)
    if stack.ndim != 4:
        raise ValueError(f"expected a (J, C, H, W) stack, got rank {stack.ndim}")
    mean, std = reduce_mean_std_axis(stack, 0)
    predicted = argmax_channel(mean)
    pixel_std = np.take_along_axis(std, predicted[None].astype(np.intp), axis=0)[0]
    return UncertaintyMaps(mean=mean, std=std, predicted=predicted, pixel_std=pixel_std)


def class_uncertainty(maps):
    """Spatial sum of each class's std map, averaged over images in list order."""
    maps = list(maps)
    if not maps:
        raise ValueError("class_uncertainty needs at least one image")
    n_cls = maps[0].std.shape[0]
    total = np.zeros(n_cls, dtype=np.float64)
    for m in maps:
        if m.std.shape[0] != n_cls:
            raise ValueError("all images must have the same class count")
        total += m.std.reshape(n_cls, -1).sum(axis=1, dtype=np.float64)
    return total / len(maps)


def render_uncertainty_map(pixel_std):
    """Linear map of [0, max] to 0..255 grey (white = most uncertain)."""
    s = np.asarray(pixel_std, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("uncertainty map must be 2-D")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("uncertainty values must be finite and >= 0")
    top = s.max(initial=0.0)
    if top == 0.0:
        return np.zeros(s.shape, dtype=np.uint8)
    return np.rint(s * (255.0 / top)).clip(0, 255).astype(np.uint8)


def render_class_mask(predicted):
    """(H, W) class ids -> (H, W, 3) uint8 colors from PALETTE."""
    ids = np.asarray(predicted)
    if ids.size and ids.max() >= len(PALETTE):
        raise ValueError(f"class id {int(ids.max())} has no palette color (palette size {len(PALETTE)})")
    return np.asarray(PALETTE, dtype=np.uint8)[ids]


def colors_to_ids(rgb):
    """Inverse of render_class_mask; unknown colors raise."""
    lookup = {c: i for i, c in enumerate(PALETTE)}
    flat = np.asarray(rgb, dtype=np.uint8).reshape(-1, 3)
    try:
        ids = [lookup[tuple(int(v) for v in px)] for px in flat]
    except KeyError as exc:
        raise ValueError(f"color {exc.args[0]} is not in the palette") from None
    return np.asarray(ids, dtype=np.uint8).reshape(np.shape(rgb)[:-1])


def write_pgm(path, grey):
    grey = np.ascontiguousarray(grey, dtype=np.uint8)
    h, w = grey.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(grey.tobytes())


def write_ppm(path, rgb):
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_pnm(path):
    """Read a binary PGM/PPM written by write_pgm/write_ppm."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields = data.split(maxsplit=4)
    magic, w, h, maxval, payload = fields[0], int(fields[1]), int(fields[2]), int(fields[3]), fields[4]
    if maxval != 255 or magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported PNM header")
    arr = np.frombuffer(payload, dtype=np.uint8)
    return arr.reshape(h, w) if magic == b"P5" else arr.reshape(h, w, 3)


def ece(confidences, correct, bins=15):
    """Binned expected calibration error over equal-width bins on (0, 1].

    Each bin contributes |sum(correct) - sum(confidence)| / N, which equals
    (n_b / N) * |acc_b - conf_b|; sums use exactly rounded summation.
    """
    conf = np.asarray(confidences, dtype=np.float64).ravel()
    hit = np.asarray(correct).ravel()
    if len(conf) != len(hit):
        raise ValueError(f"{len(conf)} confidences but {len(hit)} correctness flags")
    if len(conf) == 0:
        raise ValueError("ece needs at least one prediction")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if np.any((conf < 0) | (conf > 1)):
        raise ValueError("confidences must lie in [0, 1]")
    idx = np.clip(np.ceil(conf * bins).astype(np.int64) - 1, 0, bins - 1)
    order = np.argsort(idx, kind="stable")
    bounds = np.searchsorted(idx[order], np.arange(bins + 1))
    conf_sorted = conf[order]
    hit_sorted = hit[order].astype(np.int64)
    gap = 0.0
    for b in range(bins):
        lo, hi = bounds[b], bounds[b + 1]
        if hi > lo:
            gap += abs(int(hit_sorted[lo:hi].sum()) - math.fsum(conf_sorted[lo:hi]))
    return gap / len(conf)


def pixel_calibration(maps, truths):
    """Per-pixel (confidence, correct) pairs pooled over images."""
    conf = [m.mean.max(axis=0).ravel() for m in maps]
    hits = [(m.predicted == t).ravel() for m, t in zip(maps, truths)]
    return np.concatenate(conf), np.concatenate(hits)
