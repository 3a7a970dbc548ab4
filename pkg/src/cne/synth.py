"""Synthetic labelled scenes with planted naturalness-indicative classes.

Each scene gets a smooth value-noise field, rank-transformed to be uniform on
[0, 1) and cut into C threshold bands whose widths are drawn per scene. Band c
is class c, so class fractions vary from scene to scene while regions stay
contiguous. A scene is labelled natural (1) when the pixels of the planted
``natural_classes`` cover more than ``natural_threshold`` of it.
"""

import colorsys
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .raster import check_label_mask, load_tensor, save_tensor
from .rng import generator

PIXEL_NOISE = 0.05
_SCENE_STREAM = 1


@dataclass(frozen=True)
class SynthConfig:
    scenes: int = 200
    height: int = 64
    width: int = 64
    num_classes: int = 5
    natural_classes: tuple = (0, 1)
    natural_threshold: float = 0.5
    noise_scale: float = 8.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "natural_classes", tuple(sorted(set(int(c) for c in self.natural_classes))))
        if self.scenes < 0:
            raise ValueError("scenes must be >= 0")
        if self.height < 1 or self.width < 1:
            raise ValueError("height and width must be >= 1")
        if not 1 <= self.num_classes <= 256:
            raise ValueError("num_classes must be in [1, 256]")
        if any(not 0 <= c < self.num_classes for c in self.natural_classes):
            raise ValueError("natural_classes must be class ids in [0, num_classes)")
        if not 0.0 < self.natural_threshold < 1.0:
            raise ValueError("natural_threshold must lie strictly between 0 and 1")
        if not self.noise_scale > 0:
            raise ValueError("noise_scale must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self):
        d = asdict(self)
        d["natural_classes"] = list(self.natural_classes)
        return d


@dataclass
class SceneSample:
    image: np.ndarray  # (3, H, W) float32 in [0, 1]
    mask: np.ndarray  # (H, W) uint8
    scene_label: int
    index: int = 0


@dataclass
class Dataset:
    samples: list
    num_classes: int
    class_names: list
    config: dict = field(default_factory=dict)
    fingerprint: str = ""


def class_colors(num_classes):
    """Mean RGB color per class: evenly spaced hues, alternating brightness."""
    out = np.empty((num_classes, 3), dtype=np.float64)
    for c in range(num_classes):
        sat = 0.8 if c % 2 == 0 else 0.55
        val = 0.9 if c % 3 != 2 else 0.55
        out[c] = colorsys.hsv_to_rgb(c / num_classes, sat, val)
    return out


def value_noise(rng, height, width, scale):
    """Smoothstep-interpolated lattice noise with lattice spacing ``scale`` pixels."""
    gh = int(np.ceil(height / scale)) + 2
    gw = int(np.ceil(width / scale)) + 2
    lattice = rng.random((gh, gw))
    ys = np.arange(height) / scale
    xs = np.arange(width) / scale
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    ty = ys - y0
    tx = xs - x0
    ty = ty * ty * (3 - 2 * ty)
    tx = tx * tx * (3 - 2 * tx)
    a = lattice[y0][:, x0]
    b = lattice[y0][:, x0 + 1]
    c = lattice[y0 + 1][:, x0]
    d = lattice[y0 + 1][:, x0 + 1]
    top = a + (b - a) * tx[None, :]
    bottom = c + (d - c) * tx[None, :]
    return top + (bottom - top) * ty[:, None]


def natural_fraction(mask, natural_classes):
    return float(np.isin(mask, list(natural_classes)).sum()) / mask.size


def scene_label(mask, cfg):
    return int(natural_fraction(mask, cfg.natural_classes) > cfg.natural_threshold)


def generate_scene(cfg, index, colors=None):
    rng = generator(cfg.seed, _SCENE_STREAM, index)
    h, w, n_cls = cfg.height, cfg.width, cfg.num_classes
    noise = value_noise(rng, h, w, cfg.noise_scale)
    # rank transform: band widths become the class fractions
    order = np.argsort(noise, axis=None, kind="stable")
    uniform = np.empty(h * w, dtype=np.float64)
    uniform[order] = np.arange(h * w) / (h * w)
    widths = rng.dirichlet(np.ones(n_cls))
    edges = np.cumsum(widths)[:-1]
    mask = np.searchsorted(edges, uniform, side="right").reshape(h, w).astype(np.uint8)

    if colors is None:
        colors = class_colors(n_cls)
    image = colors[mask].transpose(2, 0, 1) + rng.normal(0.0, PIXEL_NOISE, size=(3, h, w))
    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    return SceneSample(image=image, mask=mask, scene_label=scene_label(mask, cfg), index=index)


def synth_generate(cfg):
    """All scenes of ``cfg``; scene i depends only on (seed, i)."""
    colors = class_colors(cfg.num_classes)
    return [generate_scene(cfg, i, colors) for i in range(cfg.scenes)]


def class_distribution(masks, num_classes):
    """Fraction of all pixels per class, pooled over ``masks`` (samples or arrays)."""
    masks = [m.mask if isinstance(m, SceneSample) else m for m in masks]
    if not masks:
        raise ValueError("class_distribution needs at least one mask")
    counts = np.zeros(num_classes, dtype=np.int64)
    for m in masks:
        m = check_label_mask(m, num_classes)
        counts += np.bincount(m.ravel(), minlength=num_classes)
    return counts / counts.sum()


def _scene_files(idx):
    return f"scene_{idx:04d}_img.cnet", f"scene_{idx:04d}_mask.cnet"


def write_dataset(samples, cfg, out_dir, class_names=None):
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for s in samples:
        img_name, mask_name = _scene_files(s.index)
        save_tensor(s.image, os.path.join(out_dir, img_name))
        save_tensor(s.mask, os.path.join(out_dir, mask_name))
        entries.append({"index": s.index, "image": img_name, "mask": mask_name, "label": s.scene_label})
    index = {
        "format": "cne-dataset",
        "version": 1,
        "num_classes": cfg.num_classes,
        "height": cfg.height,
        "width": cfg.width,
        "config": cfg.to_dict(),
        "scenes": entries,
    }
    if class_names is not None:
        if len(class_names) != cfg.num_classes:
            raise ValueError("need exactly one class name per class")
        index["class_names"] = list(class_names)
    with open(os.path.join(out_dir, "index.json"), "w") as fh:
        json.dump(index, fh, indent=2)
        fh.write("\n")
    return index


def load_dataset(data_dir):
    index_path = os.path.join(data_dir, "index.json")
    with open(index_path, "rb") as fh:
        raw = fh.read()
    index = json.loads(raw)
    digest = hashlib.sha256(raw)
    n_cls = int(index["num_classes"])
    samples = []
    for e in index["scenes"]:
        for key in ("image", "mask"):
            with open(os.path.join(data_dir, e[key]), "rb") as fh:
                digest.update(fh.read())
        image = load_tensor(os.path.join(data_dir, e["image"]))
        mask = check_label_mask(load_tensor(os.path.join(data_dir, e["mask"])), n_cls)
        if image.dtype != np.float32 or image.ndim != 3 or image.shape[1:] != mask.shape:
            raise ValueError(f"scene {e['index']}: image/mask shapes disagree")
        samples.append(SceneSample(image=image, mask=mask, scene_label=int(e["label"]), index=int(e["index"])))
    names = index.get("class_names") or [f"class_{c}" for c in range(n_cls)]
    return Dataset(samples=samples, num_classes=n_cls, class_names=list(names),
                   config=index.get("config", {}), fingerprint=digest.hexdigest())
