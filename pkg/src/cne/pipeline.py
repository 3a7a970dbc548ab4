"""End-to-end stages behind the command-line subcommands.

Each stage reads and writes files only, so running the stages one by one and
running ``run_pipeline`` produce the same artifacts for the same seeds.
"""

import json
import logging
import os

import numpy as np

from .explainer import logreg_train, vectorize
from .kernels import BACKEND
from .raster import one_hot_encode, save_tensor
from .report import build_report, emit_report, filter_patterns
from .rng import derive_seed
from .segmenter import (init_model, load_model, mc_sample, predict_mask,
                        save_model, train)
from .synth import class_distribution, load_dataset, synth_generate, write_dataset
from .uncertainty import (class_uncertainty, ece, mc_statistics, pixel_calibration,
                          render_class_mask, render_uncertainty_map, write_pgm, write_ppm)

MODEL_FILE = "model.cnet"
METRICS_FILE = "seg_metrics.json"
_MC_STREAM = 21

log = logging.getLogger(__name__)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_synth(cfg, out_dir, class_names=None):
    samples = synth_generate(cfg)
    write_dataset(samples, cfg, out_dir, class_names)
    return samples


def run_train_seg(data_dir, out_dir, train_cfg, p_drop=0.1, width=16):
    ds = load_dataset(data_dir)
    model = init_model(ds.num_classes, p_drop=p_drop, widths=(width,) * 3,
                       seed=derive_seed(train_cfg.seed, 0))
    log.info("training on %d scenes for %d epochs (backend %s)", len(ds.samples), train_cfg.epochs, BACKEND)
    result = train(model, ds.samples, train_cfg)
    result.model.lineage["dataset_fingerprint"] = ds.fingerprint
    os.makedirs(out_dir, exist_ok=True)
    save_model(result.model, os.path.join(out_dir, MODEL_FILE))
    metrics = {
        "train_mean_iou": result.train_iou,
        "test_mean_iou": result.test_iou,
        "train_per_class_iou": result.train_per_class,
        "test_per_class_iou": result.test_per_class,
        "epoch_losses": result.losses,
        "train_scenes": len(result.model.lineage["split"]["train"]),
        "test_scenes": len(result.model.lineage["split"]["test"]),
    }
    _write_json(os.path.join(out_dir, METRICS_FILE), metrics)
    return result, metrics


def scene_mc_seed(seed, scene_index):
    return derive_seed(seed, _MC_STREAM, scene_index)


def select_scenes(ds, model, which="test"):
    """Samples for 'all', 'test' (held-out split, or all if none) or a comma list of indices."""
    by_index = {s.index: s for s in ds.samples}
    if which == "all":
        return list(ds.samples)
    if which == "test":
        test = model.lineage.get("split", {}).get("test") or []
        return [by_index[i] for i in test if i in by_index] or list(ds.samples)
    wanted = [int(tok) for tok in str(which).split(",") if tok.strip()]
    missing = [i for i in wanted if i not in by_index]
    if missing:
        raise KeyError(f"scenes not in dataset: {missing}")
    return [by_index[i] for i in wanted]


def scene_statistics(model, sample, runs, seed):
    return mc_statistics(mc_sample(model, sample.image, runs, scene_mc_seed(seed, sample.index)))


def run_infer(model_path, data_dir, out_dir, runs=25, seed=0, scenes="test"):
    model = load_model(model_path)
    ds = load_dataset(data_dir)
    if model.num_classes != ds.num_classes:
        raise ValueError(f"model has {model.num_classes} classes, dataset has {ds.num_classes}")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for s in select_scenes(ds, model, scenes):
        maps = scene_statistics(model, s, runs, seed)
        stem = os.path.join(out_dir, f"scene_{s.index:04d}")
        write_ppm(stem + "_pred.ppm", render_class_mask(maps.predicted))
        write_pgm(stem + "_unc.pgm", render_uncertainty_map(maps.pixel_std))
        save_tensor(maps.mean, stem + "_A.cnet")
        save_tensor(maps.std, stem + "_S.cnet")
        written.append(s.index)
    return written


def run_report(model_path, data_dir, out_dir, runs=25, seed=0, l2=1e-3, epsilon=1e-9,
               min_coeff=0.01, bins=15):
    model = load_model(model_path)
    ds = load_dataset(data_dir)
    if model.num_classes != ds.num_classes:
        raise ValueError(f"model has {model.num_classes} classes, dataset has {ds.num_classes}")
    n_cls = ds.num_classes

    # white box: pattern vectors of dropout-off masks for every scene
    Z = np.stack([vectorize(one_hot_encode(predict_mask(model, s.image), n_cls)) for s in ds.samples])
    labels = [s.scene_label for s in ds.samples]
    logreg = logreg_train(Z, labels, l2=l2)
    log.info("pattern regression: %d iterations, converged=%s", logreg.iterations, logreg.converged)

    # uncertainty on the held-out scenes
    eval_set = select_scenes(ds, model, "test")
    maps = [scene_statistics(model, s, runs, seed) for s in eval_set]
    u = class_uncertainty(maps)
    conf, hits = pixel_calibration(maps, [s.mask for s in eval_set])
    calib = ece(conf, hits, bins)
    log.info("ECE over %d held-out scenes: %.4f", len(eval_set), calib)

    metadata = {
        "J": runs,
        "p_drop": model.p_drop,
        "epsilon": epsilon,
        "filter_threshold": min_coeff,
        "ece_bins": bins,
        "ece": calib,
        "l2": l2,
        "seed": seed,
        "num_classes": n_cls,
        "regression_scenes": len(ds.samples),
        "eval_scenes": [s.index for s in eval_set],
        "dataset_fingerprint": ds.fingerprint,
        "logreg": logreg.to_json(),
        "u": [float(x) for x in u],
    }
    report = build_report(logreg.alpha, u, class_distribution(ds.samples, n_cls),
                          ds.class_names, epsilon, metadata)
    report = filter_patterns(report, min_coeff)
    os.makedirs(out_dir, exist_ok=True)
    paths = emit_report(report, out_dir)
    logreg.save(os.path.join(out_dir, "logreg.json"))
    return report, paths


def run_pipeline(out_dir, synth_cfg, train_cfg, p_drop=0.1, width=16, runs=25, seed=0,
                 l2=1e-3, epsilon=1e-9, min_coeff=0.01, bins=15, class_names=None):
    """synth -> train-seg -> infer (held-out scenes) -> report, under one output directory."""
    data_dir = os.path.join(out_dir, "data")
    model_dir = os.path.join(out_dir, "model")
    run_synth(synth_cfg, data_dir, class_names)
    _, metrics = run_train_seg(data_dir, model_dir, train_cfg, p_drop, width)
    model_path = os.path.join(model_dir, MODEL_FILE)
    run_infer(model_path, data_dir, os.path.join(out_dir, "infer"), runs, seed, "test")
    report, paths = run_report(model_path, data_dir, os.path.join(out_dir, "report"), runs, seed,
                               l2, epsilon, min_coeff, bins)
    return report, metrics, paths
