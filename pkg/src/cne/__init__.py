"""Confident naturalness explanation: which land-cover patterns drive a scene-level
naturalness classifier, weighted by how certain the segmenter is about them."""

from .explainer import LogRegModel, logreg_predict, logreg_train, positive_coeffs, vectorize
from .kernels import BACKEND
from .raster import (argmax_channel, load_tensor, one_hot_encode, reduce_mean_axis, reduce_std_axis,
                     save_tensor)
from .report import CneReport, build_report, cne_normalize, cne_normalized, cne_raw, emit_report, filter_patterns
from .segmenter import SegModel, TrainConfig, init_model, mc_sample, train
from .synth import SynthConfig, synth_generate
from .uncertainty import class_uncertainty, ece, mc_statistics

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CneReport", "LogRegModel", "SegModel", "SynthConfig", "TrainConfig",
    "argmax_channel", "build_report", "class_uncertainty", "cne_normalize", "cne_normalized", "cne_raw",
    "ece", "emit_report", "filter_patterns", "init_model", "load_tensor", "logreg_predict", "logreg_train",
    "mc_sample", "mc_statistics", "one_hot_encode", "positive_coeffs", "reduce_mean_axis", "reduce_std_axis",
    "save_tensor", "synth_generate", "train", "vectorize",
]
