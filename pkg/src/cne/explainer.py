"""Pattern vectors from hard masks and the binary logistic regression over them."""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .raster import check_label_mask, one_hot_encode


class DegenerateLabelsError(ValueError):
    """Training labels contain a single class; the problem has no finite optimum."""


class ConvergenceWarning(UserWarning):
    def __init__(self, message, grad_norm):
        super().__init__(message)
        self.grad_norm = grad_norm


def vectorize(onehot):
    """Per-class pixel count of a (C, H, W) binary mask, as float64."""
    onehot = np.ascontiguousarray(onehot, dtype=np.uint8)
    if onehot.ndim != 3:
        raise ValueError(f"expected a (C, H, W) mask, got shape {onehot.shape}")
    return kernels.channel_sums(onehot).astype(np.float64)


def vectorize_labels(mask, num_classes):
    """Shortcut for ``vectorize(one_hot_encode(mask, num_classes))``."""
    return vectorize(one_hot_encode(check_label_mask(mask, num_classes), num_classes))


@dataclass
class LogRegModel:
    alpha: np.ndarray
    bias: float
    feature_scale: float
    l2: float = 0.0
    converged: bool = True
    iterations: int = 0
    grad_norm: float = 0.0

    def decision(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        if Z.shape[1] != len(self.alpha):
            raise ValueError(f"pattern vector has {Z.shape[1]} entries, model expects {len(self.alpha)}")
        return (self.feature_scale * Z) @ self.alpha + self.bias

    def to_json(self):
        return {
            "alpha": [float(a) for a in self.alpha],
            "bias": float(self.bias),
            "feature_scale": float(self.feature_scale),
            "l2": float(self.l2),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
        }

    @classmethod
    def from_json(cls, d):
        return cls(alpha=np.asarray(d["alpha"], dtype=np.float64), bias=float(d["bias"]),
                   feature_scale=float(d["feature_scale"]), l2=float(d.get("l2", 0.0)),
                   converged=bool(d.get("converged", True)), iterations=int(d.get("iterations", 0)))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logreg_predict(model, z):
    """Probability of the positive (natural) class for one pattern vector."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ValueError("logreg_predict takes a single pattern vector")
    return float(sigmoid(model.decision(z))[0])


def _design(Z, feature_scale):
    X = feature_scale * Z
    return np.hstack([X, np.ones((X.shape[0], 1))])


def objective(theta, X1, y, l2):
    """Mean negative log-likelihood plus l2 * ||alpha||^2; theta = (alpha, bias)."""
    t = X1 @ theta
    # log(1 + e^t) - y t, computed stably
    nll = np.logaddexp(0.0, t) - y * t
    return float(nll.mean() + l2 * np.dot(theta[:-1], theta[:-1]))


def gradient(theta, X1, y, l2):
    p = sigmoid(X1 @ theta)
    g = X1.T @ (p - y) / len(y)
    g[:-1] += 2.0 * l2 * theta[:-1]
    return g


def hessian(theta, X1, y, l2):
    p = sigmoid(X1 @ theta)
    wts = p * (1.0 - p)
    H = (X1.T * wts) @ X1 / len(y)
    H[np.arange(len(theta) - 1), np.arange(len(theta) - 1)] += 2.0 * l2
    return H


def logreg_train(Z, labels, l2=1e-3, max_iter=200, tol=1e-8, feature_scale=None):
    """Newton/IRLS fit from zero, with step halving whenever the objective rises.

    Stops when the gradient max-norm drops below ``tol``. If ``max_iter`` is hit
    first, a ConvergenceWarning carrying the final gradient norm is issued and
    the model comes back with ``converged=False``.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64).ravel()
    if Z.shape[0] != len(y):
        raise ValueError(f"{Z.shape[0]} pattern vectors but {len(y)} labels")
    if len(y) < 2:
        raise ValueError("need at least two samples")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise DegenerateLabelsError("all labels belong to one class; logistic regression is degenerate")
    if l2 < 0:
        raise ValueError("l2 must be >= 0")
    if feature_scale is None:
        total = Z.sum(axis=1).mean()
        feature_scale = 1.0 / total if total > 0 else 1.0

    X1 = _design(Z, feature_scale)
    theta = np.zeros(X1.shape[1])
    f = objective(theta, X1, y, l2)
    g = gradient(theta, X1, y, l2)
    it = 0
    while np.max(np.abs(g)) >= tol and it < max_iter:
        H = hessian(theta, X1, y, l2)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta - t * step
            f_new = objective(cand, X1, y, l2)
            if f_new <= f or t < 1e-10:
                break
            t *= 0.5
        theta, f = cand, f_new
        g = gradient(theta, X1, y, l2)
        it += 1

    grad_norm = float(np.max(np.abs(g)))
    converged = grad_norm < tol
    if not converged:
        warnings.warn(ConvergenceWarning(
            f"logistic regression did not converge in {max_iter} iterations "
            f"(gradient max-norm {grad_norm:.3e})", grad_norm), stacklevel=2)
    return LogRegModel(alpha=theta[:-1].copy(), bias=float(theta[-1]), feature_scale=float(feature_scale),
                       l2=float(l2), converged=converged, iterations=it, grad_norm=grad_norm)


def positive_coeffs(alpha):
    return np.maximum(np.asarray(alpha, dtype=np.float64), 0.0)
