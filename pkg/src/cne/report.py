"""Confident importance per pattern: clipped coefficient over summed uncertainty,
min-max normalized, filtered and written as JSON, CSV and a plain-text table."""

import csv
import json
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .explainer import positive_coeffs

CSV_COLUMNS = ("pattern", "alpha", "alpha_plus", "u", "raw_cne", "normalized_cne", "distribution_pct")
DEFAULT_EPSILON = 1e-9


def cne_raw(alpha_plus, u, epsilon=DEFAULT_EPSILON):
    """alpha_plus / max(u, epsilon), elementwise."""
    a = np.asarray(alpha_plus, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if a.shape != u.shape:
        raise ValueError(f"alpha_plus has shape {a.shape}, u has shape {u.shape}")
    if np.any(a < 0) or np.any(u < 0):
        raise ValueError("alpha_plus and u must be non-negative")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return a / np.maximum(u, epsilon)


def _minmax_exact(values):
    # values are Fractions; one rounding at the very end
    if not values:
        return np.zeros(0)
    lo, hi = min(values), max(values)
    if hi == lo:
        return np.full(len(values), 0.5)
    span = hi - lo
    return np.array([float((v - lo) / span) for v in values])


def cne_normalize(raw):
    """Min-max scale to [0, 1]; a constant vector maps to 0.5 everywhere.

    Computed in exact rational arithmetic and rounded once, so the result is
    the correctly rounded value of (raw - min) / (max - min).
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw CNE values must be finite")
    return _minmax_exact([Fraction(float(r)) for r in raw.ravel()]).reshape(raw.shape)


def cne_normalized(alpha_plus, u, epsilon=DEFAULT_EPSILON):
    """Normalized CNE straight from alpha_plus and u, without rounding the ratios first.

    Scaling alpha_plus by any k > 0 for which k * alpha_plus is exact in
    float64 leaves the result bit-for-bit unchanged.
    """
    a = np.asarray(alpha_plus, dtype=np.float64)
    cne_raw(a, u, epsilon)  # validation
    den = np.maximum(np.asarray(u, dtype=np.float64), epsilon)
    q = [Fraction(float(x)) / Fraction(float(d)) for x, d in zip(a.ravel(), den.ravel())]
    return _minmax_exact(q).reshape(a.shape)


@dataclass
class CneRow:
    class_id: int
    pattern: str
    alpha: float
    alpha_plus: float
    u: float
    raw_cne: float
    normalized_cne: float
    distribution_pct: float

    def csv_values(self):
        return [self.pattern, *(repr(float(getattr(self, k))) for k in CSV_COLUMNS[1:])]


@dataclass
class CneReport:
    rows: list
    metadata: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "metadata": self.metadata,
            "rows": [
                {"class_id": r.class_id, **{k: getattr(r, k) for k in CSV_COLUMNS}}
                for r in self.rows
            ],
        }

    @classmethod
    def from_json(cls, d):
        return cls(rows=[CneRow(**r) for r in d["rows"]], metadata=d["metadata"])


def _sort_rows(rows):
    return sorted(rows, key=lambda r: (-r.normalized_cne, r.class_id))


def build_report(alpha, u, distribution, class_names=None, epsilon=DEFAULT_EPSILON, metadata=None):
    """One row per class, normalized over every class, sorted by normalized CNE."""
    alpha = np.asarray(alpha, dtype=np.float64)
    alpha_plus = positive_coeffs(alpha)
    raw = cne_raw(alpha_plus, u, epsilon)
    norm = cne_normalized(alpha_plus, u, epsilon)
    if class_names is None:
        class_names = [f"class_{c}" for c in range(len(alpha))]
    dist = np.asarray(distribution, dtype=np.float64)
    rows = [
        CneRow(class_id=c, pattern=str(class_names[c]), alpha=float(alpha[c]),
               alpha_plus=float(alpha_plus[c]), u=float(u[c]), raw_cne=float(raw[c]),
               normalized_cne=float(norm[c]), distribution_pct=float(100.0 * dist[c]))
        for c in range(len(alpha))
    ]
    meta = dict(metadata or {})
    meta.setdefault("epsilon", epsilon)
    return CneReport(rows=_sort_rows(rows), metadata=meta)


def filter_patterns(report, threshold):
    """Drop rows whose coefficient is below ``threshold``; 0 disables filtering.

    Normalized values are left as computed over all classes.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    meta = dict(report.metadata, filter_threshold=threshold)
    if threshold == 0:
        return replace(report, rows=list(report.rows), metadata=meta)
    return CneReport(rows=[r for r in report.rows if r.alpha >= threshold], metadata=meta)


def format_distribution(pct):
    """One decimal, or two significant digits when one decimal would round a share to 0."""
    if pct > 0 and round(pct, 1) == 0:
        return f"{pct:.2g}"
    return f"{pct:.1f}"


def format_row(pattern, metric, pct, width=0):
    return f"{pattern:<{width}} | {metric:.2f} | {format_distribution(pct)}"


def format_table(report):
    width = max([len("Pattern")] + [len(r.pattern) for r in report.rows])
    lines = [f"{'Pattern':<{width}} | Metric | Distribution%", "-" * (width + 25)]
    lines += [format_row(r.pattern, r.normalized_cne, r.distribution_pct, width) for r in report.rows]
    return "\n".join(lines) + "\n"


def emit_report(report, out_dir, stem="report"):
    """Write <stem>.json, <stem>.csv and <stem>.txt under ``out_dir``; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {ext: os.path.join(out_dir, f"{stem}.{ext}") for ext in ("json", "csv", "txt")}
    with open(paths["json"], "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(paths["csv"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in report.rows:
            writer.writerow(r.csv_values())
    with open(paths["txt"], "w") as fh:
        fh.write(format_table(report))
    return paths


def load_report(path):
    with open(path) as fh:
        return CneReport.from_json(json.load(fh))
