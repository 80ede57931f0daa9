"""Confidence binning, ECE / OE and reliability exports."""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import normalize
from .errors import InputError
from .losses import temp_softmax
from .models import forward

DEFAULT_BINS = 15
BIN_HEADER = ("bin_lo", "bin_hi", "count", "accuracy", "confidence")
SAMPLE_HEADER = ("confidence", "correct")


@dataclass
class PredictionSet:
    confidences: np.ndarray
    predicted: np.ndarray
    actual: np.ndarray

    def __post_init__(self):
        self.confidences = np.asarray(self.confidences, dtype=float)
        self.predicted = np.asarray(self.predicted, dtype=np.int64)
        self.actual = np.asarray(self.actual, dtype=np.int64)
        if not (len(self.confidences) == len(self.predicted) == len(self.actual)):
            raise InputError("confidences, predicted and actual must have equal length")

    def __len__(self):
        return len(self.confidences)

    @property
    def correct(self):
        return self.predicted == self.actual

    @classmethod
    def concat(cls, *sets):
        return cls(np.concatenate([s.confidences for s in sets]),
                   np.concatenate([s.predicted for s in sets]),
                   np.concatenate([s.actual for s in sets]))


@dataclass
class CalibrationReport:
    n_bins: int
    bin_edges: np.ndarray
    counts: np.ndarray
    bin_accuracy: np.ndarray
    bin_confidence: np.ndarray
    ece: float
    oe: float
    accuracy: float
    n_samples: int

    def to_dict(self):
        return {
            "n_bins": self.n_bins,
            "bin_edges": self.bin_edges.tolist(),
            "counts": self.counts.tolist(),
            "bin_accuracy": self.bin_accuracy.tolist(),
            "bin_confidence": self.bin_confidence.tolist(),
            "ece": self.ece,
            "oe": self.oe,
            "accuracy": self.accuracy,
            "n_samples": self.n_samples,
        }


def predictions_from_logits(logits, labels):
    """Max-softmax confidence at T=1; argmax ties resolve to the lowest index."""
    probs = temp_softmax(logits, 1.0)
    pred = probs.argmax(axis=1)
    return PredictionSet(probs[np.arange(len(pred)), pred], pred, labels)


def predict(model, dataset, batch_size=256):
    """Run ``model`` in eval mode over ``dataset``.

    Inputs are normalized with the model's stored constants when present,
    otherwise with the dataset's own (if any).
    """
    mode = model.mode
    model.eval()
    norm = model.normalization
    if norm is None and dataset.mean is not None:
        norm = (dataset.mean, dataset.std)
    try:
        logits = []
        for start in range(0, len(dataset), batch_size):
            x = dataset.images[start:start + batch_size]
            if norm is not None:
                x = normalize(x, *norm)
            logits.append(forward(model, x).logits)
    finally:
        model.mode = mode
    return predictions_from_logits(np.concatenate(logits), dataset.labels)


def bin_assignment(confidences, n_bins):
    """Bin index per confidence: bins are (lo, hi], the first also holds 0."""
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    return np.searchsorted(edges[1:-1], confidences, side="left"), edges


def calibration_report(preds, n_bins=DEFAULT_BINS):
    if n_bins < 1:
        raise InputError("n_bins must be >= 1")
    n = len(preds)
    if n < 1:
        raise InputError("empty prediction set")
    conf = preds.confidences
    if np.any(conf < 0) or np.any(conf > 1) or not np.all(np.isfinite(conf)):
        raise InputError("confidences must lie in [0, 1]")
    correct = preds.correct.astype(float)
    idx, edges = bin_assignment(conf, n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=n_bins)
    acc_sum = np.bincount(idx, weights=correct, minlength=n_bins)
    nonempty = counts > 0
    bin_conf = np.divide(conf_sum, counts, out=np.zeros(n_bins), where=nonempty)
    bin_acc = np.divide(acc_sum, counts, out=np.zeros(n_bins), where=nonempty)
    ece, oe = metrics_from_bins(counts, bin_acc, bin_conf)
    return CalibrationReport(
        n_bins=n_bins, bin_edges=edges, counts=counts, bin_accuracy=bin_acc,
        bin_confidence=bin_conf, ece=ece, oe=oe, accuracy=float(correct.mean()),
        n_samples=n)


def metrics_from_bins(counts, bin_acc, bin_conf):
    """(ECE, OE) from per-bin counts, accuracies and mean confidences."""
    counts = np.asarray(counts, dtype=float)
    bin_acc, bin_conf = np.asarray(bin_acc, dtype=float), np.asarray(bin_conf, dtype=float)
    w = counts / counts.sum()
    ece = float((w * np.abs(bin_acc - bin_conf)).sum())
    oe = float((w * bin_conf * np.maximum(bin_conf - bin_acc, 0.0)).sum())
    return ece, oe


def reliability_export(report, preds, bins_path=None, samples_path=None):
    """Per-bin and per-sample tables, optionally written as CSV.

    Empty bins appear with count 0 and accuracy = confidence = 0. Floats are
    written with ``repr`` so the tables reproduce the report exactly.
    """
    bin_rows = [
        (float(report.bin_edges[b]), float(report.bin_edges[b + 1]), int(report.counts[b]),
         float(report.bin_accuracy[b]), float(report.bin_confidence[b]))
        for b in range(report.n_bins)]
    sample_rows = [(float(c), int(k)) for c, k in zip(preds.confidences, preds.correct)]
    for path, header, rows in ((bins_path, BIN_HEADER, bin_rows),
                               (samples_path, SAMPLE_HEADER, sample_rows)):
        if path is None:
            continue
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            writer.writerows([[repr(v) for v in row] for row in rows])
    return bin_rows, sample_rows


def read_bin_table(path):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = tuple(next(reader))
        if header != BIN_HEADER:
            raise InputError(f"{path}: unexpected header {header}")
        rows = [(float(a), float(b), int(c), float(d), float(e)) for a, b, c, d, e in reader]
    return rows


def ece_from_bin_table(rows):
    counts = [r[2] for r in rows]
    return metrics_from_bins(counts, [r[3] for r in rows], [r[4] for r in rows])


def write_report_json(report, path):
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return Path(path)
