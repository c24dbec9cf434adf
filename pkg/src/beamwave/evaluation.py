"""Confusion matrices and stratified accuracy for trained classifiers."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    """Raw counts; rows are true classes, columns predictions."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred must have the same length")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def normalize_rows(cm: np.ndarray) -> np.ndarray:
    """Row-stochastic version of a count matrix; empty rows stay zero."""
    cm = np.asarray(cm, dtype=np.float64)
    totals = cm.sum(axis=1, keepdims=True)
    return np.divide(cm, totals, out=np.zeros_like(cm), where=totals > 0)


def snr_bucket(snr_db) -> np.ndarray:
    """'low' (< 0 dB), 'mid' (0..10 dB) or 'high' (> 10 dB) per value."""
    snr = np.asarray(snr_db, dtype=np.float64)
    out = np.empty(snr.shape, dtype=object)
    out[snr < 0] = "low"
    out[(snr >= 0) & (snr <= 10)] = "mid"
    out[snr > 10] = "high"
    return out


@dataclass
class EvalResult:
    counts: np.ndarray
    accuracy: float
    strata: dict = field(default_factory=dict)  # name -> {value: (accuracy, n)}

    @property
    def confusion(self) -> np.ndarray:
        return normalize_rows(self.counts)

    @property
    def num_examples(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "num_examples": self.num_examples,
            "confusion": self.confusion.round(6).tolist(),
            "counts": self.counts.tolist(),
            "strata": {name: {str(k): {"accuracy": a, "n": n} for k, (a, n) in v.items()}
                       for name, v in self.strata.items()},
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_csv(self, path) -> None:
        """Row-normalized confusion matrix with a header of predicted classes."""
        cm = self.confusion
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true"] + [f"pred_{j}" for j in range(cm.shape[1])])
            for i, row in enumerate(cm):
                w.writerow([i] + [f"{v:.6f}" for v in row])


def evaluate_predictions(y_true, y_pred, num_classes: int, strata: dict | None = None) -> EvalResult:
    """Confusion counts, accuracy and accuracy per value of each stratifier.

    ``strata`` maps a name (e.g. "snr", "antenna_seed") to an array of
    per-example values aligned with ``y_true``.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise ValueError("cannot evaluate on an empty test set")
    cm = confusion_matrix(y_true, y_pred, num_classes)
    correct = y_true == y_pred
    out = {}
    for name, values in (strata or {}).items():
        values = np.asarray(values)
        if values.shape != y_true.shape:
            raise ValueError(f"stratifier {name!r} has {values.shape[0]} values for {y_true.size} examples")
        out[name] = {v: (float(correct[values == v].mean()), int(np.sum(values == v)))
                     for v in sorted(set(values.tolist()), key=str)}
    return EvalResult(cm, float(correct.mean()), out)


def evaluate(model, x, y, strata: dict | None = None, batch_size: int = 256) -> EvalResult:
    """Run ``model`` over examples ``x`` and score against labels ``y``."""
    pred = model.predict(x, batch_size=batch_size)
    return evaluate_predictions(y, pred, model.spec.num_classes, strata)
