"""Mini-batch training loop with per-epoch loss/accuracy logging."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from ..dataset import epoch_order
from .functional import softmax_cross_entropy
from .model import Model
from .optim import Adam

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"loss became {loss} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (epoch, split, loss, accuracy)

    def add(self, epoch: int, split: str, loss: float, acc: float) -> None:
        self.rows.append((epoch, split, float(loss), float(acc)))

    def series(self, split: str, column: str = "accuracy") -> list:
        col = {"loss": 2, "accuracy": 3}[column]
        return [r[col] for r in self.rows if r[1] == split]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "split", "loss", "accuracy"])
            for e, s, l, a in self.rows:
                w.writerow([e, s, f"{l:.8g}", f"{a:.6f}"])


def evaluate_arrays(model: Model, x: np.ndarray, y: np.ndarray, batch_size: int = 200):
    """(mean loss, accuracy) over an in-memory set."""
    total, correct = 0.0, 0
    for i in range(0, len(x), batch_size):
        xb = np.asarray(x[i:i + batch_size], dtype=np.float64)
        logits = model.forward(xb)
        loss, _ = softmax_cross_entropy(logits, y[i:i + batch_size])
        total += loss * len(xb)
        correct += int(np.sum(np.argmax(logits, axis=1) == y[i:i + batch_size]))
    n = max(len(x), 1)
    return total / n, correct / n


def train(model: Model, x: np.ndarray, y: np.ndarray, epochs: int = 10, lr: float = 1e-4,
          batch_size: int = 100, seed: int = 0, test: tuple | None = None,
          optimizer: Adam | None = None, on_epoch=None) -> TrainLog:
    """Train ``model`` in place on examples ``x`` (n, L, K, 2) with labels ``y``.

    Batches are reshuffled every epoch from (seed, epoch). ``test`` is an
    optional (x, y) pair evaluated after each epoch.
    """
    if len(x) == 0:
        raise ValueError("cannot train on an empty dataset")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    y = np.asarray(y, dtype=np.int64)
    opt = optimizer or Adam(lr=lr)
    params = [a for _, _, a in model.parameters()]
    history = TrainLog()
    for epoch in range(1, epochs + 1):
        order = epoch_order(len(x), seed, epoch)
        loss_sum, correct = 0.0, 0
        for b, start in enumerate(range(0, len(order), batch_size)):
            sel = np.sort(order[start:start + batch_size])
            xb = np.asarray(x[sel], dtype=np.float64)
            loss, grads, logits = model.loss_and_grads(xb, y[sel])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch, b, loss)
            flat = [g[name] for g, p in zip(grads, model.params) for name in ("W", "b") if name in p]
            opt.step(params, flat)
            loss_sum += loss * len(sel)
            correct += int(np.sum(np.argmax(logits, axis=1) == y[sel]))
        history.add(epoch, "train", loss_sum / len(x), correct / len(x))
        if test is not None:
            tl, ta = evaluate_arrays(model, *test)
            history.add(epoch, "test", tl, ta)
        log.info("epoch %d: %s", epoch, history.rows[-1])
        if on_epoch is not None:
            on_epoch(epoch, history)
    return history
