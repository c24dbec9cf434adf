"""Streaming beam inference: classify I/Q windows, publish tuples, rank beams.

A producer reads samples from a source in arbitrary chunks, cuts them
into windows of ``xi = K * L`` samples, runs the TXB (and optionally AoA)
classifier on each window and publishes one ``InferenceTuple`` per window
into a bounded queue. Production only happens while the ``Trigger`` is
set. Subscribers drain the queue; ``rank_beams`` turns the collected
tuples into a ``BeamReport``.
"""

from __future__ import annotations

import collections
import math
import threading
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .array import Codebook
from .nn.functional import softmax
from .nn.model import Model

RSRP_FLOOR_DB = -200.0
DROP_POLICIES = ("drop-oldest", "block")


def rsrp(block) -> float:
    """Block mean power in dB; an all-zero block maps to RSRP_FLOOR_DB."""
    x = np.asarray(block)
    if x.size == 0:
        raise ValueError("rsrp needs a non-empty block")
    if x.ndim >= 1 and x.shape[-1] == 2 and not np.iscomplexobj(x):
        power = np.mean(np.sum(x.astype(np.float64) ** 2, axis=-1))
    else:
        power = np.mean(np.abs(x.astype(np.complex128)) ** 2)
    return RSRP_FLOOR_DB if power <= 0 else max(10 * math.log10(power), RSRP_FLOOR_DB)


def classify(group: np.ndarray, model: Model) -> tuple[int, float]:
    """(class, softmax max) for one (L, K, 2) tensor.

    Models trained on power-normalized inputs get the same scaling here.
    """
    x = np.asarray(group, dtype=np.float64)
    if x.shape != tuple(model.spec.input_shape):
        raise ValueError(f"model expects {tuple(model.spec.input_shape)}, got {x.shape}")
    if model.spec.normalize:
        p = np.mean(np.sum(x ** 2, axis=-1))
        if p > 0:
            x = x / np.sqrt(p)
    p = softmax(model.forward(x[None]))[0]
    k = int(np.argmax(p))
    return k, float(p[k])


@dataclass(frozen=True)
class InferenceTuple:
    txb: int
    aoa_class: int
    rsrp_db: float
    confidence: float
    block_index: int

    def __post_init__(self):
        if not 0 < self.confidence <= 1:
            raise ValueError(f"confidence must lie in (0, 1], got {self.confidence}")
        if not math.isfinite(self.rsrp_db):
            raise ValueError("rsrp_db must be finite")

    def to_json(self) -> dict:
        return {"txb": self.txb, "aoa": self.aoa_class, "rsrp_db": round(self.rsrp_db, 6),
                "confidence": round(self.confidence, 6), "block_index": self.block_index}


@dataclass
class EngineConfig:
    txb_model: Model
    aoa_model: Model | None = None
    capacity: int = 64
    policy: str = "drop-oldest"

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        if self.policy not in DROP_POLICIES:
            raise ValueError(f"policy must be one of {DROP_POLICIES}")
        if self.aoa_model is not None and self.aoa_model.spec.input_shape != self.txb_model.spec.input_shape:
            raise ValueError("TXB and AoA models must share the (L, K, 2) input shape")

    @property
    def group_len(self) -> int:
        return int(self.txb_model.spec.input_shape[0])

    @property
    def block_len(self) -> int:
        return int(self.txb_model.spec.input_shape[1])

    @property
    def xi(self) -> int:
        return self.group_len * self.block_len


class Trigger:
    """On/off switch shared between the controller and the producer."""

    def __init__(self, active: bool = True):
        self._event = threading.Event()
        if active:
            self._event.set()

    def activate(self) -> None:
        self._event.set()

    def deactivate(self) -> None:
        self._event.clear()

    @property
    def active(self) -> bool:
        return self._event.is_set()


class TupleQueue:
    """Bounded FIFO with drop-oldest or block-the-producer overflow."""

    def __init__(self, capacity: int = 64, policy: str = "drop-oldest"):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if policy not in DROP_POLICIES:
            raise ValueError(f"policy must be one of {DROP_POLICIES}")
        self.capacity = capacity
        self.policy = policy
        self.dropped = 0
        self._items = collections.deque()
        self._closed = False
        self._cond = threading.Condition()

    def put(self, item, timeout: float | None = None) -> bool:
        """Enqueue ``item``; False if a blocking put timed out or the queue is closed."""
        with self._cond:
            if self._closed:
                return False
            if len(self._items) >= self.capacity:
                if self.policy == "drop-oldest":
                    self._items.popleft()
                    self.dropped += 1
                elif not self._cond.wait_for(lambda: len(self._items) < self.capacity or self._closed, timeout):
                    return False
                if self._closed:
                    return False
            self._items.append(item)
            self._cond.notify_all()
            return True

    def get(self, timeout: float | None = None):
        """Next item, or None once the queue is closed and empty (or on timeout)."""
        with self._cond:
            self._cond.wait_for(lambda: self._items or self._closed, timeout)
            if not self._items:
                return None
            item = self._items.popleft()
            self._cond.notify_all()
            return item

    def drain(self) -> list:
        with self._cond:
            out = list(self._items)
            self._items.clear()
            self._cond.notify_all()
            return out

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        return self._closed

    def __len__(self) -> int:
        with self._cond:
            return len(self._items)


def _as_complex(chunk) -> np.ndarray:
    a = np.asarray(chunk)
    if np.iscomplexobj(a):
        return a.reshape(-1).astype(np.complex128)
    if a.ndim >= 1 and a.shape[-1] == 2:
        a = a.reshape(-1, 2).astype(np.float64)
        return a[:, 0] + 1j * a[:, 1]
    raise ValueError(f"stream chunks must be complex or (..., 2) I/Q pairs, got shape {a.shape}")


def windows(source: Iterable, xi: int) -> Iterator[np.ndarray]:
    """Re-chunk an arbitrary stream of sample arrays into xi-sample windows."""
    buf = np.zeros(0, dtype=np.complex128)
    for chunk in source:
        buf = np.concatenate([buf, _as_complex(chunk)])
        while buf.size >= xi:
            yield buf[:xi]
            buf = buf[xi:]


def infer_window(window: np.ndarray, cfg: EngineConfig, block_index: int) -> InferenceTuple:
    L, K = cfg.group_len, cfg.block_len
    group = np.stack([window.real, window.imag], axis=-1).reshape(L, K, 2)
    power_db = rsrp(window)
    txb, conf = classify(group, cfg.txb_model)
    aoa = classify(group, cfg.aoa_model)[0] if cfg.aoa_model is not None else 0
    return InferenceTuple(txb, aoa, power_db, conf, block_index)


def run_stream(source: Iterable, cfg: EngineConfig, trigger: Trigger | None = None,
               queue: TupleQueue | None = None, close: bool = True) -> TupleQueue:
    """Consume ``source`` and publish one tuple per xi samples into ``queue``.

    Windows that complete while the trigger is off are consumed but not
    classified. ``block_index`` counts K-sample blocks from the start of
    the stream, so indices are monotone and reveal skipped windows.
    """
    trigger = Trigger() if trigger is None else trigger
    queue = TupleQueue(cfg.capacity, cfg.policy) if queue is None else queue
    for n, window in enumerate(windows(source, cfg.xi)):
        if not trigger.active:
            continue
        if not queue.put(infer_window(window, cfg, n * cfg.group_len)):
            break
    if close:
        queue.close()
    return queue


def start_stream(source: Iterable, cfg: EngineConfig, trigger: Trigger | None = None,
                 queue: TupleQueue | None = None) -> tuple[threading.Thread, TupleQueue]:
    """Run ``run_stream`` on a background producer thread."""
    queue = TupleQueue(cfg.capacity, cfg.policy) if queue is None else queue
    t = threading.Thread(target=run_stream, args=(source, cfg, trigger, queue), daemon=True)
    t.start()
    return t, queue


@dataclass(frozen=True)
class BeamReport:
    ranking: tuple  # beam ids, best first
    mean_rsrp_db: dict
    counts: dict
    rx_beams: dict = field(default_factory=dict)  # aoa_class -> rx beam id

    @property
    def best(self) -> int:
        return self.ranking[0]


def decide_rx_beam(aoa_angle: float, codebook: Codebook) -> int:
    """Beam whose design angle is nearest ``aoa_angle``; ties go to the lower id."""
    best, best_d = None, math.inf
    for beam in sorted(codebook.beams, key=lambda b: b.beam_id):
        d = abs(beam.design_angle - aoa_angle)
        if d < best_d - 1e-12:
            best, best_d = beam.beam_id, d
    return best


def rank_beams(tuples: Sequence[InferenceTuple], aoa_angles: Sequence[float] | None = None,
               rx_codebook: Codebook | None = None) -> BeamReport:
    """Group tuples by predicted beam and sort by mean RSRP, best first."""
    if not tuples:
        raise ValueError("rank_beams needs at least one tuple")
    sums, counts = collections.defaultdict(float), collections.Counter()
    for t in tuples:
        sums[t.txb] += t.rsrp_db
        counts[t.txb] += 1
    means = {b: sums[b] / counts[b] for b in counts}
    ranking = tuple(sorted(means, key=lambda b: (-means[b], b)))
    rx = {}
    if aoa_angles is not None and rx_codebook is not None:
        for a in sorted({t.aoa_class for t in tuples}):
            rx[a] = decide_rx_beam(aoa_angles[a], rx_codebook)
    return BeamReport(ranking, means, dict(counts), rx)
