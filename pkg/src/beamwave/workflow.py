"""Glue between a stored dataset and a model: split, group, train, score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import GroupedExamples, IQDataset, SplitSpec, group_examples, split
from .evaluation import EvalResult, evaluate, snr_bucket
from .nn.model import Model, build_model
from .nn.train import TrainLog, train

TARGETS = {"txb": "txb", "aoa": "aoa_class"}


def label_field(target: str) -> str:
    if target not in TARGETS:
        raise ValueError(f"target must be one of {tuple(TARGETS)}, got {target!r}")
    return TARGETS[target]


@dataclass
class Examples:
    x: GroupedExamples
    y: np.ndarray
    groups: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    def strata(self, dataset: IQDataset) -> dict:
        """Per-example SNR bucket, antenna seed and scenario (from the first block)."""
        first = self.groups[:, 0]
        return {
            "snr": snr_bucket(dataset.labels("snr_db")[first]),
            "antenna_seed": dataset.labels("antenna_seed")[first],
            "scenario": dataset.labels("scenario")[first],
        }


def make_examples(dataset: IQDataset, ids, target: str = "txb", L: int = 1,
                  normalize: bool = False, stride: int | None = None) -> Examples:
    groups = group_examples(dataset, ids, L, stride)
    y = dataset.labels(label_field(target))[groups[:, 0]].astype(np.int64) if len(groups) else np.zeros(0, np.int64)
    return Examples(GroupedExamples(dataset.data, groups, normalize), y, groups)


def split_examples(dataset: IQDataset, target: str = "txb", L: int = 1, normalize: bool = False,
                   spec: SplitSpec = SplitSpec(), train_stride: int | None = None):
    """(train, test) Examples from a stratified split of ``dataset``.

    ``train_stride`` < L draws overlapping L-block windows from the
    training blocks; test groups never overlap.
    """
    tr, te = split(dataset, spec, target=label_field(target))
    return (make_examples(dataset, tr, target, L, normalize, train_stride),
            make_examples(dataset, te, target, L, normalize))


def num_classes(dataset: IQDataset, target: str) -> int:
    if target == "aoa":
        return len(dataset.manifest.aoas)
    return int(dataset.labels("txb").max()) + 1


def fit(dataset: IQDataset, variant: str = "txb-small-512", target: str = "txb", L: int = 1,
        epochs: int = 10, lr: float = 1e-4, batch_size: int = 100, seed: int = 0,
        normalize: bool = False, spec: SplitSpec = SplitSpec(), train_stride: int | None = None,
        on_epoch=None) -> tuple[Model, TrainLog, Examples, Examples]:
    """Build, train and return a model with its log and the two example sets."""
    train_set, test_set = split_examples(dataset, target, L, normalize, spec, train_stride)
    if len(train_set) == 0:
        raise ValueError(f"no training examples of L={L} blocks in this dataset")
    model = build_model(variant, L, dataset.block_len, num_classes(dataset, target), target,
                        seed=seed, normalize=normalize)
    test = (test_set.x, test_set.y) if len(test_set) else None
    log = train(model, train_set.x, train_set.y, epochs=epochs, lr=lr, batch_size=batch_size,
                seed=seed, test=test, on_epoch=on_epoch)
    return model, log, train_set, test_set


def score(model: Model, dataset: IQDataset, examples: Examples) -> EvalResult:
    return evaluate(model, examples.x, examples.y, examples.strata(dataset))
