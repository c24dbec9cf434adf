"""Binary I/Q block storage, labels, stratified splits and batching.

A dataset is a directory holding ``blocks.iqb`` (little-endian float32
interleaved I/Q, fixed block length, no header) and ``manifest.toml``
(plain text, a small TOML subset). Blocks are stored cell by cell, where
a cell is one combination of label fields; the manifest records the byte
offset and block count of every cell. The layout is documented in
docs/formats.md.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator, Sequence

import numpy as np

FORMAT_NAME = "beamwave-iq"
FORMAT_VERSION = 1
BLOCKS_FILE = "blocks.iqb"
MANIFEST_FILE = "manifest.toml"
SCENARIOS = ("basic", "obstacle", "diagonal", "multi-rf")
LABEL_FIELDS = ("txb", "aoa_class", "gain_index", "antenna_seed", "scenario")

_SAMPLE = np.dtype("<f4")


class FormatError(ValueError):
    """Raised for malformed, truncated or inconsistent dataset files."""


@dataclass(frozen=True)
class Label:
    txb: int
    aoa_class: int = 0
    gain_index: int = 1
    antenna_seed: int = 0
    scenario: str = "basic"
    snr_db: float = float("nan")

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")


@dataclass(frozen=True)
class IQBlock:
    samples: np.ndarray  # (K, 2) float32, I then Q
    block_index: int
    label: Label | None = None

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2 or s.shape[1] != 2:
            raise ValueError(f"IQBlock samples must have shape (K, 2), got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError(f"block {self.block_index} holds non-finite values")

    @property
    def complex(self) -> np.ndarray:
        return self.samples[:, 0].astype(np.float64) + 1j * self.samples[:, 1].astype(np.float64)


@dataclass(frozen=True)
class Cell:
    label: Label
    offset: int  # bytes into blocks.iqb
    count: int


@dataclass
class DatasetManifest:
    block_len: int
    cells: list = field(default_factory=list)
    codebook: str = "custom"
    aoas: tuple = (0.0,)
    master_seed: int = 0
    version: int = FORMAT_VERSION
    meta: dict = field(default_factory=dict)

    @property
    def block_bytes(self) -> int:
        return self.block_len * 2 * _SAMPLE.itemsize

    @property
    def num_blocks(self) -> int:
        return sum(c.count for c in self.cells)

    def counts_by(self, name: str) -> dict:
        out: dict = {}
        for c in self.cells:
            key = getattr(c.label, name)
            out[key] = out.get(key, 0) + c.count
        return dict(sorted(out.items()))


def to_iq_pairs(x) -> np.ndarray:
    """Complex vector -> (K, 2) float32; (K, 2) real input passes through."""
    a = np.asarray(x)
    if np.iscomplexobj(a):
        return np.stack([a.real, a.imag], axis=-1).astype(_SAMPLE)
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValueError(f"expected a complex vector or (K, 2) array, got shape {a.shape}")
    return a.astype(_SAMPLE)


# --- manifest text format -------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not np.isfinite(v):
            return f'"{v}"'
        return repr(v)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__} in manifest")


def _parse(text: str, where: str):
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{where}: cannot parse value {text!r}") from exc
    if value in ("nan", "inf", "-inf"):
        return float(value)
    return value


def write_manifest(manifest: DatasetManifest, path) -> None:
    lines = [
        f"format = {_fmt(FORMAT_NAME)}",
        f"version = {manifest.version}",
        f"block_len = {manifest.block_len}",
        f"codebook = {_fmt(manifest.codebook)}",
        f"aoas = {_fmt(list(manifest.aoas))}",
        f"master_seed = {manifest.master_seed}",
        f"num_blocks = {manifest.num_blocks}",
    ]
    if manifest.meta:
        lines.append("")
        lines.append("[meta]")
        for k, v in manifest.meta.items():
            lines.append(f"{k} = {_fmt(v)}")
    for c in manifest.cells:
        lines.append("")
        lines.append("[[cell]]")
        for k, v in asdict(c.label).items():
            lines.append(f"{k} = {_fmt(v)}")
        lines.append(f"offset = {c.offset}")
        lines.append(f"count = {c.count}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> DatasetManifest:
    top: dict = {}
    meta: dict = {}
    cells: list = []
    section = top
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "[[cell]]":
            section = {}
            cells.append(section)
            continue
        if line == "[meta]":
            section = meta
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        section[key.strip()] = _parse(value.strip(), f"{path}:{lineno}")

    if top.get("format") != FORMAT_NAME:
        raise FormatError(f"{path}: not a {FORMAT_NAME} manifest (format = {top.get('format')!r})")
    if top.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {top.get('version')!r}, expected {FORMAT_VERSION}")
    try:
        parsed = []
        for c in cells:
            label = Label(**{k: c[k] for k in LABEL_FIELDS}, snr_db=float(c.get("snr_db", float("nan"))))
            parsed.append(Cell(label, int(c["offset"]), int(c["count"])))
        manifest = DatasetManifest(
            block_len=int(top["block_len"]),
            cells=parsed,
            codebook=top.get("codebook", "custom"),
            aoas=tuple(float(a) for a in top.get("aoas", [0.0])),
            master_seed=int(top.get("master_seed", 0)),
            version=int(top["version"]),
            meta=meta,
        )
    except KeyError as exc:
        raise FormatError(f"{path}: missing manifest field {exc}") from None
    if "num_blocks" in top and top["num_blocks"] != manifest.num_blocks:
        raise FormatError(
            f"{path}: num_blocks = {top['num_blocks']} but cells sum to {manifest.num_blocks}"
        )
    return manifest


# --- writing ---------------------------------------------------------------

class DatasetWriter:
    """Streams labeled blocks into a dataset directory.

    Blocks go to a temporary file that is renamed on ``finalize``, so a
    reader never sees a half-written dataset. Consecutive blocks with the
    same label are merged into one cell.
    """

    def __init__(self, path, block_len: int, codebook: str = "custom",
                 aoas: Sequence[float] = (0.0,), master_seed: int = 0, meta: dict | None = None):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.manifest = DatasetManifest(block_len, [], codebook, tuple(aoas), master_seed, meta=dict(meta or {}))
        self._tmp = self.path / (BLOCKS_FILE + ".part")
        self._fh: BinaryIO | None = open(self._tmp, "wb")
        self._offset = 0

    def write(self, block, label: Label) -> None:
        if self._fh is None:
            raise RuntimeError("writer already finalized")
        pairs = to_iq_pairs(block)
        if pairs.shape[0] != self.manifest.block_len:
            raise ValueError(f"block has {pairs.shape[0]} samples, dataset uses {self.manifest.block_len}")
        if not np.all(np.isfinite(pairs)):
            raise ValueError("refusing to store non-finite samples")
        try:
            self._fh.write(pairs.tobytes())
        except OSError as exc:
            raise OSError(f"write failed at byte offset {self._offset}: {exc}") from exc
        cells = self.manifest.cells
        if cells and cells[-1].label == label:
            last = cells[-1]
            cells[-1] = Cell(last.label, last.offset, last.count + 1)
        else:
            cells.append(Cell(label, self._offset, 1))
        self._offset += self.manifest.block_bytes

    def finalize(self) -> DatasetManifest:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
            os.replace(self._tmp, self.path / BLOCKS_FILE)
            write_manifest(self.manifest, self.path / MANIFEST_FILE)
        return self.manifest

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.finalize()
        elif self._fh is not None:
            self._fh.close()
            self._fh = None
            self._tmp.unlink(missing_ok=True)


def write_blocks(path, blocks, labels, **kwargs) -> DatasetManifest:
    blocks = list(blocks)
    if not blocks:
        raise ValueError("no blocks to write")
    k = to_iq_pairs(blocks[0]).shape[0]
    with DatasetWriter(path, k, **kwargs) as w:
        for b, lab in zip(blocks, labels, strict=True):
            w.write(b, lab)
    return w.manifest


# --- reading ---------------------------------------------------------------

class IQDataset:
    """Read-only view of a dataset directory; safe to share across threads."""

    def __init__(self, path):
        self.path = Path(path)
        self.manifest = read_manifest(self.path / MANIFEST_FILE)
        self.blocks_path = self.path / BLOCKS_FILE
        self._validate()
        self._data: np.ndarray | None = None

    def _validate(self) -> None:
        m = self.manifest
        bb = m.block_bytes
        size = self.blocks_path.stat().st_size
        if size % bb:
            start = (size // bb) * bb
            raise FormatError(
                f"{self.blocks_path}: truncated block at byte offset {start} "
                f"({size - start} of {bb} bytes present)"
            )
        expected = 0
        for i, c in enumerate(m.cells):
            if c.offset != expected:
                raise FormatError(f"cell {i} starts at byte offset {c.offset}, expected {expected}")
            expected += c.count * bb
        if expected != size:
            raise FormatError(
                f"{self.blocks_path}: manifest accounts for {expected} bytes "
                f"({m.num_blocks} blocks) but file holds {size} bytes; mismatch at byte offset {min(expected, size)}"
            )

    def __len__(self) -> int:
        return self.manifest.num_blocks

    @property
    def block_len(self) -> int:
        return self.manifest.block_len

    @property
    def data(self) -> np.ndarray:
        """All blocks as a read-only (N, K, 2) float32 memory map."""
        if self._data is None:
            if len(self) == 0:
                self._data = np.zeros((0, self.block_len, 2), _SAMPLE)
            else:
                self._data = np.memmap(self.blocks_path, dtype=_SAMPLE, mode="r",
                                       shape=(len(self), self.block_len, 2))
        return self._data

    def labels(self, name: str) -> np.ndarray:
        """Per-block values of one label field (``txb``, ``snr_db``, ...)."""
        parts = [np.full(c.count, getattr(c.label, name)) for c in self.manifest.cells]
        return np.concatenate(parts) if parts else np.zeros(0)

    def cell_ids(self) -> np.ndarray:
        """Per-block index of the cell a block belongs to."""
        return np.repeat(np.arange(len(self.manifest.cells)), [c.count for c in self.manifest.cells])

    def label_of(self, index: int) -> Label:
        for c in self.manifest.cells:
            first = c.offset // self.manifest.block_bytes
            if first <= index < first + c.count:
                return c.label
        raise IndexError(index)

    def select(self, **criteria) -> np.ndarray:
        """Block ids whose labels match every ``field=value`` criterion."""
        mask = np.ones(len(self), dtype=bool)
        for name, value in criteria.items():
            if name not in LABEL_FIELDS:
                raise ValueError(f"cannot select on {name!r}; fields are {LABEL_FIELDS}")
            vals = self.labels(name)
            if isinstance(value, (list, tuple, set, np.ndarray)):
                mask &= np.isin(vals, list(value))
            else:
                mask &= vals == value
        return np.flatnonzero(mask)

    def read_blocks(self, **criteria) -> Iterator[IQBlock]:
        ids = self.select(**criteria)
        data = self.data
        for i in ids:
            yield IQBlock(np.array(data[i]), int(i), self.label_of(int(i)))

    def load(self, ids) -> np.ndarray:
        return np.asarray(self.data[np.asarray(ids, dtype=np.int64)])


def read_blocks(path, **criteria) -> Iterator[IQBlock]:
    return IQDataset(path).read_blocks(**criteria)


def iter_iqb(stream: BinaryIO, block_len: int, chunk_blocks: int = 64) -> Iterator[np.ndarray]:
    """Yield complex blocks from a raw .iqb byte stream (file or stdin)."""
    bb = block_len * 2 * _SAMPLE.itemsize
    offset = 0
    pending = b""
    while True:
        chunk = stream.read(bb * chunk_blocks)
        if not chunk:
            break
        pending += chunk
        n = len(pending) // bb
        for i in range(n):
            pairs = np.frombuffer(pending, dtype=_SAMPLE, count=2 * block_len, offset=i * bb)
            yield pairs[0::2].astype(np.float64) + 1j * pairs[1::2].astype(np.float64)
        pending = pending[n * bb:]
        offset += n * bb
    if pending:
        raise FormatError(f"truncated block at byte offset {offset} ({len(pending)} of {bb} bytes present)")


# --- splits and batches ----------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")


def _largest_remainder(counts: np.ndarray, total: int) -> np.ndarray:
    ideal = counts * (total / counts.sum()) if counts.sum() else counts * 0.0
    base = np.floor(ideal).astype(int)
    rest = total - base.sum()
    order = np.argsort(-(ideal - base), kind="stable")
    base[order[:rest]] += 1
    return base


def split(dataset: IQDataset, spec: SplitSpec = SplitSpec(), target: str = "txb",
          ids: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/test partition.

    Every class gets round(fraction * n_class) training blocks, spread over
    its cells by largest remainder, so each cell is within one block of
    its exact share. Returns sorted id arrays.
    """
    all_ids = np.arange(len(dataset)) if ids is None else np.sort(np.asarray(ids))
    if all_ids.size == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    cell_of = dataset.cell_ids()[all_ids]
    cls_of = dataset.labels(target)[all_ids]
    train = []
    for cls in np.unique(cls_of):
        cells = np.unique(cell_of[cls_of == cls])
        members = [all_ids[(cell_of == c)] for c in cells]
        counts = np.array([m.size for m in members])
        n_train = int(np.floor(spec.train_fraction * counts.sum() + 0.5))
        alloc = _largest_remainder(counts, n_train)
        for m, a in zip(members, alloc):
            train.append(rng.permutation(m)[:a])
    train_ids = np.sort(np.concatenate(train))
    test_ids = np.setdiff1d(all_ids, train_ids)
    return train_ids, test_ids


def to_tensor(blocks: Sequence, normalize: bool = False) -> np.ndarray:
    """Stack L blocks of K samples into an (L, K, 2) float64 tensor."""
    pairs = [to_iq_pairs(b.samples if isinstance(b, IQBlock) else b) for b in blocks]
    if not pairs:
        raise ValueError("to_tensor needs at least one block")
    lengths = {p.shape[0] for p in pairs}
    if len(lengths) != 1:
        raise ValueError(f"ragged block lengths {sorted(lengths)}")
    t = np.stack(pairs).astype(np.float64)
    if normalize:
        p = np.mean(np.sum(t ** 2, axis=-1))
        if p > 0:
            t /= np.sqrt(p)
    return t


def from_tensor(t: np.ndarray) -> list[np.ndarray]:
    """Inverse of to_tensor in storage precision: list of (K, 2) float32."""
    return [row.astype(_SAMPLE) for row in np.asarray(t)]


def group_examples(dataset: IQDataset, ids, L: int = 1, stride: int | None = None) -> np.ndarray:
    """Chunk ids into (n, L) groups of consecutive blocks from one cell.

    ``stride`` defaults to L (non-overlapping groups); a smaller stride
    yields overlapping windows, e.g. stride 1 starts a group at every block.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    stride = L if stride is None else stride
    if stride < 1:
        raise ValueError("stride must be >= 1")
    ids = np.sort(np.asarray(ids, dtype=np.int64))
    cell_of = dataset.cell_ids()[ids]
    groups = []
    for c in np.unique(cell_of):
        members = ids[cell_of == c]
        if members.size >= L:
            starts = np.arange(0, members.size - L + 1, stride)
            groups.append(members[starts[:, None] + np.arange(L)])
    if not groups:
        return np.zeros((0, L), dtype=np.int64)
    return np.concatenate(groups)


class GroupedExamples:
    """Lazy (n, L, K, 2) float64 view over grouped block ids.

    Indexing with an int, slice or id array gathers the blocks of those
    groups from ``data`` (an (N, K, 2) array or memmap); with ``normalize``
    each example is scaled to unit mean power over its L*K samples.
    """

    def __init__(self, data: np.ndarray, groups: np.ndarray, normalize: bool = False):
        self.data = data
        self.groups = np.atleast_2d(np.asarray(groups, dtype=np.int64))
        self.normalize = normalize

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def shape(self) -> tuple:
        return (len(self.groups), self.groups.shape[1]) + tuple(self.data.shape[1:])

    def __getitem__(self, idx) -> np.ndarray:
        g = self.groups[idx]
        x = np.asarray(self.data[g.reshape(-1)], dtype=np.float64).reshape(g.shape + tuple(self.data.shape[1:]))
        if self.normalize:
            p = np.mean(np.sum(x ** 2, axis=-1), axis=(-2, -1), keepdims=True)[..., None]
            x = np.divide(x, np.sqrt(p), out=x, where=p > 0)
        return x


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return np.random.default_rng(np.random.SeedSequence([seed, epoch])).permutation(n)


def batch_iter(examples: np.ndarray, labels: np.ndarray, batch_size: int = 100, seed: int = 0,
               epoch: int = 0, loader=None, shuffle: bool = True):
    """Yield (tensor, label) batches covering every example once.

    ``examples`` is an (n, L) array of block ids and ``labels`` the class of
    each example. ``loader`` maps a flat id array to (n*L, K, 2) samples;
    without it the raw id groups are yielded instead of tensors.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    examples = np.asarray(examples)
    if examples.ndim == 1:
        examples = examples[:, None]
    labels = np.asarray(labels)
    order = epoch_order(len(examples), seed, epoch) if shuffle else np.arange(len(examples))
    for start in range(0, len(order), batch_size):
        sel = order[start:start + batch_size]
        group = examples[sel]
        if loader is None:
            yield group, labels[sel]
        else:
            flat = loader(group.ravel())
            x = np.asarray(flat, dtype=np.float64).reshape(group.shape + flat.shape[1:])
            yield x, labels[sel]
