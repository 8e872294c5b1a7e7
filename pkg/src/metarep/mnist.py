"""MNIST ingestion and digit-pair task construction.

IDX layout (big-endian)::

    bytes 0-1   zero
    byte  2     element type (0x08 = unsigned byte, ...)
    byte  3     number of dimensions
    then one uint32 per dimension, then the payload

Images are ``0x00000803`` (n, 28, 28) and labels ``0x00000801`` (n,).
Gzipped files are inflated transparently.
"""

from __future__ import annotations

import gzip
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from metarep import io
from metarep.errors import BadMagic, DuplicatePair, InsufficientSamples, TruncatedPayload
from metarep.linalg import SeededRng
from metarep.tasks import DATASET_FORMAT, TaskData

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

_DTYPES = {
    0x08: np.dtype("u1"),
    0x09: np.dtype("i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}

# Fifteen meta-training pairs; (1, 9) is held out for the few-shot task.
DEFAULT_META_PAIRS = (
    (0, 1), (2, 3), (0, 8), (8, 4), (4, 5),
    (6, 7), (2, 9), (3, 5), (6, 8), (7, 9),
    (1, 2), (3, 4), (5, 6), (0, 7), (1, 4),
)
FEWSHOT_PAIR = (1, 9)

FILE_NAMES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class IdxFile:
    magic: int
    dims: tuple
    payload: bytes

    @property
    def dtype(self) -> np.dtype:
        return _DTYPES[(self.magic >> 8) & 0xFF]

    def array(self) -> np.ndarray:
        return np.frombuffer(self.payload, dtype=self.dtype).reshape(self.dims)

    def to_bytes(self) -> bytes:
        head = struct.pack(">I", self.magic) + struct.pack(f">{len(self.dims)}I", *self.dims)
        return head + self.payload


def parse_idx(raw: bytes) -> IdxFile:
    if len(raw) < 4:
        raise TruncatedPayload("IDX blob shorter than its 4-byte magic")
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    (magic,) = struct.unpack_from(">I", raw)
    code, ndim = (magic >> 8) & 0xFF, magic & 0xFF
    if magic >> 16 or code not in _DTYPES or ndim == 0:
        raise BadMagic(f"bad IDX magic 0x{magic:08x}")
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise TruncatedPayload("IDX header is truncated")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    size = int(np.prod(dims, dtype=np.int64)) * _DTYPES[code].itemsize
    payload = raw[head:]
    if len(payload) < size:
        raise TruncatedPayload(f"payload has {len(payload)} bytes, header promises {size}")
    if len(payload) > size:
        raise TruncatedPayload(f"payload has {len(payload) - size} trailing bytes")
    return IdxFile(magic, tuple(dims), bytes(payload))


def make_idx(array: np.ndarray) -> IdxFile:
    """Wrap an unsigned-byte array as an IDX file (inverse of ``IdxFile.array``)."""
    a = np.ascontiguousarray(array, dtype=np.uint8)
    return IdxFile((0x08 << 8) | a.ndim, tuple(a.shape), a.tobytes())


def read_idx(path) -> IdxFile:
    return parse_idx(Path(path).read_bytes())


def _find(directory: Path, name: str) -> Path:
    for cand in (name, name + ".gz", name.replace("-idx", ".idx"), name.replace("-idx", ".idx") + ".gz"):
        if (directory / cand).exists():
            return directory / cand
    raise FileNotFoundError(f"{name}[.gz] not found in {directory}")


def load_mnist(mnist_dir, split: str = "train"):
    """``(images, labels)`` with images flattened to ``n x 784`` uint8."""
    directory = Path(mnist_dir)
    img_name, lbl_name = FILE_NAMES[split]
    images = read_idx(_find(directory, img_name))
    labels = read_idx(_find(directory, lbl_name))
    if images.magic != IMAGES_MAGIC or labels.magic != LABELS_MAGIC:
        raise BadMagic("unexpected magic for MNIST image/label files")
    imgs = images.array().reshape(images.dims[0], -1)
    lbls = labels.array()
    if imgs.shape[0] != lbls.shape[0]:
        raise ValueError("image and label counts differ")
    return imgs, lbls


@dataclass
class DigitPairTasks:
    pairs: list
    tasks: list  # list of TaskData, centred
    center: np.ndarray
    used: np.ndarray  # indices drawn for meta-training

    @property
    def k(self) -> int:
        return len(self.tasks)


def _check_pairs(pairs):
    seen = set()
    for a, b in pairs:
        if a == b:
            raise DuplicatePair(f"pair ({a}, {b}) has identical digits")
        key = frozenset((a, b))
        if key in seen:
            raise DuplicatePair(f"pair ({a}, {b}) appears twice")
        seen.add(key)


def _pick(rng: SeededRng, labels, digit, count, exclude=None):
    idx = np.flatnonzero(labels == digit)
    if exclude is not None and len(exclude):
        idx = np.setdiff1d(idx, exclude, assume_unique=True)
    if idx.size < count:
        raise InsufficientSamples(f"digit {digit}: need {count}, have {idx.size}")
    return idx[np.sort(rng.permutation(idx.size)[:count])]


def scale_pixels(images) -> np.ndarray:
    return np.asarray(images, dtype=np.float64) / 255.0


def build_digit_pair_tasks(images, labels, pairs=DEFAULT_META_PAIRS, per_class: int = 500,
                           seed: int = 0) -> DigitPairTasks:
    """One balanced binary task per digit pair; label 1 marks the first digit.

    Pixels are scaled to [0, 1] and centred by the per-pixel mean of all
    meta-training samples. Samples within a task are shuffled so that
    both halves used by the moment estimator mix the two classes.
    """
    pairs = [tuple(int(v) for v in p) for p in pairs]
    _check_pairs(pairs)
    labels = np.asarray(labels)
    raw_tasks = []
    used = []
    for j, (pos, neg) in enumerate(pairs):
        rng = SeededRng(seed, 1 + j)
        ip = _pick(rng, labels, pos, per_class)
        ineg = _pick(rng, labels, neg, per_class)
        idx = np.concatenate([ip, ineg])
        y = np.concatenate([np.ones(per_class), np.zeros(per_class)])
        order = rng.permutation(idx.size)
        raw_tasks.append((j, idx[order], y[order]))
        used.append(idx)
    all_x = [scale_pixels(images[idx]) for _, idx, _ in raw_tasks]
    center = np.mean(np.vstack(all_x), axis=0)
    tasks = [TaskData(j, x - center, y) for (j, _, y), x in zip(raw_tasks, all_x)]
    return DigitPairTasks(pairs, tasks, center, np.unique(np.concatenate(used)))


@dataclass
class FewShotSplit:
    X: np.ndarray
    y: np.ndarray
    X_eval: np.ndarray
    y_eval: np.ndarray
    train_idx: np.ndarray
    eval_idx: np.ndarray


def build_fewshot_task(images, labels, center, pair=FEWSHOT_PAIR, n: int = 8, eval_n: int = 1000,
                       seed: int = 0, meta_pairs=None, eval_images=None, eval_labels=None) -> FewShotSplit:
    """Disjoint train/eval samples for the held-out pair, centred like meta-training.

    Classes are stratified: ``ceil(n/2)`` positives and ``floor(n/2)``
    negatives (likewise for ``eval_n``). Eval samples come from
    ``eval_images`` when given, otherwise from the unused part of ``images``.
    """
    pos, neg = pair
    if meta_pairs is not None and frozenset(pair) in {frozenset(p) for p in meta_pairs}:
        warnings.warn(f"few-shot pair {pair} also appears in meta-training", stacklevel=2)
    labels = np.asarray(labels)
    rng = SeededRng(seed, 0)
    ip = _pick(rng, labels, pos, (n + 1) // 2)
    ineg = _pick(rng, labels, neg, n // 2)
    train_idx = np.concatenate([ip, ineg])
    y = np.concatenate([np.ones(ip.size), np.zeros(ineg.size)])

    if eval_images is None:
        eval_images, eval_labels, exclude = images, labels, train_idx
    else:
        eval_labels, exclude = np.asarray(eval_labels), None
    erng = SeededRng(seed, 1)
    ep = _pick(erng, eval_labels, pos, (eval_n + 1) // 2, exclude)
    en = _pick(erng, eval_labels, neg, eval_n // 2, exclude)
    eval_idx = np.concatenate([ep, en])
    y_eval = np.concatenate([np.ones(ep.size), np.zeros(en.size)])
    X = scale_pixels(images[train_idx]) - center
    X_eval = scale_pixels(eval_images[eval_idx]) - center
    return FewShotSplit(X, y, X_eval, y_eval, train_idx, eval_idx)


def save_digit_pair_tasks(tasks: DigitPairTasks, directory, seed: int | None = None) -> Path:
    """Write tasks in the dataset directory layout (no ``W``; adds ``center.bin``)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for pair, data in zip(tasks.pairs, tasks.tasks):
        pre = f"task_{data.task_id:05d}"
        io.write_matrix(directory / f"{pre}_x.bin", data.inputs)
        io.write_matrix(directory / f"{pre}_y.bin", data.labels)
        entries.append({"id": data.task_id, "kind": "digit_pair", "n": data.n, "pair": list(pair)})
    io.write_matrix(directory / "center.bin", tasks.center)
    io.write_json(directory / "header.json", {
        "format": DATASET_FORMAT, "version": 1, "d": int(tasks.center.size), "r": None,
        "k": tasks.k, "kind": "digit_pair", "seed": seed, "tasks": entries,
    })
    return directory
