"""Image folders, splitting, batching and a synthetic stand-in dataset."""

from __future__ import annotations

import colorsys
import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .tensor import Prng

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
DEFAULT_SIZE = 100

# stream ids used to derive independent Prng streams from one seed
STREAM_SPLIT = 1
STREAM_SHUFFLE = 2
STREAM_SYNTH = 3


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    """Stacked images ``[N, 3, H, W]`` (float32 in [0, 1]) with integer labels.

    ``partition`` is set only for trees that ship their own train/test split
    (0 = train, 1 = test).
    """

    images: np.ndarray
    labels: np.ndarray
    class_names: list[str]
    source: str = ""
    partition: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DatasetError("images and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DatasetError("label outside the class range")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def image_shape(self) -> tuple[int, ...]:
        return tuple(self.images.shape[1:])

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        part = None if self.partition is None else self.partition[idx]
        return Dataset(self.images[idx], self.labels[idx], list(self.class_names), self.source, part)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update("\n".join(self.class_names).encode())
        h.update(self.labels.tobytes())
        h.update(np.ascontiguousarray(self.images, dtype=np.float32).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    mode: str = "random_stratified"

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.mode not in ("random_stratified", "directory_given"):
            raise ValueError(f"unknown split mode {self.mode!r}")


def decode_image(path: str | os.PathLike, size: int = DEFAULT_SIZE) -> np.ndarray:
    """Read one PNG/JPEG as a float32 ``[3, size, size]`` RGB array in [0, 1]."""
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if im.size != (size, size):
                im = im.resize((size, size), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float32)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from exc
    return np.ascontiguousarray(arr.transpose(2, 0, 1)) / np.float32(255.0)


def _class_files(root: Path) -> list[tuple[str, list[Path]]]:
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    classes = sorted(p for p in root.iterdir() if p.is_dir())
    if not classes:
        raise DatasetError(f"no class directories under {root}")
    out = []
    for cdir in classes:
        files = sorted(p for p in cdir.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DatasetError(f"class directory {cdir} holds no PNG/JPEG files")
        out.append((cdir.name, files))
    return out


def load_image_dir(root, size: int = DEFAULT_SIZE, workers: int | None = None) -> Dataset:
    """Load ``root/<class_name>/*.png|*.jpg`` with classes in sorted order."""
    root = Path(root)
    entries = _class_files(root)
    paths, labels = [], []
    for label, (_, files) in enumerate(entries):
        paths.extend(files)
        labels.extend([label] * len(files))
    # map() keeps submission order, so the sample order stays sorted
    with ThreadPoolExecutor(max_workers=workers or min(8, os.cpu_count() or 1)) as pool:
        images = list(pool.map(lambda p: decode_image(p, size), paths))
    return Dataset(np.stack(images), np.array(labels), [name for name, _ in entries], str(root))


def load_split_tree(root, size: int = DEFAULT_SIZE, train_dir: str = "Training", test_dir: str = "Test") -> Dataset:
    """Load a tree that already holds ``Training/`` and ``Test/`` subtrees."""
    root = Path(root)
    train = load_image_dir(root / train_dir, size)
    test = load_image_dir(root / test_dir, size)
    if train.class_names != test.class_names:
        raise DatasetError("Training and Test trees list different classes")
    part = np.concatenate([np.zeros(len(train), np.int8), np.ones(len(test), np.int8)])
    return Dataset(np.concatenate([train.images, test.images]),
                   np.concatenate([train.labels, test.labels]),
                   train.class_names, str(root), part)


def has_split_tree(root) -> bool:
    root = Path(root)
    return (root / "Training").is_dir() and (root / "Test").is_dir()


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Partition into (train, test).

    Stratified mode allocates ``round(f * N)`` training samples over classes
    by largest remainder, so each class is within one sample of its exact
    share and the total matches the global fraction.
    """
    if spec.mode == "directory_given":
        if ds.partition is None:
            raise DatasetError("dataset carries no Training/Test partition")
        return ds.subset(np.flatnonzero(ds.partition == 0)), ds.subset(np.flatnonzero(ds.partition == 1))

    per_class = [np.flatnonzero(ds.labels == c) for c in range(ds.num_classes)]
    for c, idx in enumerate(per_class):
        if len(idx) < 2:
            raise DatasetError(f"class {ds.class_names[c]!r} has {len(idx)} sample(s); need >= 2 to split")
    exact = np.array([spec.train_fraction * len(idx) for idx in per_class])
    counts = np.floor(exact).astype(np.int64)
    target = int(math.floor(spec.train_fraction * len(ds) + 0.5))
    remainder = exact - counts
    order = sorted(range(len(per_class)), key=lambda c: (-remainder[c], c))
    for c in order[: max(target - int(counts.sum()), 0)]:
        counts[c] += 1

    prng = Prng(spec.seed, (STREAM_SPLIT,))
    train_idx, test_idx = [], []
    for idx, k in zip(per_class, counts):
        perm = idx[prng.permutation(len(idx))]
        train_idx.append(perm[:k])
        test_idx.append(perm[k:])
    return ds.subset(np.sort(np.concatenate(train_idx))), ds.subset(np.sort(np.concatenate(test_idx)))


def one_hot(labels: Sequence[int], k: int, dtype=np.float32) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range for {k} classes")
    out = np.zeros((labels.size, k), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out


class BatchIter:
    """One epoch of shuffled mini-batches; the order depends only on (seed, epoch)."""

    def __init__(self, ds: Dataset, batch_size: int, epoch: int, seed: int, dtype=np.float32):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if len(ds) == 0:
            raise DatasetError("cannot batch an empty dataset")
        self.ds = ds
        self.batch_size = batch_size
        self.dtype = np.dtype(dtype)
        self.order = Prng(seed, (STREAM_SHUFFLE, epoch)).permutation(len(ds))
        self.position = 0

    def __len__(self) -> int:
        return -(-len(self.ds) // self.batch_size)

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        while self.position < len(self.order):
            idx = self.order[self.position : self.position + self.batch_size]
            self.position += len(idx)
            x = self.ds.images[idx].astype(self.dtype, copy=False)
            yield x, one_hot(self.ds.labels[idx], self.ds.num_classes, self.dtype)


def batches(ds: Dataset, batch_size: int, epoch: int, seed: int, dtype=np.float32) -> BatchIter:
    return BatchIter(ds, batch_size, epoch, seed, dtype)


def _shape_mask(kind: int, size: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    dy, dx = yy - cy, xx - cx
    if kind == 0:
        return dy * dy + dx * dx <= r * r
    if kind == 1:
        return (np.abs(dy) <= r * 0.85) & (np.abs(dx) <= r * 0.85)
    return np.abs(dy) + np.abs(dx) <= r * 1.2


def synth_dataset(classes: int, per_class: int, size: int = 32, seed: int = 0) -> Dataset:
    """Balanced synthetic RGB set: one hue and shape family per class.

    Each image is a dark noisy background with a filled disk, square or
    diamond at a random position and scale, coloured near the class hue.
    Pixels are quantised to 8 bits so the set survives a PNG round trip.
    """
    if classes < 2:
        raise ValueError("synth_dataset needs at least 2 classes")
    if per_class < 1 or size < 4:
        raise ValueError("per_class must be >= 1 and size >= 4")
    prng = Prng(seed, (STREAM_SYNTH,))
    jitter = 0.15 / classes
    images = np.empty((classes * per_class, 3, size, size), dtype=np.float32)
    labels = np.repeat(np.arange(classes), per_class)
    for k, c in enumerate(labels):
        u = prng.random(8)
        bg = 0.05 + 0.2 * u[0]
        r = size * (0.2 + 0.15 * u[1])
        cy = r + (size - 2 * r) * u[2]
        cx = r + (size - 2 * r) * u[3]
        hue = (c / classes + jitter * (2 * u[4] - 1)) % 1.0
        rgb = np.array(colorsys.hsv_to_rgb(hue, 0.7 + 0.3 * u[5], 0.7 + 0.3 * u[6]))
        img = np.full((3, size, size), bg)
        mask = _shape_mask(int(c) % 3, size, cy, cx, r)
        img[:, mask] = rgb[:, None]
        img += prng.normal((3, size, size), 0.04)
        images[k] = np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0
    names = [f"class_{c:02d}" for c in range(classes)]
    return Dataset(images, labels, names, f"synthetic(classes={classes}, per_class={per_class}, size={size}, seed={seed})")


def export_image_dir(ds: Dataset, root) -> list[Path]:
    """Write ``ds`` as ``root/<class>/<class>_<i>.png``; returns written paths."""
    root = Path(root)
    written = []
    counters = [0] * ds.num_classes
    for img, label in zip(ds.images, ds.labels):
        cdir = root / ds.class_names[label]
        cdir.mkdir(parents=True, exist_ok=True)
        path = cdir / f"{ds.class_names[label]}_{counters[label]:05d}.png"
        counters[label] += 1
        pixels = np.round(np.clip(img.transpose(1, 2, 0), 0, 1) * 255).astype(np.uint8)
        Image.fromarray(pixels, "RGB").save(path, format="PNG")
        written.append(path)
    return written
