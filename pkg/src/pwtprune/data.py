"""Datasets: IDX (MNIST-style) and CIFAR binary loaders, synthetic blobs, batching.

Images are float arrays [n, C, H, W] normalized per channel with statistics
taken from the training split; pass those ``stats`` when loading a test split.
"""
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR10_RECORD = 1 + 3 * 32 * 32
CIFAR100_RECORD = 2 + 3 * 32 * 32


class DataFormatError(ValueError):
    pass


class TruncatedFileError(DataFormatError):
    pass


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    stats: tuple | None = None

    def __post_init__(self):
        if len(self.images) == 0:
            raise ValueError("dataset is empty")
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self):
        return self.images.shape[1:]


def channel_stats(images):
    mean = images.mean(axis=(0, 2, 3), dtype=np.float64)
    std = images.std(axis=(0, 2, 3), dtype=np.float64)
    std[std == 0] = 1.0
    return mean, std


def normalize(images, stats):
    mean, std = stats
    return (images - mean[None, :, None, None]) / std[None, :, None, None]


def _dataset(raw_images, labels, num_classes, stats):
    images = raw_images.astype(np.float64)
    if stats is None:
        stats = channel_stats(images)
    return Dataset(normalize(images, stats), labels.astype(np.int64), num_classes, stats)


def read_idx(path, expected_magic=None):
    """Raw uint8 contents of an IDX file, shaped by its header."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise TruncatedFileError(f"{path}: truncated header")
    (magic,) = struct.unpack(">I", data[:4])
    if magic not in (IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC) or (expected_magic and magic != expected_magic):
        raise DataFormatError(f"{path}: bad magic 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(data) < header:
        raise TruncatedFileError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    expected = int(np.prod(dims))
    body = len(data) - header
    if body < expected:
        raise TruncatedFileError(f"{path}: expected {expected} data bytes, found {body}")
    if body > expected:
        raise DataFormatError(f"{path}: {body - expected} unexpected trailing bytes")
    return np.frombuffer(data, dtype=np.uint8, offset=header).reshape(dims)


def write_idx(path, array):
    array = np.asarray(array)
    if array.dtype != np.uint8 or array.ndim not in (1, 3):
        raise ValueError("IDX writer supports uint8 label vectors and [n, H, W] image stacks")
    magic = IDX_LABELS_MAGIC if array.ndim == 1 else IDX_IMAGES_MAGIC
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        f.write(struct.pack(f">{array.ndim}I", *array.shape))
        f.write(np.ascontiguousarray(array).tobytes())


def load_idx(images_path, labels_path, num_classes=None, stats=None):
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if len(images) != len(labels):
        raise DataFormatError(f"{len(images)} images but {len(labels)} labels")
    num_classes = num_classes or int(labels.max()) + 1
    return _dataset(images[:, None, :, :] / 255.0, labels, num_classes, stats)


def _cifar_variant(sizes):
    fits10 = all(s % CIFAR10_RECORD == 0 for s in sizes)
    fits100 = all(s % CIFAR100_RECORD == 0 for s in sizes)
    if fits10 and not fits100:
        return "cifar10"
    if fits100 and not fits10:
        return "cifar100"
    if not fits10 and not fits100:
        raise DataFormatError("file length is not a multiple of the CIFAR record size")
    raise DataFormatError("record size is ambiguous; pass variant='cifar10' or 'cifar100'")


def load_cifar_binary(paths, variant=None, stats=None):
    """CIFAR-10 (3073-byte) or CIFAR-100 (3074-byte, fine label) records."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    blobs = [Path(p).read_bytes() for p in paths]
    if not blobs:
        raise ValueError("no CIFAR files given")
    if variant is None:
        variant = _cifar_variant([len(b) for b in blobs])
    record = {"cifar10": CIFAR10_RECORD, "cifar100": CIFAR100_RECORD}[variant]
    images, labels = [], []
    for path, blob in zip(paths, blobs):
        if len(blob) % record:
            raise DataFormatError(f"{path}: length {len(blob)} is not a multiple of {record}")
        rows = np.frombuffer(blob, dtype=np.uint8).reshape(-1, record)
        labels.append(rows[:, record - 3073])
        images.append(rows[:, record - 3072:].reshape(-1, 3, 32, 32))
    num_classes = 10 if variant == "cifar10" else 100
    return _dataset(np.concatenate(images) / 255.0, np.concatenate(labels), num_classes, stats)


def synthetic_blobs(num_classes, n, image_side, seed, channels=1, noise=1.0, jitter=2, standardize=True):
    """Class-conditional Gaussian-textured images.

    Each class owns a smooth random template; a sample is its template,
    shifted by up to ``jitter`` pixels, plus white noise of std ``noise``.
    Labels are balanced to within one and shuffled.
    """
    if min(num_classes, n, image_side, channels) < 1:
        raise ValueError("num_classes, n, image_side and channels must be positive")
    rng = np.random.default_rng(seed)
    sigma = max(image_side / 8.0, 0.5)
    templates = gaussian_filter(
        rng.normal(size=(num_classes, channels, image_side, image_side)),
        sigma=(0, 0, sigma, sigma), mode="wrap",
    )
    templates /= templates.std(axis=(1, 2, 3), keepdims=True)
    labels = rng.permutation(np.arange(n) % num_classes)
    shifts = rng.integers(-jitter, jitter + 1, size=(n, 2)) if jitter else np.zeros((n, 2), dtype=int)
    images = np.empty((n, channels, image_side, image_side))
    for i in range(n):
        images[i] = np.roll(templates[labels[i]], tuple(shifts[i]), axis=(1, 2))
    images += noise * rng.normal(size=images.shape)
    stats = None
    if standardize:
        stats = channel_stats(images)
        images = normalize(images, stats)
    return Dataset(images, labels.astype(np.int64), num_classes, stats)


def split(dataset, n_first):
    """First ``n_first`` samples and the rest, renormalized with the first part's statistics."""
    if not 0 < n_first < len(dataset):
        raise ValueError(f"split point {n_first} outside (0, {len(dataset)})")
    imgs = dataset.images
    if dataset.stats is not None:
        mean, std = dataset.stats
        imgs = imgs * std[None, :, None, None] + mean[None, :, None, None]
    stats = channel_stats(imgs[:n_first])
    first = Dataset(normalize(imgs[:n_first], stats), dataset.labels[:n_first], dataset.num_classes, stats)
    rest = Dataset(normalize(imgs[n_first:], stats), dataset.labels[n_first:], dataset.num_classes, stats)
    return first, rest


def batches(dataset, batch_size, seed, epoch):
    """Shuffled mini-batches; the order depends only on (seed, epoch)."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng([seed, epoch]).permutation(len(dataset))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield dataset.images[idx], dataset.labels[idx]
