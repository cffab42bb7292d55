"""Procedural class-conditional image datasets and the SLFDSET1 file format.

Each class has a template made of a positioned Gaussian blob plus a stripe
texture at a class-specific orientation. Samples jitter the blob position,
scale the amplitude and add pixel noise.

SLFDSET1 layout (little endian)::

    b"SLFDSET1" | u32 N, C, channels, H, W | f32 images[N*channels*H*W] | u8 labels[N]
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .rng import stream

MAGIC = b"SLFDSET1"
HEADER_SIZE = 8 + 5 * 4
STD_FLOOR = 1e-6
RESOLUTIONS = (8, 16, 32)


@dataclass
class Dataset:
    images: np.ndarray   # N x channels x H x W, float32
    labels: np.ndarray   # N, uint8-representable class indices
    class_count: int
    split: str = "train"

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or len(self.images) != len(self.labels):
            raise ValueError(f"images {self.images.shape} and labels {self.labels.shape} disagree")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError("label out of range")

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def class_indices(self, c):
        return np.flatnonzero(self.labels == c)

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.class_count)

    def validate(self):
        """Check the invariants of a raw (un-normalized) dataset."""
        if np.any(self.class_counts() < 1):
            raise ValueError("every class needs at least one example")
        if self.images.size and (self.images.min() < -1 or self.images.max() > 1):
            raise ValueError("pixels outside [-1, 1]")
        return self

    def __eq__(self, other):
        return (isinstance(other, Dataset) and self.class_count == other.class_count
                and np.array_equal(self.labels, other.labels)
                and self.images.shape == other.images.shape
                and self.images.tobytes() == other.images.tobytes())


# --------------------------------------------------------------------------
# procedural generation


def _class_geometry(c, num_classes, res):
    """Blob centre and stripe angle for class ``c``."""
    angle = np.pi * c / num_classes
    # blob centres spread on a ring, offset by half a step so neighbours differ in angle and place
    phi = 2 * np.pi * (c + 0.5) / num_classes
    radius = 0.28 * res
    centre = (res / 2 + radius * np.sin(phi), res / 2 + radius * np.cos(phi))
    return centre, angle


def render_template(c, num_classes, res, shift=(0.0, 0.0)):
    """Template of class ``c``; ``shift`` moves the blob, the stripes stay on the image grid."""
    (cy, cx), angle = _class_geometry(c, num_classes, res)
    yy, xx = np.mgrid[0:res, 0:res].astype(np.float64)
    sigma = 0.12 * res
    by, bx = cy + shift[0], cx + shift[1]
    blob = np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / (2 * sigma ** 2))
    period = res / 4
    u = (xx - res / 2) * np.cos(angle) + (yy - res / 2) * np.sin(angle)
    stripes = np.cos(2 * np.pi * u / period)
    return 0.6 * blob + 0.3 * stripes - 0.1


def _draw(c, num_classes, res, n, rng, jitter, amp_sigma, pix_sigma):
    out = np.empty((n, 1, res, res))
    for i in range(n):
        shift = rng.integers(-jitter, jitter + 1, size=2) if jitter else (0, 0)
        amp = 1.0 + amp_sigma * rng.standard_normal()
        img = amp * render_template(c, num_classes, res, shift)
        out[i, 0] = img + pix_sigma * rng.standard_normal((res, res))
    return np.clip(out, -1.0, 1.0)


def gen_procedural(num_classes=10, n_train_per_class=200, n_test_per_class=100, res=16,
                   seed=0, jitter=2, amp_sigma=0.15, pix_sigma=0.1):
    """Train and test splits drawn from the same distribution with disjoint streams."""
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    if num_classes > 256:
        raise ValueError("labels are stored as u8; at most 256 classes")
    if res not in RESOLUTIONS:
        raise ValueError(f"resolution must be one of {RESOLUTIONS}, got {res}")
    splits = []
    for name, per_class in (("train", n_train_per_class), ("test", n_test_per_class)):
        images, labels = [], []
        for c in range(num_classes):
            rng = stream(seed, f"data:{name}", c)
            images.append(_draw(c, num_classes, res, per_class, rng, jitter, amp_sigma, pix_sigma))
            labels.append(np.full(per_class, c))
        splits.append(Dataset(np.concatenate(images), np.concatenate(labels), num_classes, name))
    return splits[0], splits[1]


def templates(num_classes, res):
    return np.stack([render_template(c, num_classes, res)[None] for c in range(num_classes)])


# --------------------------------------------------------------------------
# files


def save_dataset(d, path):
    n, ch, h, w = d.images.shape
    if d.class_count > 256:
        raise ValueError("SLFDSET1 stores labels as u8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<5I", n, d.class_count, ch, h, w))
        fh.write(np.ascontiguousarray(d.images, dtype="<f4").tobytes())
        fh.write(d.labels.astype(np.uint8).tobytes())


def load_dataset(path, split="train"):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:8]!r}")
    if len(blob) < HEADER_SIZE:
        raise FormatError(f"{path}: truncated header")
    n, c, ch, h, w = struct.unpack("<5I", blob[8:HEADER_SIZE])
    npix = n * ch * h * w
    expected = HEADER_SIZE + 4 * npix + n
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    images = np.frombuffer(blob, dtype="<f4", count=npix, offset=HEADER_SIZE).reshape(n, ch, h, w)
    labels = np.frombuffer(blob, dtype=np.uint8, count=n, offset=HEADER_SIZE + 4 * npix)
    return Dataset(images.astype(np.float32), labels.astype(np.int64), c, split)


def load_csv(path, image_shape, class_count=None, split="train"):
    """Rows of ``label,pix0,...,pixK`` with K+1 = prod(image_shape)."""
    raw = np.loadtxt(path, delimiter=",", ndmin=2)
    npix = int(np.prod(image_shape))
    if raw.shape[1] != npix + 1:
        raise FormatError(f"{path}: expected {npix + 1} columns, found {raw.shape[1]}")
    labels = raw[:, 0].astype(np.int64)
    if not np.array_equal(labels, raw[:, 0]):
        raise FormatError(f"{path}: non-integer labels")
    if class_count is None:
        class_count = int(labels.max()) + 1
    return Dataset(raw[:, 1:].reshape((len(raw),) + tuple(image_shape)), labels, class_count, split)


# --------------------------------------------------------------------------
# normalization


@dataclass
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray
    floored: np.ndarray   # channels whose std hit the floor


def normalize(train, test=None):
    """Standardize each channel with train-split statistics.

    Returns float64 image arrays (normalized data leaves [-1, 1]) and the
    stats needed by :func:`denormalize`.
    """
    x = train.images.astype(np.float64)
    mean = x.mean(axis=(0, 2, 3))
    std = x.std(axis=(0, 2, 3))
    floored = std < STD_FLOOR
    std = np.where(floored, STD_FLOOR, std)
    stats = ChannelStats(mean, std, floored)
    out = [apply_stats(train.images, stats)]
    if test is not None:
        out.append(apply_stats(test.images, stats))
    return (*out, stats)


def apply_stats(images, stats):
    return (np.asarray(images, dtype=np.float64) - stats.mean[:, None, None]) / stats.std[:, None, None]


def denormalize(images, stats):
    return np.asarray(images, dtype=np.float64) * stats.std[:, None, None] + stats.mean[:, None, None]
