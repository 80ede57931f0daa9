"""Datasets: CIFAR binary I/O, a procedural synthetic generator, batching and
the standard crop/flip augmentation."""

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, InputError

CIFAR_VARIANTS = {"cifar10": (1, 10), "cifar100_fine": (2, 100)}
CIFAR_PIXELS = 3 * 32 * 32


@dataclass
class Dataset:
    """Images in [0, 1] (before normalization) with integer labels.

    ``mean``/``std`` are the per-channel normalization constants, normally
    computed from the training split with :func:`with_normalization`.
    """

    images: np.ndarray
    labels: np.ndarray
    n_classes: int
    class_names: list = None
    mean: np.ndarray = None
    std: np.ndarray = None
    coarse_labels: np.ndarray = None

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or len(self.images) < 1:
            raise InputError(f"images must be M x C x H x W with M >= 1, got {self.images.shape}")
        if self.labels.shape != (len(self.images),):
            raise InputError("labels must be a vector with one entry per image")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise InputError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(self.images)):
            raise InputError("images contain non-finite values")

    def __len__(self):
        return len(self.labels)

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def subset(self, idx):
        coarse = None if self.coarse_labels is None else self.coarse_labels[idx]
        return replace(self, images=self.images[idx], labels=self.labels[idx], coarse_labels=coarse)


def with_normalization(dataset, reference=None):
    """Attach per-channel mean/std computed from ``reference`` (default: itself)."""
    ref = dataset if reference is None else reference
    mean = ref.images.mean(axis=(0, 2, 3))
    std = ref.images.std(axis=(0, 2, 3))
    std = np.where(std > 0, std, 1.0)
    return replace(dataset, mean=mean, std=std)


def normalize(x, mean, std):
    return (x - mean[None, :, None, None]) / std[None, :, None, None]


def denormalize(x, mean, std):
    return x * std[None, :, None, None] + mean[None, :, None, None]


def split_holdout(dataset, fraction, seed):
    """Seeded (train, holdout) split; the holdout gets round(fraction * M) samples."""
    if not 0 < fraction < 1:
        raise ConfigurationError(f"holdout fraction must be in (0, 1), got {fraction}")
    n = len(dataset)
    n_hold = int(round(fraction * n))
    if n_hold < 1 or n_hold >= n:
        raise ConfigurationError(f"holdout of {fraction} leaves an empty split for M={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[n_hold:])), dataset.subset(np.sort(perm[:n_hold]))


# ---------------------------------------------------------------- CIFAR binary

def _record_layout(variant):
    if variant not in CIFAR_VARIANTS:
        raise ConfigurationError(f"variant must be one of {tuple(CIFAR_VARIANTS)}, got {variant!r}")
    return CIFAR_VARIANTS[variant]


def load_cifar_binary(path, variant="cifar10"):
    """Decode one or more CIFAR binary files into a single Dataset.

    ``path`` may be a file, a list of files, or a directory (every ``*.bin``
    inside, sorted by name). CIFAR-100 records carry a coarse then a fine
    label byte; the fine label becomes ``labels`` and the coarse one is kept in
    ``coarse_labels`` so that re-encoding is lossless.
    """
    n_label_bytes, n_classes = _record_layout(variant)
    rec = n_label_bytes + CIFAR_PIXELS
    if isinstance(path, (list, tuple)):
        files = [Path(p) for p in path]
    elif Path(path).is_dir():
        files = sorted(Path(path).glob("*.bin"))
        if not files:
            raise FileNotFoundError(f"no *.bin files in {path}")
    else:
        files = [Path(path)]
    images, labels, coarse = [], [], []
    for f in files:
        raw = np.fromfile(f, dtype=np.uint8)
        if raw.size == 0 or raw.size % rec:
            whole = raw.size // rec
            raise FormatError(
                f"{f}: truncated record at byte offset {whole * rec} "
                f"(file length {raw.size} is not a multiple of {rec})")
        raw = raw.reshape(-1, rec)
        lab = raw[:, n_label_bytes - 1].astype(np.int64)
        bad = np.flatnonzero(lab >= n_classes)
        if bad.size:
            raise FormatError(
                f"{f}: label byte {lab[bad[0]]} >= {n_classes} at byte offset "
                f"{bad[0] * rec + n_label_bytes - 1}")
        images.append(raw[:, n_label_bytes:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0)
        labels.append(lab)
        if n_label_bytes == 2:
            coarse.append(raw[:, 0].astype(np.int64))
    return Dataset(
        images=np.concatenate(images), labels=np.concatenate(labels), n_classes=n_classes,
        coarse_labels=np.concatenate(coarse) if coarse else None)


def encode_cifar_binary(dataset, path, variant="cifar10"):
    """Write ``dataset`` in the CIFAR binary record layout.

    Pixels are quantized with ``round(255 * x)``; images must be 3 x 32 x 32.
    """
    n_label_bytes, n_classes = _record_layout(variant)
    if dataset.image_shape != (3, 32, 32):
        raise InputError(f"CIFAR layout needs 3x32x32 images, got {dataset.image_shape}")
    if dataset.labels.max() >= n_classes:
        raise InputError(f"labels exceed the {n_classes} classes of {variant}")
    pixels = np.rint(np.clip(dataset.images, 0, 1) * 255).astype(np.uint8).reshape(len(dataset), -1)
    cols = [dataset.labels.astype(np.uint8)[:, None]]
    if n_label_bytes == 2:
        coarse = dataset.coarse_labels
        if coarse is None:
            coarse = np.zeros(len(dataset), dtype=np.int64)
        cols.insert(0, np.asarray(coarse).astype(np.uint8)[:, None])
    Path(path).write_bytes(np.hstack(cols + [pixels]).tobytes())
    return Path(path)


# ------------------------------------------------------------------ synthetic

NOISE_SIGMA = 0.15


def _class_prototypes(n_classes, n_channels, class_seed):
    rng = np.random.default_rng([class_seed, n_classes, n_channels])
    angles = np.pi * np.arange(n_classes) / n_classes + rng.uniform(0, np.pi / n_classes)
    freqs = 2.0 + np.arange(n_classes) % 3
    # tints come in pairs so colour alone never identifies a class
    base = rng.uniform(0.35, 1.0, size=((n_classes + 1) // 2, n_channels))
    tints = base[np.arange(n_classes) // 2]
    return angles, freqs, tints


def make_synthetic(n_classes, samples_per_class, image_shape=(3, 32, 32), seed=0,
                   class_seed=0, angle_jitter=0.16, tint_jitter=0.2):
    """Balanced procedural dataset of tinted, oriented bar gratings.

    Class k has a fixed bar orientation, spatial frequency and colour tint
    (shared by ``class_seed``, so train and test sets generated with different
    ``seed`` values describe the same classes). Each sample jitters the
    orientation, phase, contrast and tint, then adds Gaussian pixel noise
    (sigma 0.15) and clips to [0, 1]. Samples are ordered class by class.
    """
    if n_classes < 2:
        raise ConfigurationError("n_classes must be >= 2")
    if samples_per_class < 1:
        raise ConfigurationError("samples_per_class must be >= 1")
    c, h, w = (int(s) for s in image_shape)
    angles, freqs, tints = _class_prototypes(n_classes, c, class_seed)
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_classes), samples_per_class)
    m = len(labels)

    theta = angles[labels] + rng.normal(0, angle_jitter, m)
    freq = freqs[labels] * rng.uniform(0.85, 1.15, m)
    phase = rng.uniform(0, 2 * np.pi, m)
    contrast = rng.uniform(0.5, 1.0, m)
    tint = np.clip(tints[labels] + rng.normal(0, tint_jitter, (m, c)), 0.1, 1.0)
    brightness = rng.uniform(0.35, 0.65, m)

    yy, xx = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    proj = np.cos(theta)[:, None, None] * xx + np.sin(theta)[:, None, None] * yy
    wave = np.sin(2 * np.pi * freq[:, None, None] * proj + phase[:, None, None])
    bars = np.clip(3.0 * wave, -1.0, 1.0)
    images = (brightness[:, None, None, None]
              + 0.35 * contrast[:, None, None, None] * bars[:, None] * tint[:, :, None, None])
    images = images + rng.normal(0, NOISE_SIGMA, images.shape)
    images = np.clip(images, 0.0, 1.0)
    return Dataset(images=images, labels=labels, n_classes=n_classes,
                   class_names=[f"class_{k}" for k in range(n_classes)])


# ------------------------------------------------------------------- batching

@dataclass(frozen=True)
class BatchPlan:
    batch_size: int
    shuffle_seed: int = 0
    drop_last: bool = False


def batch_indices(n, plan):
    """Index arrays of one epoch under ``plan``."""
    if plan.batch_size < 1:
        raise ConfigurationError("batch_size must be positive")
    if plan.drop_last and plan.batch_size > n:
        raise ConfigurationError(
            f"batch_size {plan.batch_size} > dataset size {n} with drop_last leaves an empty epoch")
    perm = np.random.default_rng(plan.shuffle_seed).permutation(n)
    stop = n - n % plan.batch_size if plan.drop_last else n
    return [perm[i:i + plan.batch_size] for i in range(0, stop, plan.batch_size)]


def batches(dataset, plan):
    return [(dataset.images[idx], dataset.labels[idx]) for idx in batch_indices(len(dataset), plan)]


# --------------------------------------------------------- standard augment

def draw_standard_params(n, pad, flip_prob, rng):
    """Crop offsets (n x 2, each in [0, 2*pad]) and horizontal-flip flags."""
    if pad < 0:
        raise ConfigurationError("pad must be >= 0")
    if not 0 <= flip_prob <= 1:
        raise ConfigurationError("flip_prob must be in [0, 1]")
    offsets = rng.integers(0, 2 * pad + 1, size=(n, 2))
    flips = rng.random(n) < flip_prob
    return offsets, flips


def apply_standard(batch, pad, offsets, flips):
    batch = np.asarray(batch)
    n, _, h, w = batch.shape
    if pad:
        padded = np.pad(batch, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        out = np.empty_like(batch)
        for i, (r, c) in enumerate(offsets):
            out[i] = padded[i, :, r:r + h, c:c + w]
    else:
        out = batch.copy()
    out[flips] = out[flips, :, :, ::-1]
    return out


def standard_augment(batch, pad, flip_prob, rng):
    """Zero-pad, random crop back to H x W, then mirror with probability ``flip_prob``."""
    offsets, flips = draw_standard_params(len(batch), pad, flip_prob, rng)
    return apply_standard(batch, pad, offsets, flips)
