"""Mixup, cutout and CutMix on normalized image batches.

Each transform returns a small record holding the augmented images and the
label bookkeeping its loss needs. Keyword-only arguments (``lam``,
``pairing``, ``centers``, ``apply``) pin the random draws; they exist so the
geometry can be checked by hand.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError


@dataclass
class MixupBatch:
    x_mix: np.ndarray
    y_i: np.ndarray
    y_j: np.ndarray
    lam: float
    pairing: np.ndarray


@dataclass
class CutoutBatch:
    x_cut: np.ndarray
    y: np.ndarray
    boxes: np.ndarray  # (N, 4) rows of r1, r2, c1, c2; half-open


@dataclass
class CutMixBatch:
    x_cm: np.ndarray
    y_i: np.ndarray
    y_j: np.ndarray
    lam_adj: float
    box: tuple  # r1, r2, c1, c2
    applied: bool
    pairing: np.ndarray


def _check_pairable(x, y):
    x = np.asarray(x)
    if x.ndim != 4 or len(x) < 2:
        raise InputError("mixing augmentations need a batch of at least 2 images")
    if len(y) != len(x):
        raise InputError("labels and images differ in length")
    return x, np.asarray(y)


def mixup(x, y, a, rng, *, lam=None, pairing=None):
    """Convex combination of the batch with a permuted copy of itself.

    One lambda ~ Beta(a, a) per batch. Soft labels are not formed; the loss
    works from the two hard label vectors ``y_i`` and ``y_j``.
    """
    if not a > 0:
        raise ConfigurationError(f"mixup Beta parameter must be > 0, got {a}")
    x, y = _check_pairable(x, y)
    if pairing is None:
        pairing = rng.permutation(len(x))
    if lam is None:
        lam = rng.beta(a, a)
    lam = float(lam)
    x_mix = lam * x + (1 - lam) * x[pairing]
    return MixupBatch(x_mix=x_mix, y_i=y, y_j=y[pairing], lam=lam, pairing=np.asarray(pairing))


def centered_box(r, c, size_h, size_w, h, w):
    """Half-open box of nominal size ``size_h x size_w`` around (r, c), clipped to the grid."""
    r1, c1 = r - size_h // 2, c - size_w // 2
    return (max(r1, 0), min(r1 + size_h, h), max(c1, 0), min(c1 + size_w, w))


def cutout(x, y, hole_size, rng, *, centers=None):
    """Zero one square hole per image; the box is clipped at the borders."""
    if hole_size < 1:
        raise ConfigurationError("hole_size must be >= 1")
    x = np.asarray(x)
    n, _, h, w = x.shape
    if centers is None:
        centers = np.stack([rng.integers(0, h, n), rng.integers(0, w, n)], axis=1)
    centers = np.asarray(centers).reshape(n, 2)
    out = x.copy()
    boxes = np.empty((n, 4), dtype=np.int64)
    for i, (r, c) in enumerate(centers):
        r1, r2, c1, c2 = centered_box(int(r), int(c), hole_size, hole_size, h, w)
        out[i, :, r1:r2, c1:c2] = 0
        boxes[i] = (r1, r2, c1, c2)
    return CutoutBatch(x_cut=out, y=np.asarray(y), boxes=boxes)


def cutmix(x, y, p, a, rng, *, apply=None, lam=None, center=None, pairing=None):
    """Paste one box from the paired image into each image with probability ``p``.

    The box sides are round(sqrt(1 - lam) * H) and round(sqrt(1 - lam) * W);
    after clipping, ``lam_adj = 1 - area / (H * W)``.
    """
    if not 0 <= p <= 1:
        raise ConfigurationError(f"cutmix probability must be in [0, 1], got {p}")
    if not a > 0:
        raise ConfigurationError(f"cutmix Beta parameter must be > 0, got {a}")
    x, y = _check_pairable(x, y)
    n, _, h, w = x.shape
    if apply is None:
        apply = rng.random() < p
    if not apply:
        return CutMixBatch(x_cm=x, y_i=y, y_j=y, lam_adj=1.0, box=(0, 0, 0, 0),
                           applied=False, pairing=np.arange(n))
    if lam is None:
        lam = rng.beta(a, a)
    if pairing is None:
        pairing = rng.permutation(n)
    if center is None:
        center = (rng.integers(0, h), rng.integers(0, w))
    ratio = np.sqrt(1.0 - lam)
    box = centered_box(int(center[0]), int(center[1]),
                       int(round(ratio * h)), int(round(ratio * w)), h, w)
    r1, r2, c1, c2 = box
    out = x.copy()
    out[:, :, r1:r2, c1:c2] = x[pairing][:, :, r1:r2, c1:c2]
    lam_adj = 1.0 - (r2 - r1) * (c2 - c1) / (h * w)
    return CutMixBatch(x_cm=out, y_i=y, y_j=y[pairing], lam_adj=lam_adj, box=box,
                       applied=True, pairing=np.asarray(pairing))
