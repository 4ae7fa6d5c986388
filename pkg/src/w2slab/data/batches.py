"""Seeded mini-batch iteration with optional flip / pad-and-crop augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .dataset import Dataset

CROP_PAD = 4


@dataclass
class Batch:
    images: np.ndarray
    labels: np.ndarray
    index: np.ndarray  # positions in the source dataset


def augment(images: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Horizontal flip (p=0.5) then a random crop from a 4-pixel zero-padded copy.

    Only applies to [N, C, H, W] batches; one flip draw and one offset pair
    are consumed per sample, in order.
    """
    if images.ndim != 4:
        return images
    n, _, h, w = images.shape
    flips = rng.random(n) < 0.5
    offsets = rng.integers(0, 2 * CROP_PAD + 1, size=(n, 2))
    out = np.where(flips[:, None, None, None], images[..., ::-1], images)
    padded = np.pad(out, ((0, 0), (0, 0), (CROP_PAD, CROP_PAD), (CROP_PAD, CROP_PAD)))
    result = np.empty_like(images)
    for i in range(n):
        dy, dx = offsets[i]
        result[i] = padded[i, :, dy:dy + h, dx:dx + w]
    return result


def make_batches(ds: Dataset, batch_size: int, seed: int, epoch: int,
                 augmentation: bool = False, labels: np.ndarray | None = None) -> list[Batch]:
    """Shuffle with a generator keyed on ``(seed, epoch)`` and cut into batches.

    The last partial batch is kept. ``labels`` substitutes the dataset labels
    (e.g. teacher pseudo-labels) without copying images.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(len(ds))
    source_labels = ds.labels if labels is None else labels
    aug_rng = np.random.default_rng([seed, epoch, 1]) if augmentation else None
    out = []
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        images = ds.images[idx]
        if aug_rng is not None:
            images = augment(images, aug_rng)
        out.append(Batch(images=images, labels=source_labels[idx], index=idx))
    return out
