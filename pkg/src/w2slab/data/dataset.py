"""In-memory labelled image datasets and simple derived views."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigError, ContractError


@dataclass
class LoadReport:
    source: str
    n: int
    label_histogram: list[int]
    coarse_histogram: list[int] | None = None


@dataclass
class Dataset:
    """Images ``[N, *sample_shape]`` (float32) with integer labels in ``[0, num_classes)``.

    ``coarse_labels`` holds CIFAR-100 style super-class ids when available.
    ``origin`` maps each sample back to its index in the dataset it was cut from.
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"
    coarse_labels: np.ndarray | None = None
    origin: np.ndarray | None = None
    class_names: list[str] | None = None
    report: LoadReport | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.coarse_labels is not None:
            self.coarse_labels = np.asarray(self.coarse_labels, dtype=np.int64)
        if self.origin is None:
            self.origin = np.arange(len(self.labels), dtype=np.int64)

    def validate(self) -> None:
        n = len(self.labels)
        if n == 0:
            raise ContractError(f"dataset {self.name!r} is empty")
        if self.images.shape[0] != n:
            raise ContractError(f"{self.images.shape[0]} images but {n} labels")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ContractError(f"labels outside [0, {self.num_classes})")
        if self.coarse_labels is not None:
            if self.coarse_labels.shape != self.labels.shape:
                raise ContractError("coarse_labels length differs from labels")
            if self.coarse_labels.min() < 0 or self.coarse_labels.max() >= 20:
                raise ContractError("coarse_labels outside [0, 20)")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return tuple(self.images.shape[1:])

    def label_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, index, name: str | None = None) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return replace(
            self,
            images=self.images[index],
            labels=self.labels[index],
            coarse_labels=None if self.coarse_labels is None else self.coarse_labels[index],
            origin=self.origin[index],
            name=name or self.name,
            report=None,
        )

    def with_labels(self, labels: np.ndarray, name: str | None = None) -> "Dataset":
        return replace(self, labels=np.asarray(labels, dtype=np.int64).copy(),
                       name=name or self.name, report=None)


def synth_blobs(num_classes: int, per_class: int, shape=16, spread: float = 0.1, seed: int = 0,
                modes: int = 1, name: str = "blobs") -> Dataset:
    """Gaussian clusters around pairwise unit-distance means.

    Means are ``num_classes * modes`` orthonormal directions scaled by 1/sqrt(2),
    so any two means are exactly distance 1 apart; each sample adds isotropic
    noise of std ``spread``. With ``modes > 1`` a class is the union of several
    clusters, which makes the classes non-linearly separable. ``shape`` is a
    feature dimension or a full sample shape such as ``(1, 8, 8)``.
    """
    if num_classes < 2:
        raise ConfigError(f"synth_blobs needs at least 2 classes, got {num_classes}")
    if per_class < 1 or modes < 1:
        raise ConfigError("per_class and modes must be >= 1")
    sample_shape = (int(shape),) if np.isscalar(shape) else tuple(int(s) for s in shape)
    dim = int(np.prod(sample_shape))
    centers = num_classes * modes
    if dim < centers:
        raise ConfigError(f"need dim >= classes*modes ({centers}) for orthonormal means, got {dim}")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((dim, centers)))
    means = q.T / np.sqrt(2.0)  # [centers, dim]

    labels = np.repeat(np.arange(num_classes), per_class)
    mode = rng.integers(0, modes, size=labels.size)
    center = labels * modes + mode
    x = means[center] + spread * rng.standard_normal((labels.size, dim))
    perm = rng.permutation(labels.size)
    images = x[perm].reshape((labels.size,) + sample_shape).astype(np.float32)
    return Dataset(images=images, labels=labels[perm], num_classes=num_classes, name=name)


def split_holdout(ds: Dataset, per_class: int, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Hold out ``per_class`` samples of every class; returns (rest, held_out)."""
    rng = np.random.default_rng(seed)
    held = []
    for k in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == k)
        if len(idx) < per_class:
            raise ConfigError(f"class {k} has {len(idx)} samples, cannot hold out {per_class}")
        held.append(rng.permutation(idx)[:per_class])
    held_idx = np.sort(np.concatenate(held))
    mask = np.ones(len(ds), dtype=bool)
    mask[held_idx] = False
    return ds.subset(np.flatnonzero(mask)), ds.subset(held_idx)


def fraction_subset(ds: Dataset, fraction: float, seed: int = 0) -> Dataset:
    """A seeded ``floor(fraction * N)``-sample subset (at least one sample)."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    n = max(1, int(np.floor(fraction * len(ds))))
    idx = np.sort(np.random.default_rng(seed).permutation(len(ds))[:n])
    return ds.subset(idx)


def split_classes(ds: Dataset, *class_lists) -> tuple[Dataset, ...]:
    """Partition by class. Each returned split relabels its classes densely in list order."""
    seen: set[int] = set()
    for classes in class_lists:
        overlap = seen.intersection(int(c) for c in classes)
        if overlap:
            raise ConfigError(f"class lists overlap on {sorted(overlap)}")
        bad = [c for c in classes if not 0 <= int(c) < ds.num_classes]
        if bad:
            raise ConfigError(f"classes {bad} outside [0, {ds.num_classes})")
        seen.update(int(c) for c in classes)
    out = []
    for i, classes in enumerate(class_lists):
        classes = [int(c) for c in classes]
        remap = np.full(ds.num_classes, -1, dtype=np.int64)
        remap[classes] = np.arange(len(classes))
        idx = np.flatnonzero(np.isin(ds.labels, classes))
        part = ds.subset(idx, name=f"{ds.name}/split{i}")
        part.labels = remap[part.labels]
        part.num_classes = len(classes)
        if ds.class_names is not None:
            part.class_names = [ds.class_names[c] for c in classes]
        out.append(part)
    return tuple(out)


def random_class_partition(num_classes: int, sizes, seed: int = 0) -> list[list[int]]:
    """Seeded disjoint class lists of the given sizes (e.g. 64/16/20 out of 100)."""
    if sum(sizes) > num_classes:
        raise ConfigError(f"split sizes {list(sizes)} exceed {num_classes} classes")
    perm = np.random.default_rng(seed).permutation(num_classes)
    out, start = [], 0
    for s in sizes:
        out.append(sorted(int(c) for c in perm[start:start + s]))
        start += s
    return out
