"""Simulated label noise: symmetric relabelling and structured (asymmetric) class flips."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .dataset import Dataset

# truck -> automobile, bird -> airplane, cat <-> dog
CIFAR10_FLIP_MAP = {9: 1, 2: 0, 3: 5, 5: 3}


@dataclass
class NoiseSpec:
    kind: str = "symmetric"
    ratio: float = 0.2
    flip_map: dict[int, int] | None = None
    seed: int = 0
    include_original: bool = False  # symmetric only: allow redrawing the true label

    def validate(self) -> None:
        if self.kind not in ("symmetric", "asymmetric"):
            raise ConfigError(f"noise kind must be 'symmetric' or 'asymmetric', got {self.kind!r}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ConfigError(f"noise ratio must lie in [0, 1], got {self.ratio}")

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        d = dict(d)
        if d.get("flip_map") is not None:
            d["flip_map"] = {int(k): int(v) for k, v in d["flip_map"].items()}
        spec = cls(**d)
        spec.validate()
        return spec


@dataclass
class FlipReport:
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    old: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    new: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    selected: int = 0

    @property
    def count(self) -> int:
        return int(self.indices.size)

    def to_dict(self) -> dict:
        return {"selected": self.selected, "flipped": self.count,
                "indices": self.indices.tolist(), "old": self.old.tolist(), "new": self.new.tolist()}


def circular_superclass_map(fine: np.ndarray, coarse: np.ndarray) -> dict[int, int]:
    """Map each fine class to the next fine class (by id) of its super-class, wrapping around."""
    mapping: dict[int, int] = {}
    for c in np.unique(coarse):
        members = np.unique(fine[coarse == c])
        for i, f in enumerate(members):
            mapping[int(f)] = int(members[(i + 1) % len(members)])
    return mapping


def inject_noise(ds: Dataset, spec: NoiseSpec) -> tuple[Dataset, FlipReport]:
    """Corrupt ``floor(ratio * N)`` labels chosen by a seeded permutation.

    Symmetric noise redraws each chosen label uniformly from the other K-1
    classes. Asymmetric noise sends each chosen label through ``flip_map``
    (classes absent from the map stay put) or, without a map, through the
    circular within-super-class shift built from ``ds.coarse_labels``.
    """
    spec.validate()
    if spec.kind == "asymmetric":
        if spec.flip_map is not None:
            mapping = spec.flip_map
        elif ds.coarse_labels is not None:
            mapping = circular_superclass_map(ds.labels, ds.coarse_labels)
        else:
            raise ConfigError("asymmetric noise needs a flip_map or coarse (super-class) labels")
    rng = np.random.default_rng(spec.seed)
    n = len(ds)
    n_noisy = int(np.floor(spec.ratio * n))
    chosen = np.sort(rng.permutation(n)[:n_noisy])
    old = ds.labels[chosen]
    if spec.kind == "symmetric":
        k = ds.num_classes
        if spec.include_original:
            new = rng.integers(0, k, size=n_noisy)
        else:
            draw = rng.integers(0, k - 1, size=n_noisy)
            new = draw + (draw >= old)
    else:
        lut = np.arange(ds.num_classes)
        for src, dst in mapping.items():
            if not (0 <= src < ds.num_classes and 0 <= dst < ds.num_classes):
                raise ConfigError(f"flip_map entry {src}->{dst} outside [0, {ds.num_classes})")
            lut[src] = dst
        new = lut[old]
    labels = ds.labels.copy()
    labels[chosen] = new
    changed = new != old
    report = FlipReport(indices=chosen[changed], old=old[changed], new=new[changed], selected=n_noisy)
    noisy = ds.with_labels(labels, name=f"{ds.name}+{spec.kind}{spec.ratio:g}")
    return noisy, report
