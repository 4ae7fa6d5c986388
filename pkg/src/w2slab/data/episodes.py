"""N-way K-shot episode sampling for few-shot evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .dataset import Dataset


@dataclass(frozen=True)
class EpisodeSpec:
    n_way: int = 5
    k_shot: int = 1
    q_query: int = 15
    episode_count: int = 800
    seed: int = 0

    def validate(self, ds: Dataset | None = None) -> None:
        if min(self.n_way, self.k_shot, self.q_query, self.episode_count) < 1:
            raise ConfigError("n_way, k_shot, q_query and episode_count must all be >= 1")
        if ds is not None:
            available = np.unique(ds.labels).size
            if self.n_way > available:
                raise ConfigError(f"{self.n_way}-way episodes need {self.n_way} classes, "
                                  f"dataset has {available}")

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeSpec":
        return cls(**d)


@dataclass
class Episode:
    classes: np.ndarray        # dataset class ids, in episode-label order
    support_index: np.ndarray  # indices into the source dataset
    query_index: np.ndarray
    support_labels: np.ndarray  # episode-local labels 0..n_way-1
    query_labels: np.ndarray

    def support_images(self, ds: Dataset) -> np.ndarray:
        return ds.images[self.support_index]

    def query_images(self, ds: Dataset) -> np.ndarray:
        return ds.images[self.query_index]


def sample_episode(ds: Dataset, spec: EpisodeSpec, episode_index: int) -> Episode:
    """Draw one episode; the result depends only on ``(spec.seed, episode_index)`` and ``ds``."""
    spec.validate(ds)
    rng = np.random.default_rng([spec.seed, episode_index])
    present = np.unique(ds.labels)
    classes = rng.choice(present, size=spec.n_way, replace=False)
    need = spec.k_shot + spec.q_query
    support, query = [], []
    for c in classes:
        members = np.flatnonzero(ds.labels == c)
        if members.size < need:
            raise ConfigError(f"class {int(c)} has {members.size} samples; "
                              f"{spec.k_shot}-shot with {spec.q_query} queries needs {need}")
        picked = rng.choice(members, size=need, replace=False)
        support.append(picked[:spec.k_shot])
        query.append(picked[spec.k_shot:])
    local = np.arange(spec.n_way)
    return Episode(
        classes=classes.astype(np.int64),
        support_index=np.concatenate(support),
        query_index=np.concatenate(query),
        support_labels=np.repeat(local, spec.k_shot),
        query_labels=np.repeat(local, spec.q_query),
    )
