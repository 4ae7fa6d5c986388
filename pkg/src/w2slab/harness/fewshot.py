"""Nearest-centroid (cosine) evaluation over sampled few-shot episodes."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..data import Dataset, EpisodeSpec, sample_episode

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12
Z95 = 1.96


@dataclass
class FewShotResult:
    mean: float
    ci95: float
    accuracies: np.ndarray
    n_way: int
    k_shot: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "ci95": self.ci95, "episodes": int(self.accuracies.size),
                "n_way": self.n_way, "k_shot": self.k_shot}


def mean_ci(accuracies) -> tuple[float, float]:
    """Mean and 95% half-width ``1.96 * std / sqrt(n)`` (sample std, ddof=1)."""
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.size < 2:
        return float(acc.mean()), 0.0
    return float(acc.mean()), float(Z95 * acc.std(ddof=1) / np.sqrt(acc.size))


def _normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms < NORM_EPS):
        logger.warning("%d zero-norm embeddings clamped", int(np.sum(norms < NORM_EPS)))
    return x / np.maximum(norms, NORM_EPS)


def centroid_predict(support: np.ndarray, support_labels: np.ndarray, query: np.ndarray,
                     n_way: int | None = None) -> np.ndarray:
    """Assign each query to the class whose mean support embedding is most cosine-similar."""
    support = np.asarray(support, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    n_way = n_way or int(support_labels.max()) + 1
    centroids = np.stack([support[support_labels == c].mean(axis=0) for c in range(n_way)])
    sims = _normalize(query) @ _normalize(centroids).T
    return np.argmax(sims, axis=1)


def nearest_centroid_eval(embed: Callable[[np.ndarray], np.ndarray], ds: Dataset,
                          spec: EpisodeSpec) -> FewShotResult:
    """Average episode accuracy of the centroid classifier on ``embed`` features, with a 95% CI."""
    spec.validate(ds)
    feats = embed(ds.images)  # embed every image once; episodes index into it
    accs = np.empty(spec.episode_count)
    for i in range(spec.episode_count):
        ep = sample_episode(ds, spec, i)
        pred = centroid_predict(feats[ep.support_index], ep.support_labels,
                                feats[ep.query_index], spec.n_way)
        accs[i] = np.mean(pred == ep.query_labels)
    m, ci = mean_ci(accs)
    return FewShotResult(mean=m, ci95=ci, accuracies=accs, n_way=spec.n_way, k_shot=spec.k_shot)
