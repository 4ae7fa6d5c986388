from .batches import Batch, augment, make_batches
from .dataset import (Dataset, LoadReport, fraction_subset, random_class_partition,
                      split_classes, split_holdout, synth_blobs)
from .episodes import Episode, EpisodeSpec, sample_episode
from .formats import (data_root, load_cifar, load_dataset, load_idx, read_idx, save_cifar,
                      save_idx, write_idx)
from .noise import CIFAR10_FLIP_MAP, FlipReport, NoiseSpec, circular_superclass_map, inject_noise

__all__ = [
    "Batch", "augment", "make_batches",
    "Dataset", "LoadReport", "fraction_subset", "random_class_partition", "split_classes",
    "split_holdout", "synth_blobs",
    "Episode", "EpisodeSpec", "sample_episode",
    "data_root", "load_cifar", "load_dataset", "load_idx", "read_idx", "save_cifar", "save_idx",
    "write_idx",
    "CIFAR10_FLIP_MAP", "FlipReport", "NoiseSpec", "circular_superclass_map", "inject_noise",
]
