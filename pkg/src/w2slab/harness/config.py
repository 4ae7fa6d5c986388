"""Experiment configuration (JSON) and dataset resolution."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data import (Dataset, EpisodeSpec, NoiseSpec, data_root, load_dataset, split_holdout,
                    synth_blobs)
from ..errors import ConfigError
from ..losses import LossConfig
from ..models import ModelConfig
from ..training import OptimConfig

KINDS = ("scratch", "w2s_gt", "w2s_nogt", "noisy", "fewshot")


@dataclass
class ExperimentConfig:
    kind: str
    dataset: dict
    strong: ModelConfig
    weak: ModelConfig | None = None
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    weak_optim: OptimConfig | None = None
    weak_fraction: float = 1.0
    noise: NoiseSpec | None = None
    episodes: EpisodeSpec | None = None
    shots: tuple[int, ...] = (1, 5)
    class_split: tuple[int, int, int] | None = None
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])
    out_dir: str = "runs"
    run_id: str | None = None

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"experiment kind must be one of {KINDS}, got {self.kind!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        self.strong.validate()
        self.loss.validate()
        self.optim.validate()
        if self.weak_optim is not None:
            self.weak_optim.validate()
        if self.kind != "scratch":
            if self.weak is None:
                raise ConfigError(f"{self.kind} experiments need a weak model config")
            self.weak.validate()
            if self.loss.method == "CE":
                raise ConfigError(f"{self.kind} experiments need a distillation method, not CE")
        if self.kind == "noisy":
            if self.noise is None:
                raise ConfigError("noisy experiments need a noise spec")
            self.noise.validate()
        if self.kind == "fewshot":
            if self.episodes is None:
                raise ConfigError("fewshot experiments need an episode spec")
            if self.class_split is None or len(self.class_split) != 3:
                raise ConfigError("fewshot experiments need class_split = [base, val, novel] sizes")
            self.episodes.validate()
        if not 0 < self.weak_fraction <= 1:
            raise ConfigError(f"weak_fraction must lie in (0, 1], got {self.weak_fraction}")
        if "source" not in self.dataset:
            raise ConfigError("dataset spec needs a 'source'")

    @property
    def name(self) -> str:
        return self.run_id or f"{self.kind}-{self.loss.method if self.kind != 'scratch' else 'CE'}"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            cfg = cls(
                kind=d["kind"],
                dataset=dict(d["dataset"]),
                strong=ModelConfig.from_dict(d["strong"]),
                weak=ModelConfig.from_dict(d["weak"]) if d.get("weak") else None,
                loss=LossConfig(**d.get("loss", {})),
                optim=OptimConfig(**d.get("optim", {})),
                weak_optim=OptimConfig(**d["weak_optim"]) if d.get("weak_optim") else None,
                weak_fraction=float(d.get("weak_fraction", 1.0)),
                noise=NoiseSpec.from_dict(d["noise"]) if d.get("noise") else None,
                episodes=EpisodeSpec.from_dict(d["episodes"]) if d.get("episodes") else None,
                shots=tuple(d.get("shots", (1, 5))),
                class_split=tuple(d["class_split"]) if d.get("class_split") else None,
                seeds=[int(s) for s in d.get("seeds", [0, 1, 2])],
                out_dir=d.get("out_dir", "runs"),
                run_id=d.get("run_id"),
            )
        except KeyError as exc:
            raise ConfigError(f"experiment config is missing {exc}") from exc
        except TypeError as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        def plain(obj):
            return None if obj is None else {k: v for k, v in vars(obj).items()}

        return {
            "kind": self.kind,
            "run_id": self.run_id,
            "dataset": self.dataset,
            "strong": self.strong.to_dict(),
            "weak": None if self.weak is None else self.weak.to_dict(),
            "loss": plain(self.loss),
            "optim": plain(self.optim),
            "weak_optim": plain(self.weak_optim),
            "weak_fraction": self.weak_fraction,
            "noise": plain(self.noise),
            "episodes": plain(self.episodes),
            "shots": list(self.shots),
            "class_split": None if self.class_split is None else list(self.class_split),
            "seeds": list(self.seeds),
            "out_dir": self.out_dir,
        }


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


def load_data(spec: dict, data_dir=None) -> tuple[Dataset, Dataset]:
    """Resolve a dataset spec into (train, test) datasets.

    ``{"source": "synth", ...}`` generates Gaussian blobs and holds out
    ``test_per_class`` samples per class; ``idx``/``cifar10``/``cifar100``
    read the public binaries from ``path`` (relative paths resolve against the
    data root).
    """
    source = spec["source"].lower()
    if source == "synth":
        per_class = int(spec.get("per_class", 1000))
        test_per_class = int(spec.get("test_per_class", 500))
        shape = spec.get("shape", 64)
        ds = synth_blobs(int(spec.get("num_classes", 10)), per_class + test_per_class,
                         shape if np.isscalar(shape) else tuple(shape),
                         float(spec.get("spread", 0.1)), int(spec.get("seed", 0)),
                         modes=int(spec.get("modes", 1)))
        return split_holdout(ds, test_per_class, seed=int(spec.get("seed", 0)))
    if source not in ("idx", "cifar10", "cifar100"):
        raise ConfigError(f"unknown dataset source {spec['source']!r}")
    root = data_root(data_dir)
    path = Path(spec.get("path", {"idx": "mnist", "cifar10": "cifar10", "cifar100": "cifar100"}[source]))
    if not path.is_absolute():
        if root is None:
            raise ConfigError(f"relative dataset path {path} needs --data-dir or W2S_DATA_DIR")
        path = root / path
    train = load_dataset(path, source.upper(), split="train")
    test = load_dataset(path, source.upper(), split="test")
    limit = spec.get("limit")
    if limit:
        train = train.subset(np.arange(min(int(limit), len(train))))
    return train, test
