"""Weak/strong model zoo: plain MLPs and conv+relu stacks built from declarative configs."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description.

    For ``family="mlp"``, ``hidden`` lists hidden-layer widths (may be empty for a
    linear model). For ``family="conv"``, ``hidden`` lists conv channel widths and
    ``strides`` the per-layer stride (1 or 2); stride-1 layers use 3x3 kernels with
    padding 1, stride-2 layers use 4x4 kernels with padding 1 so that even spatial
    sizes halve exactly.
    """

    family: str
    input_shape: tuple[int, ...]
    num_classes: int
    hidden: tuple[int, ...] = ()
    strides: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.strides is not None:
            object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))

    def validate(self) -> None:
        if self.family not in ("mlp", "conv"):
            raise ConfigError(f"unknown model family {self.family!r} (expected 'mlp' or 'conv')")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.input_shape or any(d <= 0 for d in self.input_shape):
            raise ConfigError(f"input_shape must be non-empty and positive, got {self.input_shape}")
        if any(h <= 0 for h in self.hidden):
            raise ConfigError(f"all widths must be positive, got {self.hidden}")
        if self.family == "conv":
            if len(self.input_shape) != 3:
                raise ConfigError(f"conv models need a (C, H, W) input_shape, got {self.input_shape}")
            if not self.hidden:
                raise ConfigError("conv models need at least one channel width")
            strides = self.conv_strides()
            if len(strides) != len(self.hidden) or any(s not in (1, 2) for s in strides):
                raise ConfigError(f"strides must be 1 or 2, one per conv layer, got {self.strides}")
            _, h, w = self.input_shape
            for s in strides:
                if s == 2 and (h % 2 or w % 2):
                    raise ConfigError(f"stride-2 layer needs even spatial size, got {h}x{w}")
                h, w = h // s, w // s

    def conv_strides(self) -> tuple[int, ...]:
        return self.strides if self.strides is not None else (1,) * len(self.hidden)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["hidden"] = list(self.hidden)
        d["strides"] = None if self.strides is None else list(self.strides)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(family=d["family"], input_shape=tuple(d["input_shape"]),
                   num_classes=int(d["num_classes"]), hidden=tuple(d.get("hidden", ())),
                   strides=None if d.get("strides") is None else tuple(d["strides"]))


def _conv_geometry(stride: int) -> tuple[int, int]:
    """(kernel, pad) for a conv layer of the given stride."""
    return (3, 1) if stride == 1 else (4, 1)


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, Tensor] = field(default_factory=dict)

    def parameters(self) -> Iterator[Tensor]:
        return iter(self.params.values())

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.params.items())

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def requires_grad_(self, flag: bool) -> "Model":
        for p in self.params.values():
            p.requires_grad = flag
        return self

    def copy(self) -> "Model":
        params = {}
        for name, p in self.params.items():
            params[name] = Tensor(p.data.copy(), requires_grad=p.requires_grad, name=name)
        return Model(copy.copy(self.config), params)

    def astype(self, dtype) -> "Model":
        params = {n: Tensor(p.data.astype(dtype), requires_grad=p.requires_grad, name=n)
                  for n, p in self.params.items()}
        return Model(self.config, params)

    def features(self, batch: Tensor) -> Tensor:
        """Penultimate activations (the input to the classification head)."""
        cfg = self.config
        if not isinstance(batch, Tensor):
            batch = Tensor(np.asarray(batch, dtype=self.dtype))
        if tuple(batch.shape[1:]) != cfg.input_shape:
            raise ShapeError(f"expected input [N, {', '.join(map(str, cfg.input_shape))}], "
                             f"got {list(batch.shape)}")
        n = batch.shape[0]
        if cfg.family == "mlp":
            h = batch if batch.ndim == 2 else T.reshape(batch, (n, -1))
            for i in range(len(cfg.hidden)):
                h = T.relu(T.matmul(h, self.params[f"fc{i}.weight"]) + self.params[f"fc{i}.bias"])
            return h
        h = batch
        for i, s in enumerate(cfg.conv_strides()):
            _, pad = _conv_geometry(s)
            h = T.relu(T.conv2d(h, self.params[f"conv{i}.weight"], stride=s, pad=pad,
                                bias=self.params[f"conv{i}.bias"]))
        return T.reshape(h, (n, -1))

    def forward(self, batch: Tensor) -> Tensor:
        h = self.features(batch)
        return T.matmul(h, self.params["head.weight"]) + self.params["head.bias"]

    __call__ = forward


def feature_dim(config: ModelConfig) -> int:
    if config.family == "mlp":
        return config.hidden[-1] if config.hidden else int(np.prod(config.input_shape))
    _, h, w = config.input_shape
    for s in config.conv_strides():
        h, w = h // s, w // s
    return config.hidden[-1] * h * w


def build(config: ModelConfig, seed: int, dtype=np.float32) -> Model:
    """Initialize a model: He-normal weights ahead of every relu, zero biases.

    The classification head uses std sqrt(1/fan_in) since no relu follows it.
    Weights are drawn in float64 and cast, so ``(config, seed)`` fixes the
    parameters bit for bit regardless of ``dtype``.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}

    def add(name, arr):
        params[name] = Tensor(arr.astype(dtype), requires_grad=True, name=name)

    if config.family == "mlp":
        fan_in = int(np.prod(config.input_shape))
        for i, width in enumerate(config.hidden):
            add(f"fc{i}.weight", rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, width)))
            add(f"fc{i}.bias", np.zeros(width))
            fan_in = width
    else:
        in_ch = config.input_shape[0]
        for i, (width, s) in enumerate(zip(config.hidden, config.conv_strides())):
            k, _ = _conv_geometry(s)
            fan_in = in_ch * k * k
            add(f"conv{i}.weight", rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(width, in_ch, k, k)))
            add(f"conv{i}.bias", np.zeros(width))
            in_ch = width
        fan_in = feature_dim(config)
    add("head.weight", rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, config.num_classes)))
    add("head.bias", np.zeros(config.num_classes))
    return Model(config, params)


def num_params(model: Model) -> int:
    return sum(p.size for p in model.params.values())


def forward(model: Model, batch: Tensor) -> Tensor:
    return model.forward(batch)


def predict_logits(model: Model, images: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Logits for a whole array of inputs, without recording gradients."""
    frozen = {n: p.requires_grad for n, p in model.params.items()}
    model.requires_grad_(False)
    try:
        out = [model.forward(Tensor(images[i:i + batch_size].astype(model.dtype, copy=False))).data
               for i in range(0, len(images), batch_size)]
    finally:
        for n, p in model.params.items():
            p.requires_grad = frozen[n]
    return np.concatenate(out, axis=0)


def predict_features(model: Model, images: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    frozen = {n: p.requires_grad for n, p in model.params.items()}
    model.requires_grad_(False)
    try:
        out = [model.features(Tensor(images[i:i + batch_size].astype(model.dtype, copy=False))).data
               for i in range(0, len(images), batch_size)]
    finally:
        for n, p in model.params.items():
            p.requires_grad = frozen[n]
    return np.concatenate(out, axis=0)
