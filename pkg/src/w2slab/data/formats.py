"""Readers and writers for the IDX (MNIST) and CIFAR binary formats.

IDX files are big-endian: two zero bytes, a type byte (0x08 = unsigned byte),
a rank byte, one u32 per dimension, then the raw data. Image files have rank 3
(magic 0x00000803) and label files rank 1 (magic 0x00000801).

CIFAR-10 binaries hold 3073-byte records (label, then 1024 R, 1024 G, 1024 B
bytes, each plane row-major 32x32); CIFAR-100 records are 3074 bytes with a
coarse and a fine label byte before the pixels.
"""

from __future__ import annotations

import gzip
import logging
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ParseError
from .dataset import Dataset, LoadReport

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_PIXELS = 3 * 32 * 32
CIFAR10_RECORD = 1 + CIFAR_PIXELS
CIFAR100_RECORD = 2 + CIFAR_PIXELS

CIFAR10_CLASSES = ["airplane", "automobile", "bird", "cat", "deer",
                   "dog", "frog", "horse", "ship", "truck"]

DATA_DIR_ENV = "W2S_DATA_DIR"


def data_root(override: str | os.PathLike | None = None) -> Path | None:
    """Dataset root: explicit override, else $W2S_DATA_DIR, else None."""
    if override:
        return Path(override)
    env = os.environ.get(DATA_DIR_ENV)
    return Path(env) if env else None


def _read_bytes(path: Path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def read_idx(path: str | os.PathLike, expected_magic: int | None = None) -> np.ndarray:
    """Parse an unsigned-byte IDX file into a uint8 array of the stored shape."""
    path = Path(path)
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise ParseError("truncated IDX header", offset=len(raw), path=str(path))
    (magic,) = struct.unpack(">I", raw[:4])
    if raw[0] != 0 or raw[1] != 0 or raw[2] != 0x08:
        raise ParseError(f"bad magic 0x{magic:08x}", offset=0, path=str(path))
    if expected_magic is not None and magic != expected_magic:
        raise ParseError(f"bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}",
                         offset=0, path=str(path))
    rank = raw[3]
    header_end = 4 + 4 * rank
    if len(raw) < header_end:
        raise ParseError("truncated IDX header", offset=len(raw), path=str(path))
    dims = struct.unpack(f">{rank}I", raw[4:header_end])
    count = int(np.prod(dims)) if dims else 0
    if len(raw) < header_end + count:
        raise ParseError(f"truncated IDX data: need {count} bytes after header, have "
                         f"{len(raw) - header_end}", offset=len(raw), path=str(path))
    if len(raw) > header_end + count:
        raise ParseError("trailing bytes after IDX data", offset=header_end + count, path=str(path))
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header_end).reshape(dims)


def write_idx(path: str | os.PathLike, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ConfigError(f"IDX writer handles uint8 data only, got {array.dtype}")
    header = bytes([0, 0, 0x08, array.ndim]) + struct.pack(f">{array.ndim}I", *array.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(array).tobytes())


def load_idx(images_path, labels_path, name: str = "idx") -> Dataset:
    raw_images = read_idx(images_path, IDX_IMAGES_MAGIC)
    raw_labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if raw_images.shape[0] != raw_labels.shape[0]:
        raise ParseError(f"dimension mismatch: {raw_images.shape[0]} images vs "
                         f"{raw_labels.shape[0]} labels", offset=4, path=str(labels_path))
    if raw_images.shape[0] == 0:
        raise ParseError("IDX file holds no items", offset=4, path=str(images_path))
    images = (raw_images.astype(np.float32) / 255.0)[:, None, :, :]
    labels = raw_labels.astype(np.int64)
    ds = Dataset(images=images, labels=labels, num_classes=max(int(labels.max()) + 1, 2), name=name)
    ds.report = LoadReport(source=str(images_path), n=len(ds), label_histogram=ds.label_histogram().tolist())
    return ds


def save_idx(ds: Dataset, images_path, labels_path) -> None:
    """Write a single-channel dataset with values on the 1/255 grid back to IDX."""
    if ds.images.ndim != 4 or ds.images.shape[1] != 1:
        raise ConfigError(f"IDX export needs [N, 1, H, W] images, got {ds.images.shape}")
    if ds.labels.max() > 255:
        raise ConfigError("IDX export supports labels < 256")
    pixels = np.rint(np.clip(ds.images[:, 0], 0.0, 1.0) * 255.0).astype(np.uint8)
    write_idx(images_path, pixels)
    write_idx(labels_path, ds.labels.astype(np.uint8))


def _read_cifar_records(path: Path, record: int) -> np.ndarray:
    raw = _read_bytes(path)
    if len(raw) == 0:
        raise ParseError("empty CIFAR file", offset=0, path=str(path))
    if len(raw) % record:
        full = len(raw) // record
        raise ParseError(f"truncated CIFAR record #{full} ({len(raw) % record} of {record} bytes)",
                         offset=full * record, path=str(path))
    return np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)


def load_cifar(paths, coarse: bool, name: str = "cifar") -> Dataset:
    """Load CIFAR-10 (``coarse=False``) or CIFAR-100 (``coarse=True``) binary files."""
    if isinstance(paths, (str, os.PathLike)):
        paths = [paths]
    record = CIFAR100_RECORD if coarse else CIFAR10_RECORD
    k = 100 if coarse else 10
    chunks = []
    for p in paths:
        rec = _read_cifar_records(Path(p), record)
        lab = rec[:, 1] if coarse else rec[:, 0]
        bad = np.flatnonzero(lab >= k)
        if bad.size:
            raise ParseError(f"label {lab[bad[0]]} outside [0, {k})",
                             offset=int(bad[0]) * record + (1 if coarse else 0), path=str(p))
        if coarse:
            badc = np.flatnonzero(rec[:, 0] >= 20)
            if badc.size:
                raise ParseError(f"coarse label {rec[badc[0], 0]} outside [0, 20)",
                                 offset=int(badc[0]) * record, path=str(p))
        chunks.append(rec)
    rec = np.concatenate(chunks, axis=0)
    head = 2 if coarse else 1
    images = rec[:, head:].reshape(-1, 3, 32, 32).astype(np.float32) / 255.0
    ds = Dataset(
        images=images,
        labels=rec[:, head - 1].astype(np.int64),
        num_classes=k,
        coarse_labels=rec[:, 0].astype(np.int64) if coarse else None,
        class_names=None if coarse else list(CIFAR10_CLASSES),
        name=name,
    )
    ds.report = LoadReport(
        source=",".join(str(p) for p in paths), n=len(ds),
        label_histogram=ds.label_histogram().tolist(),
        coarse_histogram=None if not coarse else np.bincount(ds.coarse_labels, minlength=20).tolist(),
    )
    return ds


def save_cifar(ds: Dataset, path) -> None:
    """Write a [N, 3, 32, 32] dataset in CIFAR-10 or (with coarse labels) CIFAR-100 layout."""
    if ds.images.shape[1:] != (3, 32, 32):
        raise ConfigError(f"CIFAR export needs [N, 3, 32, 32] images, got {ds.images.shape}")
    pixels = np.rint(np.clip(ds.images, 0.0, 1.0) * 255.0).astype(np.uint8).reshape(len(ds), -1)
    cols = [ds.labels.astype(np.uint8)[:, None]]
    if ds.coarse_labels is not None:
        cols.insert(0, ds.coarse_labels.astype(np.uint8)[:, None])
    with open(path, "wb") as fh:
        fh.write(np.concatenate(cols + [pixels], axis=1).tobytes())


_IDX_NAMES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _find(root: Path, names: list[str]) -> Path | None:
    for n in names:
        for cand in (root / n, root / (n + ".gz")):
            if cand.exists():
                return cand
    return None


def load_dataset(path, fmt: str, split: str = "train", labels_path=None) -> Dataset:
    """Load a dataset in one of the formats ``IDX``, ``CIFAR10`` or ``CIFAR100``.

    ``path`` may be a single file (for IDX: the image file, with ``labels_path``
    naming the label file) or a directory laid out like the public releases.
    """
    fmt = fmt.upper()
    path = Path(path)
    if fmt == "IDX":
        if path.is_dir():
            img_name, lab_name = _IDX_NAMES[split]
            images = _find(path, [img_name, img_name.replace("-idx3-", ".idx3-")])
            labels = _find(path, [lab_name, lab_name.replace("-idx1-", ".idx1-")])
            if images is None or labels is None:
                raise ConfigError(f"no IDX {split} files under {path}")
        else:
            images = path
            labels = Path(labels_path) if labels_path else None
            if labels is None:
                guess = Path(str(path).replace("images-idx3", "labels-idx1"))
                if guess == path or not guess.exists():
                    raise ConfigError(f"cannot locate label file for {path}; pass labels_path")
                labels = guess
        ds = load_idx(images, labels, name=f"idx-{split}")
    elif fmt in ("CIFAR10", "CIFAR100"):
        coarse = fmt == "CIFAR100"
        if path.is_dir():
            sub = path / ("cifar-100-binary" if coarse else "cifar-10-batches-bin")
            root = sub if sub.is_dir() else path
            if coarse:
                files = [root / ("train.bin" if split == "train" else "test.bin")]
            elif split == "train":
                files = sorted(root.glob("data_batch_*.bin"))
            else:
                files = [root / "test_batch.bin"]
            if not files or not all(f.exists() for f in files):
                raise ConfigError(f"no {fmt} {split} files under {path}")
        else:
            files = [path]
        ds = load_cifar(files, coarse=coarse, name=f"{fmt.lower()}-{split}")
    else:
        raise ConfigError(f"unknown dataset format {fmt!r}")
    logger.info("loaded %s: N=%d, label histogram %s", ds.name, len(ds), ds.report.label_histogram)
    return ds
