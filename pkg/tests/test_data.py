import gzip
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from w2slab.data import (CIFAR10_FLIP_MAP, Dataset, EpisodeSpec, NoiseSpec, circular_superclass_map,
                         fraction_subset, inject_noise, load_cifar, load_dataset, load_idx,
                         make_batches, random_class_partition, read_idx, sample_episode, save_cifar,
                         save_idx, split_classes, split_holdout, synth_blobs)
from w2slab.errors import ConfigError, ContractError, ParseError

FIX = Path(__file__).parent / "fixtures"


def labelled(labels, k, coarse=None):
    labels = np.asarray(labels, dtype=np.int64)
    return Dataset(images=np.zeros((labels.size, 2), dtype=np.float32), labels=labels, num_classes=k,
                   coarse_labels=None if coarse is None else np.asarray(coarse, dtype=np.int64))


class TestIDX:
    def test_golden_fixture(self):
        ds = load_idx(FIX / "tiny-images-idx3-ubyte", FIX / "tiny-labels-idx1-ubyte")
        assert len(ds) == 10 and ds.num_classes == 10
        assert ds.images.shape == (10, 1, 28, 28)
        np.testing.assert_array_equal(ds.labels, np.arange(10))
        i, r, c = 3, 5, 17
        assert ds.images[i, 0, r, c] == np.float32(((i * 7 + r * 3 + c) % 256) / 255.0)
        assert 0.0 <= ds.images.min() and ds.images.max() <= 1.0
        assert ds.report.label_histogram == [1] * 10

    def test_header_bytes(self):
        raw = (FIX / "tiny-images-idx3-ubyte").read_bytes()
        assert raw[:4] == b"\x00\x00\x08\x03"
        assert struct.unpack(">3I", raw[4:16]) == (10, 28, 28)

    def test_truncated(self):
        with pytest.raises(ParseError, match="truncated") as info:
            load_idx(FIX / "truncated-images-idx3-ubyte", FIX / "tiny-labels-idx1-ubyte")
        assert "byte offset" in str(info.value)

    def test_bad_magic(self):
        with pytest.raises(ParseError, match="bad magic") as info:
            read_idx(FIX / "badmagic-images-idx3-ubyte", 0x00000803)
        assert info.value.offset == 0

    def test_dimension_mismatch(self, tmp_path):
        labels = tmp_path / "labels"
        labels.write_bytes(struct.pack(">II", 0x801, 3) + bytes([0, 1, 2]))
        with pytest.raises(ParseError, match="dimension mismatch"):
            load_idx(FIX / "tiny-images-idx3-ubyte", labels)

    def test_trailing_bytes(self, tmp_path):
        p = tmp_path / "x"
        p.write_bytes((FIX / "tiny-labels-idx1-ubyte").read_bytes() + b"\x00")
        with pytest.raises(ParseError, match="trailing"):
            read_idx(p)

    def test_roundtrip(self, tmp_path):
        ds = load_idx(FIX / "tiny-images-idx3-ubyte", FIX / "tiny-labels-idx1-ubyte")
        save_idx(ds, tmp_path / "i", tmp_path / "l")
        assert (tmp_path / "i").read_bytes() == (FIX / "tiny-images-idx3-ubyte").read_bytes()
        back = load_idx(tmp_path / "i", tmp_path / "l")
        assert back.images.tobytes() == ds.images.tobytes()
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_gzip_and_directory_layout(self, tmp_path):
        for src, dst in [("tiny-images-idx3-ubyte", "t10k-images-idx3-ubyte.gz"),
                         ("tiny-labels-idx1-ubyte", "t10k-labels-idx1-ubyte.gz")]:
            (tmp_path / dst).write_bytes(gzip.compress((FIX / src).read_bytes()))
        ds = load_dataset(tmp_path, "IDX", split="test")
        assert len(ds) == 10
        with pytest.raises(ConfigError):
            load_dataset(tmp_path, "IDX", split="train")

    def test_label_file_guess(self):
        assert len(load_dataset(FIX / "tiny-images-idx3-ubyte", "idx")) == 10

    def test_unknown_format(self):
        with pytest.raises(ConfigError):
            load_dataset(FIX, "png")


class TestCIFAR:
    def test_cifar10_fixture(self):
        ds = load_cifar(FIX / "tiny_cifar10.bin", coarse=False)
        assert ds.images.shape == (2, 3, 32, 32)
        np.testing.assert_array_equal(ds.labels, [3, 9])
        assert ds.coarse_labels is None
        raw = (FIX / "tiny_cifar10.bin").read_bytes()
        assert ds.images[0, 0, 0, 0] == np.float32(raw[1] / 255.0)
        # second record, green plane, row 2 column 5
        i, ch, p = 1, 1, 2 * 32 + 5
        assert ds.images[i, ch, 2, 5] == np.float32(((i + ch * 50 + p) % 256) / 255.0)
        assert ds.class_names[9] == "truck"

    def test_cifar100_fixture(self):
        ds = load_cifar(FIX / "tiny_cifar100.bin", coarse=True)
        np.testing.assert_array_equal(ds.labels, [30, 99])
        np.testing.assert_array_equal(ds.coarse_labels, [4, 19])
        assert ds.num_classes == 100
        assert ds.images[1, 2, 0, 3] == np.float32(((2 * 1 + 2 * 31 + 3) % 256) / 255.0)

    def test_truncated(self):
        with pytest.raises(ParseError, match="truncated") as info:
            load_cifar(FIX / "truncated_cifar10.bin", coarse=False)
        assert info.value.offset == 3073

    def test_bad_label(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(bytes([10]) + bytes(3072))
        with pytest.raises(ParseError, match="outside"):
            load_cifar(p, coarse=False)

    @pytest.mark.parametrize("name,coarse", [("tiny_cifar10.bin", False), ("tiny_cifar100.bin", True)])
    def test_roundtrip(self, tmp_path, name, coarse):
        ds = load_cifar(FIX / name, coarse=coarse)
        save_cifar(ds, tmp_path / "out.bin")
        assert (tmp_path / "out.bin").read_bytes() == (FIX / name).read_bytes()


class TestSynth:
    def test_size_and_determinism(self):
        a = synth_blobs(5, 100, seed=4)
        b = synth_blobs(5, 100, seed=4)
        assert len(a) == 500
        assert a.images.tobytes() == b.images.tobytes()
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_linearly_separable(self):
        ds = synth_blobs(2, 200, shape=8, spread=0.01, seed=1)
        x = ds.images.reshape(len(ds), -1).astype(np.float64)
        mu = np.stack([x[ds.labels == k].mean(0) for k in range(2)])
        w, b = mu[1] - mu[0], -(mu[1] @ mu[1] - mu[0] @ mu[0]) / 2
        pred = (x @ w + b > 0).astype(int)
        assert np.all(pred == ds.labels)

    def test_image_shape(self):
        assert synth_blobs(3, 4, shape=(1, 4, 4)).images.shape == (12, 1, 4, 4)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            synth_blobs(1, 10)
        with pytest.raises(ConfigError):
            synth_blobs(10, 10, shape=4)


class TestDatasetContract:
    def test_rejects_bad_labels(self):
        for ds in (labelled([0, 3], 3), labelled([], 3), labelled([0, 1], 3, coarse=[0, 20])):
            with pytest.raises(ContractError):
                ds.validate()
        labelled([0, 2], 3, coarse=[0, 19]).validate()


class TestNoise:
    def test_zero_ratio(self):
        ds = synth_blobs(4, 25)
        noisy, report = inject_noise(ds, NoiseSpec("symmetric", 0.0))
        np.testing.assert_array_equal(noisy.labels, ds.labels)
        assert report.count == 0

    def test_symmetric_exact_count(self):
        ds = synth_blobs(10, 100, shape=16)
        noisy, report = inject_noise(ds, NoiseSpec("symmetric", 0.4, seed=3))
        changed = np.flatnonzero(noisy.labels != ds.labels)
        assert changed.size == 400 == report.count
        np.testing.assert_array_equal(changed, report.indices)
        np.testing.assert_array_equal(report.old, ds.labels[changed])
        assert np.all(report.new != report.old)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 300), st.integers(2, 12), st.floats(0, 1), st.integers(0, 1000))
    def test_symmetric_count_property(self, n, k, ratio, seed):
        ds = labelled(np.random.default_rng(seed).integers(0, k, size=n), k)
        noisy, report = inject_noise(ds, NoiseSpec("symmetric", ratio, seed=seed))
        assert int(np.sum(noisy.labels != ds.labels)) == int(np.floor(ratio * n)) == report.selected
        assert noisy.labels.min() >= 0 and noisy.labels.max() < k

    def test_truck_to_automobile(self):
        ds = labelled([9] * 30, 10)
        noisy, _ = inject_noise(ds, NoiseSpec("asymmetric", 1.0, flip_map=CIFAR10_FLIP_MAP))
        assert np.all(noisy.labels == 1)

    def test_flip_map_leaves_unmapped_classes(self):
        ds = labelled(np.arange(10).repeat(10), 10)
        noisy, report = inject_noise(ds, NoiseSpec("asymmetric", 1.0, flip_map=CIFAR10_FLIP_MAP))
        for src in range(10):
            assert np.all(noisy.labels[ds.labels == src] == CIFAR10_FLIP_MAP.get(src, src))
        assert report.selected == 100 and report.count == 40

    def test_circular_superclass(self):
        fine = np.arange(20).repeat(5)
        coarse = fine // 5  # four super-classes of five fine classes each
        ds = labelled(fine, 20, coarse=coarse)
        mapping = circular_superclass_map(fine, coarse)
        assert mapping[4] == 0 and mapping[0] == 1 and mapping[19] == 15
        for ratio in (0.2, 0.4):
            noisy, report = inject_noise(ds, NoiseSpec("asymmetric", ratio, seed=1))
            assert report.selected == int(np.floor(ratio * 100))
            assert np.all(noisy.labels // 5 == coarse)

    def test_asymmetric_without_map(self):
        with pytest.raises(ConfigError):
            inject_noise(labelled([0, 1], 2), NoiseSpec("asymmetric", 0.5))

    def test_invalid_spec(self):
        with pytest.raises(ConfigError):
            NoiseSpec.from_dict({"kind": "pairflip"})
        with pytest.raises(ConfigError):
            NoiseSpec.from_dict({"ratio": 1.5})

    def test_json_keys_become_ints(self):
        spec = NoiseSpec.from_dict({"kind": "asymmetric", "ratio": 0.2, "flip_map": {"9": 1}})
        assert spec.flip_map == {9: 1}


class TestSplits:
    def test_partition_64_16_20(self):
        ds = labelled(np.arange(100).repeat(3), 100)
        lists = random_class_partition(100, [64, 16, 20], seed=0)
        parts = split_classes(ds, *lists)
        assert [p.num_classes for p in parts] == [64, 16, 20]
        assert sum(len(p) for p in parts) == len(ds)
        for p in parts:
            assert set(np.unique(p.labels)) == set(range(p.num_classes))

    def test_disjoint_images(self):
        ds = synth_blobs(6, 10)
        ds.images = np.arange(len(ds), dtype=np.float32)[:, None].repeat(16, 1)
        a, b = split_classes(ds, [0, 2], [5, 1, 3])
        assert not set(a.images[:, 0]).intersection(b.images[:, 0])
        assert b.num_classes == 3 and len(b) == 30

    def test_singleton(self):
        (one,) = split_classes(synth_blobs(3, 4), [2])
        assert one.num_classes == 1 and np.all(one.labels == 0)

    def test_overlap_rejected(self):
        with pytest.raises(ConfigError):
            split_classes(synth_blobs(3, 4), [0, 1], [1, 2])

    def test_holdout_and_fraction(self):
        ds = synth_blobs(4, 30)
        rest, held = split_holdout(ds, 5, seed=2)
        assert len(held) == 20 and len(rest) == 100
        assert np.all(held.label_histogram() == 5)
        assert len(fraction_subset(ds, 0.1, seed=0)) == 12
        with pytest.raises(ConfigError):
            fraction_subset(ds, 0.0)


class TestEpisodes:
    @pytest.mark.parametrize("k_shot", [1, 5])
    def test_shapes(self, k_shot):
        ds = synth_blobs(12, 30)
        ep = sample_episode(ds, EpisodeSpec(5, k_shot, 15), 0)
        assert ep.support_index.shape == (5 * k_shot,) and ep.query_index.shape == (75,)
        assert ep.support_images(ds).shape == (5 * k_shot, 16)
        np.testing.assert_array_equal(np.bincount(ep.query_labels), [15] * 5)
        assert len(set(ep.classes.tolist())) == 5

    def test_disjoint_and_deterministic(self):
        ds = synth_blobs(10, 25)
        spec = EpisodeSpec(5, 5, 15, seed=3)
        for i in range(50):
            ep = sample_episode(ds, spec, i)
            assert not set(ep.support_index).intersection(ep.query_index)
            np.testing.assert_array_equal(ds.labels[ep.support_index], ep.classes[ep.support_labels])
        a, b = sample_episode(ds, spec, 7), sample_episode(ds, spec, 7)
        np.testing.assert_array_equal(a.query_index, b.query_index)

    def test_small_class_named(self):
        ds = labelled([0] * 20 + [1] * 3 + [2] * 20, 3)
        with pytest.raises(ConfigError, match="class"):
            for i in range(20):
                sample_episode(ds, EpisodeSpec(3, 1, 5), i)

    def test_too_many_ways(self):
        with pytest.raises(ConfigError):
            sample_episode(synth_blobs(3, 20), EpisodeSpec(5, 1, 1), 0)


class TestBatches:
    def test_sizes(self):
        assert [len(b.labels) for b in make_batches(synth_blobs(2, 5), 4, 0, 0)] == [4, 4, 2]

    def test_permutation_and_determinism(self):
        ds = synth_blobs(3, 7)
        batches = make_batches(ds, 5, seed=1, epoch=2)
        idx = np.concatenate([b.index for b in batches])
        assert sorted(idx.tolist()) == list(range(len(ds)))
        np.testing.assert_array_equal(np.concatenate([b.images for b in batches]), ds.images[idx])
        again = make_batches(ds, 5, seed=1, epoch=2)
        np.testing.assert_array_equal(idx, np.concatenate([b.index for b in again]))
        other = make_batches(ds, 5, seed=1, epoch=3)
        assert not np.array_equal(idx, np.concatenate([b.index for b in other]))

    def test_label_override(self):
        ds = synth_blobs(2, 4)
        pseudo = np.arange(len(ds))
        for b in make_batches(ds, 3, 0, 0, labels=pseudo):
            np.testing.assert_array_equal(b.labels, b.index)

    def test_augmentation_deterministic_and_shape_preserving(self):
        ds = synth_blobs(2, 6, shape=(3, 8, 8))
        a = make_batches(ds, 4, 0, 0, augmentation=True)
        b = make_batches(ds, 4, 0, 0, augmentation=True)
        for x, y in zip(a, b):
            assert x.images.shape[1:] == (3, 8, 8)
            assert x.images.tobytes() == y.images.tobytes()
        plain = make_batches(ds, 4, 0, 0)
        assert any(not np.array_equal(x.images, p.images) for x, p in zip(a, plain))

    def test_bad_batch_size(self):
        with pytest.raises(ConfigError):
            make_batches(synth_blobs(2, 2), 0, 0, 0)
