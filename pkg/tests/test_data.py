import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calibdistill.data import (
    BatchPlan, Dataset, batch_indices, batches, denormalize, encode_cifar_binary,
    load_cifar_binary, make_synthetic, normalize, split_holdout, standard_augment,
    with_normalization,
)
from calibdistill.errors import ConfigurationError, FormatError


def cifar_record(label_bytes, pixel_fill):
    return bytes(label_bytes) + bytes([pixel_fill]) * 3072


class TestCifarBinary:
    def test_single_record(self, tmp_path):
        path = tmp_path / "one.bin"
        path.write_bytes(cifar_record([3], 255))
        ds = load_cifar_binary(path, "cifar10")
        assert len(ds) == 1 and ds.labels[0] == 3
        assert ds.images.shape == (1, 3, 32, 32) and np.all(ds.images == 1.0)

    def test_plane_order(self, tmp_path):
        pixels = np.arange(3072, dtype=np.uint32) % 251
        (tmp_path / "p.bin").write_bytes(bytes([1]) + pixels.astype(np.uint8).tobytes())
        ds = load_cifar_binary(tmp_path / "p.bin")
        # byte 1 + (c * 1024 + r * 32 + col) holds channel c, row r, column col
        assert ds.images[0, 1, 2, 5] == pixels[1024 + 2 * 32 + 5] / 255
        assert ds.images[0, 2, 31, 0] == pixels[2048 + 31 * 32] / 255

    def test_round_trip_bytes(self, tmp_path):
        rng = np.random.default_rng(0)
        raw = b"".join(bytes([int(rng.integers(10))]) + rng.integers(0, 256, 3072, dtype=np.uint8).tobytes()
                       for _ in range(2))
        src = tmp_path / "two.bin"
        src.write_bytes(raw)
        out = encode_cifar_binary(load_cifar_binary(src), tmp_path / "out.bin")
        assert out.read_bytes() == raw

    def test_cifar100_fine_label(self, tmp_path):
        path = tmp_path / "c100.bin"
        record = cifar_record([5, 77], 0)
        path.write_bytes(record)
        ds = load_cifar_binary(path, "cifar100_fine")
        # reference decode: byte 0 coarse, byte 1 fine
        assert ds.labels[0] == record[1] == 77
        assert ds.coarse_labels[0] == record[0] == 5
        assert ds.n_classes == 100
        assert encode_cifar_binary(ds, tmp_path / "re.bin", "cifar100_fine").read_bytes() == record

    def test_truncated(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(cifar_record([1], 0) + b"\x02" * 100)
        with pytest.raises(FormatError, match="byte offset 3073"):
            load_cifar_binary(path)

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(cifar_record([1], 0) + cifar_record([10], 0))
        with pytest.raises(FormatError, match="label byte 10"):
            load_cifar_binary(path)

    def test_directory_and_list(self, tmp_path):
        (tmp_path / "a.bin").write_bytes(cifar_record([1], 0))
        (tmp_path / "b.bin").write_bytes(cifar_record([2], 0))
        assert load_cifar_binary(tmp_path).labels.tolist() == [1, 2]
        assert load_cifar_binary([tmp_path / "b.bin", tmp_path / "a.bin"]).labels.tolist() == [2, 1]

    def test_synthetic_exports_to_cifar_layout(self, tmp_path):
        ds = make_synthetic(3, 2, (3, 32, 32), seed=4)
        back = load_cifar_binary(encode_cifar_binary(ds, tmp_path / "s.bin"))
        assert back.labels.tolist() == ds.labels.tolist()
        assert np.abs(back.images - ds.images).max() <= 0.5 / 255 + 1e-12


class TestSynthetic:
    def test_balanced(self):
        ds = make_synthetic(10, 100, (3, 32, 32), seed=1)
        assert len(ds) == 1000
        assert np.bincount(ds.labels).tolist() == [100] * 10

    def test_deterministic(self):
        a = make_synthetic(4, 5, (3, 16, 16), seed=3)
        b = make_synthetic(4, 5, (3, 16, 16), seed=3)
        assert a.images.tobytes() == b.images.tobytes()
        assert not np.array_equal(a.images, make_synthetic(4, 5, (3, 16, 16), seed=4).images)

    def test_range(self):
        ds = make_synthetic(5, 10, (3, 8, 8), seed=0)
        assert ds.images.min() >= 0 and ds.images.max() <= 1

    def test_rejects_single_class(self):
        with pytest.raises(ConfigurationError):
            make_synthetic(1, 10)


class TestNormalization:
    def test_invertible(self):
        ds = with_normalization(make_synthetic(3, 4, (3, 8, 8), seed=0))
        z = normalize(ds.images, ds.mean, ds.std)
        np.testing.assert_allclose(denormalize(z, ds.mean, ds.std), ds.images, atol=1e-14)
        np.testing.assert_allclose(z.mean(axis=(0, 2, 3)), 0, atol=1e-12)

    def test_holdout_split(self):
        ds = make_synthetic(4, 25, (1, 4, 4), seed=0)
        tr, va = split_holdout(ds, 0.1, seed=5)
        assert len(tr) == 90 and len(va) == 10
        a, b = split_holdout(ds, 0.1, seed=5)
        assert np.array_equal(a.labels, tr.labels) and np.array_equal(b.images, va.images)


class TestBatches:
    def _ds(self, m):
        return Dataset(np.arange(m, dtype=float).reshape(m, 1, 1, 1), np.arange(m) % 3, 3)

    def test_drop_last(self):
        out = batches(self._ds(10), BatchPlan(4, 0, drop_last=True))
        assert [len(y) for _, y in out] == [4, 4]

    def test_seeded_order(self):
        ds = self._ds(20)
        a = np.concatenate([x.ravel() for x, _ in batches(ds, BatchPlan(6, 1))])
        b = np.concatenate([x.ravel() for x, _ in batches(ds, BatchPlan(6, 1))])
        c = np.concatenate([x.ravel() for x, _ in batches(ds, BatchPlan(6, 2))])
        assert np.array_equal(a, b) and not np.array_equal(a, c)

    def test_empty_epoch(self):
        with pytest.raises(ConfigurationError):
            batches(self._ds(3), BatchPlan(4, 0, drop_last=True))

    @settings(max_examples=60, deadline=None)
    @given(m=st.integers(1, 200), bs=st.integers(1, 64), seed=st.integers(0, 2**32 - 1))
    def test_partition(self, m, bs, seed):
        idx = batch_indices(m, BatchPlan(bs, seed))
        assert sorted(np.concatenate(idx).tolist()) == list(range(m))
        assert all(len(i) == bs for i in idx[:-1])


class TestStandardAugment:
    def test_identity_config(self):
        x = np.random.default_rng(0).random((5, 3, 8, 8))
        out = standard_augment(x, 0, 0.0, np.random.default_rng(1))
        assert out.tobytes() == x.tobytes()

    def test_double_flip_restores(self):
        x = np.random.default_rng(0).random((4, 3, 8, 8))
        once = standard_augment(x, 0, 1.0, np.random.default_rng(1))
        assert np.array_equal(once, x[..., ::-1])
        assert np.array_equal(standard_augment(once, 0, 1.0, np.random.default_rng(2)), x)

    def test_crop_offset_support(self):
        # a single bright pixel at the centre stays in frame and reveals the crop offset
        x = np.zeros((1, 1, 32, 32))
        x[0, 0, 16, 16] = 1.0
        rng = np.random.default_rng(0)
        seen = set()
        for _ in range(3000):
            out = standard_augment(x, 4, 0.0, rng)
            r, c = np.argwhere(out[0, 0] == 1.0)[0]
            seen.add((20 - r, 20 - c))  # offset = pad + 16 - new position
        assert seen == {(r, c) for r in range(9) for c in range(9)}
