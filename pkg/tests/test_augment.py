import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calibdistill.augment import centered_box, cutmix, cutout, mixup
from calibdistill.errors import ConfigurationError


def rand_batch(n=4, c=3, h=8, w=8, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((n, c, h, w)), rng.integers(0, 5, n)


class TestMixup:
    def test_lambda_one_is_identity(self):
        x, y = rand_batch()
        mb = mixup(x, y, 0.4, np.random.default_rng(0), lam=1.0)
        assert mb.x_mix.tobytes() == x.tobytes()

    def test_arithmetic(self):
        x = np.stack([np.ones((3, 4, 4)), np.zeros((3, 4, 4))])
        mb = mixup(x, np.array([0, 1]), 0.4, None, lam=0.4, pairing=np.array([1, 0]))
        assert np.all(mb.x_mix[0] == 0.4)
        assert mb.y_i.tolist() == [0, 1] and mb.y_j.tolist() == [1, 0]

    def test_formula_exact(self):
        x, y = rand_batch(6)
        mb = mixup(x, y, 0.4, np.random.default_rng(3))
        assert np.array_equal(mb.x_mix, mb.lam * x + (1 - mb.lam) * x[mb.pairing])
        assert sorted(mb.pairing.tolist()) == list(range(6))

    def test_beta_mean(self):
        # Beta(a, a) is symmetric about 1/2
        rng = np.random.default_rng(11)
        x, y = rand_batch(2, 1, 1, 1)
        lams = [mixup(x, y, 0.4, rng).lam for _ in range(100_000)]
        assert abs(np.mean(lams) - 0.5) < 0.01

    def test_convexity(self):
        x, y = rand_batch(8)
        mb = mixup(x, y, 0.4, np.random.default_rng(2))
        lo = np.minimum(x, x[mb.pairing])
        hi = np.maximum(x, x[mb.pairing])
        assert np.all(mb.x_mix >= lo - 1e-15) and np.all(mb.x_mix <= hi + 1e-15)

    def test_bad_a(self):
        x, y = rand_batch()
        with pytest.raises(ConfigurationError):
            mixup(x, y, 0.0, np.random.default_rng(0))


class TestCutout:
    def test_clipped_corner(self):
        x = np.ones((1, 2, 8, 8))
        cb = cutout(x, np.array([0]), 4, None, centers=[(1, 1)])
        assert tuple(cb.boxes[0]) == (0, 3, 0, 3)
        for ch in range(2):
            assert (cb.x_cut[0, ch] == 0).sum() == 9
            assert np.all(cb.x_cut[0, ch, :3, :3] == 0)

    def test_huge_hole_zeroes_all(self):
        x, y = rand_batch()
        cb = cutout(x, y, 16, np.random.default_rng(0))
        assert not cb.x_cut.any()

    def test_outside_unchanged_and_labels_kept(self):
        x, y = rand_batch(6, h=12, w=10)
        cb = cutout(x, y, 5, np.random.default_rng(4))
        for i, (r1, r2, c1, c2) in enumerate(cb.boxes):
            mask = np.zeros((12, 10), bool)
            mask[r1:r2, c1:c2] = True
            assert np.all(cb.x_cut[i][:, mask] == 0)
            assert cb.x_cut[i][:, ~mask].tobytes() == x[i][:, ~mask].tobytes()
        assert np.array_equal(cb.y, y)

    def test_idempotent(self):
        x, y = rand_batch()
        centers = [(2, 3), (0, 7), (5, 5), (7, 0)]
        once = cutout(x, y, 4, None, centers=centers)
        twice = cutout(once.x_cut, y, 4, None, centers=centers)
        assert np.array_equal(once.x_cut, twice.x_cut)


class TestCutMix:
    def test_hand_geometry(self):
        x, y = rand_batch(2, 1, 10, 10)
        cm = cutmix(x, y, 1.0, 1.0, None, apply=True, lam=0.64, center=(5, 5),
                    pairing=np.array([1, 0]))
        r1, r2, c1, c2 = cm.box
        assert (r2 - r1, c2 - c1) == (6, 6)
        assert cm.lam_adj == 1 - 36 / 100

    def test_not_applied_is_identity(self):
        x, y = rand_batch()
        cm = cutmix(x, y, 0.5, 1.0, None, apply=False)
        assert cm.x_cm.tobytes() == x.tobytes()
        assert cm.lam_adj == 1 and np.array_equal(cm.y_j, cm.y_i) and not cm.applied

    def test_probability_zero_never_applies(self):
        x, y = rand_batch()
        rng = np.random.default_rng(0)
        assert not any(cutmix(x, y, 0.0, 1.0, rng).applied for _ in range(50))

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), h=st.integers(2, 12), w=st.integers(2, 12))
    def test_pixel_provenance(self, seed, h, w):
        rng = np.random.default_rng(seed)
        # distinct values everywhere so provenance is unambiguous
        x = rng.permutation(4 * 2 * h * w).reshape(4, 2, h, w).astype(float)
        cm = cutmix(x, np.arange(4), 1.0, 1.0, rng)
        r1, r2, c1, c2 = cm.box
        area = (r2 - r1) * (c2 - c1)
        assert cm.lam_adj + area / (h * w) == 1
        for i in range(4):
            src = x[cm.pairing[i]]
            from_self = cm.x_cm[i] == x[i]
            from_pair = cm.x_cm[i] == src
            assert np.all(from_self | from_pair)
            expected = area if cm.pairing[i] != i else 0
            assert (~from_self[0]).sum() == expected
            assert np.all(from_pair[:, r1:r2, c1:c2])


def test_centered_box_clips():
    assert centered_box(0, 0, 4, 4, 8, 8) == (0, 2, 0, 2)
    assert centered_box(7, 7, 4, 4, 8, 8) == (5, 8, 5, 8)
    assert centered_box(3, 4, 5, 5, 8, 8) == (1, 6, 2, 7)
