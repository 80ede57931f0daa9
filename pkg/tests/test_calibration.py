import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calibdistill.calibration import (
    PredictionSet, calibration_report, ece_from_bin_table, predictions_from_logits,
    read_bin_table, reliability_export,
)
from calibdistill.errors import InputError


def brute_force_metrics(conf, correct, n_bins):
    """Direct per-bin loop: bins (lo, hi], the first closed at 0."""
    edges = np.linspace(0, 1, n_bins + 1)
    n = len(conf)
    ece = oe = 0.0
    for b in range(n_bins):
        lo, hi = edges[b], edges[b + 1]
        mask = (conf > lo) & (conf <= hi)
        if b == 0:
            mask |= conf == 0
        if not mask.any():
            continue
        acc, cf = correct[mask].mean(), conf[mask].mean()
        ece += mask.sum() / n * abs(acc - cf)
        oe += mask.sum() / n * cf * max(cf - acc, 0.0)
    return ece, oe


def random_preds(rng, n):
    conf = rng.random(n)
    # sprinkle exact edge values so boundary handling is exercised
    conf[: n // 10] = rng.choice(np.linspace(0, 1, 31), n // 10)
    actual = rng.integers(0, 3, n)
    pred = np.where(rng.random(n) < conf, actual, (actual + 1) % 3)
    return PredictionSet(conf, pred, actual)


class TestPredictions:
    def test_uniform_tie(self):
        ps = predictions_from_logits(np.zeros((1, 4)), [2])
        assert ps.confidences[0] == 0.25 and ps.predicted[0] == 0

    def test_hand_confidence(self):
        ps = predictions_from_logits(np.array([[5.0, 1.0]]), [0])
        assert abs(ps.confidences[0] - np.exp(5) / (np.exp(5) + np.exp(1))) < 1e-15
        assert abs(ps.confidences[0] - 0.982014) < 1e-6

    def test_duplicated(self):
        z = np.random.default_rng(0).normal(size=(3, 4))
        a = predictions_from_logits(z, [0, 1, 2])
        b = predictions_from_logits(np.concatenate([z, z]), [0, 1, 2] * 2)
        np.testing.assert_array_equal(b.confidences, np.tile(a.confidences, 2))


class TestReport:
    def test_two_bin_hand_case(self):
        r = calibration_report(PredictionSet([0.3, 0.4, 0.8, 0.9], [1, 0, 1, 1], [1, 1, 1, 1]), 2)
        assert r.counts.tolist() == [2, 2]
        np.testing.assert_allclose(r.bin_confidence, [0.35, 0.85], atol=1e-15)
        assert r.bin_accuracy.tolist() == [0.5, 1.0]
        assert abs(r.ece - 0.15) < 1e-15 and r.oe == 0

    def test_one_bin_hand_case(self):
        r = calibration_report(PredictionSet([0.9, 0.9], [1, 0], [1, 1]), 1)
        assert abs(r.ece - 0.4) < 1e-15 and abs(r.oe - 0.36) < 1e-15

    def test_perfectly_calibrated(self):
        # confidence 0.5 with half correct, confidence 1 with all correct
        r = calibration_report(PredictionSet([0.5, 0.5, 1.0], [0, 1, 2], [0, 0, 2]), 10)
        assert r.ece == 0 and r.oe == 0

    def test_edges_and_zero(self):
        r = calibration_report(PredictionSet([0.0, 0.5, 1.0], [0, 0, 0], [0, 0, 0]), 2)
        # 0.5 sits on the edge and belongs to the lower bin
        assert r.counts.tolist() == [2, 1]

    def test_rejects_bad_input(self):
        with pytest.raises(InputError):
            calibration_report(PredictionSet([1.2], [0], [0]))
        with pytest.raises(InputError):
            calibration_report(PredictionSet([], [], []))
        with pytest.raises(InputError):
            calibration_report(PredictionSet([0.5], [0], [0]), 0)

    @pytest.mark.parametrize("n_bins", [1, 2, 15])
    @pytest.mark.parametrize("seed", range(4))
    def test_brute_force_oracle(self, n_bins, seed):
        rng = np.random.default_rng(seed)
        ps = random_preds(rng, int(rng.integers(1, 3000)))
        r = calibration_report(ps, n_bins)
        ece, oe = brute_force_metrics(ps.confidences, ps.correct.astype(float), n_bins)
        assert abs(r.ece - ece) < 1e-12 and abs(r.oe - oe) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 300), b=st.integers(1, 20))
    def test_oe_le_ece_and_permutation(self, seed, n, b):
        rng = np.random.default_rng(seed)
        ps = random_preds(rng, n)
        r = calibration_report(ps, b)
        assert r.oe <= r.ece + 1e-15
        p = rng.permutation(n)
        shuffled = calibration_report(PredictionSet(ps.confidences[p], ps.predicted[p],
                                                    ps.actual[p]), b)
        assert abs(shuffled.ece - r.ece) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n1=st.integers(1, 200), n2=st.integers(1, 200))
    def test_merge_recombines_bins(self, seed, n1, n2):
        rng = np.random.default_rng(seed)
        a, b = random_preds(rng, n1), random_preds(rng, n2)
        ra, rb = calibration_report(a, 15), calibration_report(b, 15)
        merged = calibration_report(PredictionSet.concat(a, b), 15)
        counts = ra.counts + rb.counts
        acc = np.divide(ra.counts * ra.bin_accuracy + rb.counts * rb.bin_accuracy, counts,
                        out=np.zeros(15), where=counts > 0)
        np.testing.assert_array_equal(merged.counts, counts)
        np.testing.assert_allclose(merged.bin_accuracy, acc, atol=1e-12)


class TestExport:
    def test_rows_and_round_trip(self, tmp_path):
        ps = random_preds(np.random.default_rng(7), 500)
        r = calibration_report(ps, 15)
        bins, samples = reliability_export(r, ps, tmp_path / "b.csv", tmp_path / "s.csv")
        assert len(bins) == 15 and len(samples) == 500
        ece, oe = ece_from_bin_table(read_bin_table(tmp_path / "b.csv"))
        assert abs(ece - r.ece) < 1e-12 and abs(oe - r.oe) < 1e-12
        assert (tmp_path / "b.csv").read_text().splitlines()[0] == \
            "bin_lo,bin_hi,count,accuracy,confidence"
        assert (tmp_path / "s.csv").read_text().splitlines()[0] == "confidence,correct"

    def test_empty_bin_sentinel(self):
        ps = PredictionSet([0.95, 0.97], [0, 1], [0, 0])
        bins, _ = reliability_export(calibration_report(ps, 4), ps)
        assert bins[0][2:] == (0, 0.0, 0.0)
