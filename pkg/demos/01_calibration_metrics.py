"""
Measuring calibration: ECE, OE and reliability tables
=====================================================

A classifier is calibrated when its confidence matches how often it is
right. This walkthrough builds predictions by hand, bins them and reads off
the expected calibration error (ECE) and the overconfidence error (OE).
"""

import numpy as np

from calibdistill.calibration import (
    PredictionSet, calibration_report, predictions_from_logits, reliability_export,
)

# Four predictions, two of them in the low-confidence half and two in the
# high-confidence half. The low half is right 50% of the time at 35% mean
# confidence; the high half is right every time at 85% confidence.
preds = PredictionSet(confidences=[0.3, 0.4, 0.8, 0.9], predicted=[1, 0, 1, 1], actual=[1, 1, 1, 1])
report = calibration_report(preds, n_bins=2)
print("two bins:", report.counts, report.bin_accuracy, report.bin_confidence)
print(f"ECE = {report.ece:.3f}   OE = {report.oe:.3f}   (both bins underconfident, so OE is 0)")

# An overconfident model: 90% confidence, 50% accuracy.
report = calibration_report(PredictionSet([0.9, 0.9], [1, 0], [1, 1]), n_bins=1)
print(f"overconfident pair: ECE = {report.ece:.2f}   OE = {report.oe:.2f}")

# Confidences normally come from logits via the T=1 softmax. Stretching the
# logits leaves accuracy alone but moves confidence: here the raw draw is
# underconfident (OE 0) and the stretched one leans overconfident.
rng = np.random.default_rng(0)
labels = rng.integers(0, 10, 5000)
logits = rng.normal(size=(5000, 10))
logits[np.arange(5000), labels] += 2.0   # some signal
sharp = predictions_from_logits(3.0 * logits, labels)   # inflated logit scale
soft = predictions_from_logits(logits, labels)
for name, p in (("scaled x3", sharp), ("as drawn", soft)):
    r = calibration_report(p)
    print(f"{name:>10}: accuracy {r.accuracy:.3f}  ECE {r.ece:.3f}  OE {r.oe:.3f}")

# The per-bin table is what a reliability diagram plots.
bins, _ = reliability_export(calibration_report(sharp), sharp)
print("\n  bin_lo  bin_hi  count  accuracy  confidence")
for lo, hi, n, acc, conf in bins:
    if n:
        print(f"  {lo:6.3f}  {hi:6.3f}  {n:5d}  {acc:8.3f}  {conf:10.3f}")
