"""
Does augmentation during distillation improve calibration?
==========================================================

A teacher is trained on the synthetic grating dataset, then students are
distilled from it with and without input augmentation. Each student is
scored on held-out data by accuracy, expected calibration error (ECE) and
overconfidence error (OE).

Pass ``--full`` for the acceptance-suite sizes (30 epochs, three seeds,
about 35 minutes on one core); the default is a shortened run.
"""

import argparse
import time

import numpy as np

from calibdistill.data import make_synthetic
from calibdistill.losses import DistillSpec
from calibdistill.models import ModelSpec
from calibdistill.train import TrainConfig, distill, evaluate, train_teacher

parser = argparse.ArgumentParser()
parser.add_argument("--full", action="store_true")
args = parser.parse_args()
epochs, seeds, per_class = (30, (1, 2, 3), 500) if args.full else (12, (1,), 300)

train = make_synthetic(10, per_class, (3, 32, 32), seed=1)
test = make_synthetic(10, 100, (3, 32, 32), seed=2)

t0 = time.perf_counter()
teacher, record = train_teacher(ModelSpec("tiny_teacher", 10, 0.5, (3, 32, 32), 0, "float32"),
                                train, TrainConfig(epochs=epochs, lr0=0.02, seed=0))
report, acc = evaluate(teacher, test)
print(f"teacher: accuracy {acc:.3f}  ECE {report.ece:.4f}  OE {report.oe:.4f}  "
      f"(best epoch {record.best_epoch}, {time.perf_counter() - t0:.0f} s)")

# Unpadded students let the teacher's logits be computed once per flip state.
student_config = dict(epochs=epochs, lr0=0.02, pad=0, cache_teacher=True)
rows = {}
for seed in seeds:
    spec = ModelSpec("tiny_student", 10, 0.5, (3, 32, 32), seed, "float32")
    for aug in ("none", "mixup", "cutout", "cutmix"):
        dspec = DistillSpec(augmentation=aug, temperature=50, alpha=0.5, grad_rescale_T2=True)
        student, _ = distill(teacher, spec, train, dspec, TrainConfig(seed=seed, **student_config))
        report, acc = evaluate(student, test)
        rows.setdefault(aug, []).append((acc, report.ece, report.oe))
        print(f"  seed {seed} KD+{aug:<7} accuracy {acc:.3f}  ECE {report.ece:.4f}  "
              f"OE {report.oe:.4f}")

print("\nmedians over seeds")
for aug, vals in rows.items():
    acc, ece, oe = np.median(np.array(vals), axis=0)
    print(f"  KD+{aug:<7} accuracy {acc:.3f}  ECE {ece:.4f}  OE {oe:.4f}")

# At this scale the students are not overconfident to begin with (OE stays
# small for KD+none), so mixup tends to push them into underconfidence.
