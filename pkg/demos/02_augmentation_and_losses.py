"""
Augmentations and the distillation objective
============================================

Mixup, cutout and CutMix perturb a batch; the student sees the perturbed
batch, while the teacher and the student both see the original batch for the
distillation term. The two terms are blended with ``alpha``.
"""

import numpy as np

from calibdistill.augment import cutmix, cutout, mixup
from calibdistill.data import make_synthetic
from calibdistill.losses import (
    DistillSpec, combined_loss, cutmix_ce_loss, mixup_ce_loss, mixup_distill_loss,
    rkd_distance_loss, scaled_kl_loss,
)

rng = np.random.default_rng(3)
ds = make_synthetic(4, 2, (3, 32, 32), seed=0)
x, y = ds.images, ds.labels

# Mixup: one lambda per batch, partners drawn by a random permutation.
mb = mixup(x, y, a=0.4, rng=rng)
print(f"mixup lambda {mb.lam:.3f}, pairing {mb.pairing.tolist()}")

# Cutout: a square hole, clipped at the image border.
cb = cutout(x, y, hole_size=16, rng=rng)
print("cutout boxes (r1, r2, c1, c2):", [tuple(int(v) for v in b) for b in cb.boxes[:3]], "...")

# CutMix: the label weight is the surviving area fraction, not the raw draw.
cm = cutmix(x, y, p=1.0, a=1.0, rng=rng)
r1, r2, c1, c2 = cm.box
print(f"cutmix box {cm.box}, lambda_adj {cm.lam_adj:.4f} = 1 - {(r2 - r1) * (c2 - c1)}/1024")

# Losses on made-up logits.
z_teacher = rng.normal(size=(8, 4)) * 3
z_student = rng.normal(size=(8, 4))
kd = scaled_kl_loss(z_teacher, z_student, T=50)
print(f"\nscaled KL at T=50: {kd.value:.3e} (tiny: both tempered softmaxes are nearly uniform)")
print(f"same with T^2 rescaling: {scaled_kl_loss(z_teacher, z_student, 50, rescale_T2=True).value:.3e}")

aug = mixup_ce_loss(z_student, mb)
p = mb.pairing
kd_mix = mixup_distill_loss(z_teacher, z_student, z_teacher[p], z_student[p], 50, pairing=p)
total = combined_loss(DistillSpec(alpha=0.5), kd_mix, aug)
print(f"mixup CE {aug.value:.4f}, two-stream KD {kd_mix.value:.3e}, blended {total.value:.4f}")
print(f"cutmix CE {cutmix_ce_loss(z_student, cm).value:.4f}")

# Relational distillation compares shapes of embedding clouds, so a global
# rescaling of the student's features costs nothing.
e = rng.normal(size=(6, 5))
print(f"\nRKD distance loss, student = 3 x teacher: {rkd_distance_loss(e, 3 * e).value:.1e}")
