"""Distilling calibrated students from uncalibrated teachers.

A small numpy library: tiny conv nets with hand-written backward passes,
scaled-KL and relational distillation losses, mixup / cutout / CutMix, SGD
training loops and ECE / OE calibration reports.
"""

from .augment import cutmix, cutout, mixup
from .calibration import PredictionSet, calibration_report, predict, reliability_export
from .data import BatchPlan, Dataset, load_cifar_binary, make_synthetic, standard_augment
from .errors import (
    ConfigurationError, FormatError, InputError, NumericError, UsageError,
)
from .losses import (
    DistillSpec, combined_loss, cross_entropy, mixup_ce_loss, mixup_distill_loss,
    rkd_angle_loss, rkd_distance_loss, scaled_kl_loss, temp_softmax,
)
from .models import ModelSpec, backward, build_model, forward, load_checkpoint, save_checkpoint
from .train import Schedule, TrainConfig, distill, evaluate, lr_at, sgd_step, train_teacher

__version__ = "0.1.0"
