"""SGD, learning-rate schedules, teacher training and the distillation loop.

The distillation step sends the (crop/flip augmented) original batch through
the frozen teacher and the student to form the distillation term, and sends
the calibration-augmented batch through the student only to form the
augmentation term. The two are mixed with ``alpha``.
"""

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import augment as A
from . import losses as LS
from .calibration import DEFAULT_BINS, calibration_report, predict
from .data import (
    BatchPlan, apply_standard, batch_indices, draw_standard_params, normalize,
    split_holdout, with_normalization,
)
from .errors import ConfigurationError, NumericError, UsageError
from .models import backward, build_model, forward

log = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    velocity: list = None


def sgd_step(model, grads, opt, lr):
    """In-place SGD with momentum; weight decay is added to every gradient.

    g' = g + wd * theta;  v = momentum * v + g';  theta = theta - lr * v
    """
    if len(grads) != len(model.params):
        raise UsageError("gradient list does not match the model's parameters")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient; step aborted")
    if opt.velocity is None:
        opt.velocity = [np.zeros_like(p) for p in model.params]
    for p, g, v in zip(model.params, grads, opt.velocity):
        if opt.weight_decay:
            g = g + opt.weight_decay * p
        v *= opt.momentum
        v += g
        p -= lr * v
    model.touch()
    return model, opt


@dataclass(frozen=True)
class Schedule:
    kind: str = "cosine"
    t_max: int = 1
    milestones: tuple = ()
    gamma: float = 0.1
    eta_min: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(self.milestones))
        if self.kind not in ("cosine", "multistep", "constant"):
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        if self.t_max < 1:
            raise ConfigurationError("t_max must be >= 1")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ConfigurationError("milestones must be strictly increasing")
        if not 0 < self.gamma <= 1:
            raise ConfigurationError("gamma must be in (0, 1]")


def lr_at(schedule, epoch, lr0):
    if schedule.kind == "constant":
        return lr0
    if schedule.kind == "multistep":
        if epoch < 0:
            raise UsageError(f"epoch {epoch} out of range")
        k = sum(m <= epoch for m in schedule.milestones)
        # dividing keeps decimal factors exact: 0.1 / 10 == 0.01 but 0.1 * 0.1 != 0.01
        return lr0 / (1.0 / schedule.gamma) ** k
    if not 0 <= epoch <= schedule.t_max:
        raise UsageError(f"epoch {epoch} outside [0, {schedule.t_max}] for the cosine schedule")
    return (schedule.eta_min
            + 0.5 * (lr0 - schedule.eta_min) * (1 + np.cos(np.pi * epoch / schedule.t_max)))


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    schedule: Schedule = None  # None: cosine with t_max = epochs
    pad: int = 4
    flip_prob: float = 0.5
    val_fraction: float = 0.1
    seed: int = 0
    eval_batch_size: int = 256
    # precompute teacher outputs for both flips of every image; needs pad == 0
    cache_teacher: bool = False
    record_batches: bool = False

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.cache_teacher and self.pad:
            raise ConfigurationError("cache_teacher requires pad == 0 (random crops defeat the cache)")

    def resolved_schedule(self):
        return self.schedule or Schedule("cosine", t_max=max(self.epochs, 1))


@dataclass
class RunRecord:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_accuracy: float = float("nan")
    seed: int = 0
    dspec: dict = None
    wall_time: float = 0.0
    batches: list = None

    def metrics(self):
        return {"best_epoch": self.best_epoch, "best_val_accuracy": self.best_val_accuracy,
                "epochs": self.epochs}


def _epoch_seed(seed, epoch):
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def _training_batches(n, config, epoch):
    plan = BatchPlan(config.batch_size, _epoch_seed(config.seed, epoch), drop_last=False)
    idx = batch_indices(n, plan)
    # a tail of 1-2 samples cannot be mixed or fed to the angle loss
    if len(idx) > 1 and len(idx[-1]) < 3:
        idx[-2:] = [np.concatenate(idx[-2:])]
    return idx


def _prepare(dataset, config, val):
    if val is None:
        train_set, val = split_holdout(dataset, config.val_fraction, config.seed)
    else:
        train_set = dataset
    train_set = with_normalization(train_set)
    return train_set, val


def _val_accuracy(model, val, config):
    return float(predict(model, val, config.eval_batch_size).correct.mean())


def _fit(model, train_set, val, config, step_fn, dspec=None):
    """Shared epoch loop: returns the best-validation model and its RunRecord."""
    t0 = time.perf_counter()
    schedule = config.resolved_schedule()
    opt = OptimizerState(config.lr0, config.momentum, config.weight_decay)
    rng = np.random.default_rng([config.seed, 17])
    mean, std = train_set.mean, train_set.std
    record = RunRecord(seed=config.seed, dspec=dspec, batches=[] if config.record_batches else None)
    model.train()

    best = [p.copy() for p in model.params]
    if config.epochs == 0:
        record.best_epoch = 0
        record.best_val_accuracy = _val_accuracy(model, val, config)
    for epoch in range(config.epochs):
        lr = lr_at(schedule, epoch, config.lr0)
        sums, count = {"loss": 0.0, "kd": 0.0, "aug": 0.0}, 0
        for b, idx in enumerate(_training_batches(len(train_set), config, epoch)):
            raw = train_set.images[idx]
            offsets, flips = draw_standard_params(len(idx), config.pad, config.flip_prob, rng)
            raw = apply_standard(raw, config.pad, offsets, flips)
            x = normalize(raw, mean, std)
            where = {"epoch": epoch, "batch": b}
            try:
                loss, grads = step_fn(model, raw, x, train_set.labels[idx], idx, flips, rng)
                if not np.isfinite(loss.value):
                    raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}",
                                       diagnostics={**where, "components": loss.components})
                sgd_step(model, grads, opt, lr)
            except NumericError as exc:
                raise NumericError(str(exc), checkpoint=best,
                                   diagnostics=exc.diagnostics or where) from exc
            sums["loss"] += loss.value
            sums["kd"] += loss.components.get("kd", 0.0)
            sums["aug"] += loss.components.get("aug", 0.0)
            count += 1
            if record.batches is not None:
                record.batches.append({"epoch": epoch, "loss": loss.value, **loss.components})
        acc = _val_accuracy(model, val, config)
        model.train()
        record.epochs.append({
            "epoch": epoch, "lr": float(lr), "train_loss": sums["loss"] / count,
            "kd_component": sums["kd"] / count, "aug_component": sums["aug"] / count,
            "val_accuracy": acc})
        log.info("epoch %d lr %.4g loss %.4f val_acc %.4f", epoch, lr, sums["loss"] / count, acc)
        if not acc <= record.best_val_accuracy:  # also true for the initial NaN
            record.best_val_accuracy, record.best_epoch = acc, epoch
            best = [p.copy() for p in model.params]
    model.load_params(best)
    model.eval()
    record.wall_time = time.perf_counter() - t0
    return model, record


def train_teacher(spec, dataset, config, val=None):
    """Plain cross-entropy training with crop/flip augmentation only.

    ``val`` defaults to a seeded ``config.val_fraction`` holdout of
    ``dataset``; the returned model holds the best-validation parameters.
    """
    train_set, val = _prepare(dataset, config, val)
    model = build_model(spec)
    model.normalization = (train_set.mean, train_set.std)

    def step(model, raw, x, y, idx, flips, rng):
        res = forward(model, x)
        ce = LS.cross_entropy(res.logits, y)
        return ce, backward(model, res, ce.logit_grad)

    return _fit(model, train_set, val, config, step)


class TeacherCache:
    """Frozen-teacher logits/embeddings for each image, unflipped and flipped."""

    def __init__(self, teacher, images, batch_size=256):
        norm = teacher.normalization
        teacher.eval()
        outs = {}
        for flip in (False, True):
            logits, emb = [], []
            for s in range(0, len(images), batch_size):
                x = images[s:s + batch_size]
                if flip:
                    x = x[:, :, :, ::-1]
                if norm is not None:
                    x = normalize(x, *norm)
                r = forward(teacher, x)
                logits.append(r.logits)
                emb.append(r.embedding)
            outs[flip] = (np.concatenate(logits), np.concatenate(emb))
        self._outs = outs
        self.size = len(images)

    def lookup(self, idx, flips):
        z = np.where(flips[:, None], self._outs[True][0][idx], self._outs[False][0][idx])
        e = np.where(flips[:, None], self._outs[True][1][idx], self._outs[False][1][idx])
        return z, e


def _teacher_outputs(teacher, raw, cache, idx, flips):
    if cache is not None:
        return cache.lookup(idx, flips)
    x = raw if teacher.normalization is None else normalize(raw, *teacher.normalization)
    r = forward(teacher, x)
    return r.logits, r.embedding


def distillation_step(teacher, dspec, cache=None):
    """Build the per-batch objective used by :func:`distill`."""
    T = dspec.temperature

    def step(model, raw, x, y, idx, flips, rng):
        z_t, e_t = _teacher_outputs(teacher, raw, cache, idx, flips)
        fs = forward(model, x)
        fa, mb = fs, None
        if dspec.augmentation == "none":
            aug = LS.cross_entropy(fs.logits, y)
        elif dspec.augmentation == "mixup":
            mb = A.mixup(x, y, dspec.mixup_a, rng)
            fa = forward(model, mb.x_mix)
            aug = LS.mixup_ce_loss(fa.logits, mb)
        elif dspec.augmentation == "cutout":
            cb = A.cutout(x, y, dspec.cutout_size, rng)
            fa = forward(model, cb.x_cut)
            aug = LS.cross_entropy(fa.logits, cb.y)
        else:
            cm = A.cutmix(x, y, dspec.cutmix_p, dspec.cutmix_a, rng)
            if cm.applied:
                fa = forward(model, cm.x_cm)
            aug = LS.cutmix_ce_loss(fa.logits, cm)

        if dspec.distiller == "rkd_da":
            kd = LS.rkd_da_loss(e_t, fs.embedding, dspec.rkd_distance_weight,
                                dspec.rkd_angle_weight)
        elif mb is not None:
            p = mb.pairing
            kd = LS.mixup_distill_loss(z_t, fs.logits, z_t[p], fs.logits[p], T,
                                       pairing=p, rescale_T2=dspec.grad_rescale_T2)
        else:
            kd = LS.scaled_kl_loss(z_t, fs.logits, T, rescale_T2=dspec.grad_rescale_T2)

        total = LS.combined_loss(dspec, kd, aug)
        kd_t, aug_t = total.terms["kd"], total.terms["aug"]
        if fa is fs:
            g = aug_t.logit_grad if kd_t.logit_grad is None else kd_t.logit_grad + aug_t.logit_grad
            grads = backward(model, fs, g, kd_t.embedding_grad)
        else:
            kd_logit = kd_t.logit_grad
            if kd_logit is None:
                kd_logit = np.zeros_like(fs.logits)
            g1 = backward(model, fs, kd_logit, kd_t.embedding_grad)
            g2 = backward(model, fa, aug_t.logit_grad)
            grads = [a + b for a, b in zip(g1, g2)]
        return total, grads

    return step


def distill(teacher, student_spec, dataset, dspec, config, val=None, init_params=None):
    """Distill a student from a frozen teacher; returns (best-val student, RunRecord).

    ``init_params`` optionally replaces the student's initial parameters.
    """
    if tuple(teacher.spec.input_shape) != tuple(student_spec.input_shape):
        raise ConfigurationError(
            f"teacher input shape {teacher.spec.input_shape} != student input shape "
            f"{student_spec.input_shape}")
    if teacher.spec.n_classes != student_spec.n_classes:
        raise ConfigurationError("teacher and student disagree on n_classes")
    train_set, val = _prepare(dataset, config, val)
    model = build_model(student_spec)
    if init_params is not None:
        model.load_params(init_params)
    model.normalization = (train_set.mean, train_set.std)
    teacher_mode = teacher.mode
    teacher.eval()
    cache = TeacherCache(teacher, train_set.images) if config.cache_teacher else None
    try:
        return _fit(model, train_set, val, config, distillation_step(teacher, dspec, cache),
                    dspec=asdict(dspec))
    finally:
        teacher.mode = teacher_mode


def evaluate(model, dataset, n_bins=DEFAULT_BINS, batch_size=256):
    """Calibration report (and accuracy) of ``model`` on any compatible test set."""
    if tuple(dataset.image_shape) != tuple(model.spec.input_shape):
        raise ConfigurationError(
            f"dataset images {tuple(dataset.image_shape)} do not fit model input "
            f"{model.spec.input_shape}")
    if dataset.n_classes > model.spec.n_classes or dataset.labels.max() >= model.spec.n_classes:
        raise ConfigurationError("dataset has more classes than the model outputs")
    report = calibration_report(predict(model, dataset, batch_size), n_bins)
    return report, report.accuracy
