"""Experiment configuration: one JSON document describes a whole run.

Validation is strict (unknown keys are rejected) and error messages carry the
dotted path of the offending field, e.g. ``distill.alpha``.
"""

import json
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .data import load_cifar_binary, make_synthetic
from .errors import ConfigurationError
from .losses import DistillSpec
from .models import ModelSpec
from .train import Schedule, TrainConfig

OUTPUT_ROOT_ENV = "CALIBDISTILL_OUTPUT_ROOT"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSection(_Section):
    kind: Literal["synthetic", "cifar10", "cifar100_fine"] = "synthetic"
    # synthetic generator
    n_classes: int = Field(10, ge=2)
    train_per_class: int = Field(500, ge=1)
    test_per_class: int = Field(100, ge=1)
    image_shape: Tuple[int, int, int] = (3, 32, 32)
    train_seed: int = 1
    test_seed: int = 2
    # CIFAR binary files or directories
    train_path: Optional[str] = None
    test_path: Optional[str] = None

    @model_validator(mode="after")
    def _paths(self):
        if self.kind != "synthetic" and not (self.train_path and self.test_path):
            raise ValueError(f"kind={self.kind!r} needs train_path and test_path")
        return self

    @property
    def classes(self):
        return {"synthetic": self.n_classes, "cifar10": 10, "cifar100_fine": 100}[self.kind]

    @property
    def input_shape(self):
        return tuple(self.image_shape) if self.kind == "synthetic" else (3, 32, 32)


class ScheduleSection(_Section):
    kind: Literal["cosine", "multistep", "constant"] = "cosine"
    t_max: Optional[int] = Field(None, ge=1)  # None: the number of epochs
    milestones: List[int] = []
    gamma: float = Field(0.1, gt=0, le=1)
    eta_min: float = Field(0.0, ge=0)


class TrainSection(_Section):
    epochs: int = Field(30, ge=0)
    batch_size: int = Field(64, ge=1)
    lr0: float = Field(0.1, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    weight_decay: float = Field(5e-4, ge=0)
    schedule: ScheduleSection = ScheduleSection()
    pad: int = Field(4, ge=0)
    flip_prob: float = Field(0.5, ge=0, le=1)
    val_fraction: float = Field(0.1, gt=0, lt=1)
    cache_teacher: bool = False

    @model_validator(mode="after")
    def _cache(self):
        if self.cache_teacher and self.pad:
            raise ValueError("cache_teacher requires pad == 0")
        return self


class ModelSection(_Section):
    arch_id: Literal["tiny_teacher", "tiny_student", "mlp_probe"]
    width_multiplier: float = Field(1.0, gt=0)
    seed: Optional[int] = None  # None: the experiment seed
    precision: Literal["float64", "float32"] = "float64"


class TeacherSection(ModelSection):
    arch_id: Literal["tiny_teacher", "tiny_student", "mlp_probe"] = "tiny_teacher"
    train: Optional[TrainSection] = None  # None: the shared train section


class StudentSection(ModelSection):
    arch_id: Literal["tiny_teacher", "tiny_student", "mlp_probe"] = "tiny_student"


class DistillSection(_Section):
    distiller: Literal["scaled_kd", "rkd_da"] = "scaled_kd"
    augmentation: Literal["none", "mixup", "cutout", "cutmix"] = "none"
    alpha: float = Field(0.5, ge=0, le=1)
    temperature: float = Field(50.0, gt=0)
    mixup_a: float = Field(0.4, gt=0)
    cutout_size: int = Field(16, ge=1)
    cutmix_p: float = Field(0.5, ge=0, le=1)
    cutmix_a: float = Field(1.0, gt=0)
    grad_rescale_T2: bool = False
    rkd_distance_weight: float = Field(1.0, ge=0)
    rkd_angle_weight: float = Field(2.0, ge=0)


class EvalSection(_Section):
    n_bins: int = Field(15, ge=1)


class ExperimentConfig(_Section):
    dataset: DatasetSection = DatasetSection()
    teacher: TeacherSection = TeacherSection()
    student: StudentSection = StudentSection()
    distill: DistillSection = DistillSection()
    train: TrainSection = TrainSection()
    eval: EvalSection = EvalSection()
    seed: int = 0
    output_dir: str = "runs"

    @model_validator(mode="after")
    def _materialize(self):
        # fill seed placeholders so the persisted copy is complete
        for section in (self.teacher, self.student):
            if section.seed is None:
                section.seed = self.seed
        if self.teacher.train is None:
            self.teacher.train = self.train.model_copy(deep=True)
        for tr in (self.train, self.teacher.train):
            if tr.schedule.t_max is None:
                tr.schedule.t_max = max(tr.epochs, 1)
        return self

    # ---------------------------------------------------------------- builders

    def model_spec(self, role):
        section = self.teacher if role == "teacher" else self.student
        return ModelSpec(section.arch_id, self.dataset.classes, section.width_multiplier,
                         self.dataset.input_shape, section.seed, section.precision)

    def train_config(self, role):
        tr = self.teacher.train if role == "teacher" else self.train
        sch = tr.schedule
        return TrainConfig(
            epochs=tr.epochs, batch_size=tr.batch_size, lr0=tr.lr0, momentum=tr.momentum,
            weight_decay=tr.weight_decay, pad=tr.pad, flip_prob=tr.flip_prob,
            val_fraction=tr.val_fraction, seed=self.seed, cache_teacher=tr.cache_teacher,
            schedule=Schedule(sch.kind, sch.t_max, tuple(sch.milestones), sch.gamma, sch.eta_min))

    def distill_spec(self):
        return DistillSpec(**self.distill.model_dump())

    def load_data(self):
        """(train, test) datasets."""
        d = self.dataset
        if d.kind == "synthetic":
            return (make_synthetic(d.n_classes, d.train_per_class, d.image_shape, d.train_seed),
                    make_synthetic(d.n_classes, d.test_per_class, d.image_shape, d.test_seed))
        return load_cifar_binary(d.train_path, d.kind), load_cifar_binary(d.test_path, d.kind)

    def resolved_output_dir(self):
        root = os.environ.get(OUTPUT_ROOT_ENV)
        out = Path(self.output_dir)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out

    def to_json(self):
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)


def format_validation_error(err):
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data):
    """Validate a mapping; raises ConfigurationError naming each bad field."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigurationError(format_validation_error(err)) from None


def load_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"{path}: invalid JSON ({err})") from None
    return parse_config(data)
