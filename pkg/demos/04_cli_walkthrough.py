"""
Command line walkthrough
========================

Runs the four subcommands end to end on a miniature configuration in a
temporary directory: train a teacher, distill two students, re-evaluate a
checkpoint and tabulate the runs.
"""

import json
import tempfile
from pathlib import Path

from calibdistill.cli import main

config = {
    "dataset": {"n_classes": 4, "train_per_class": 150, "test_per_class": 50,
                "image_shape": [3, 16, 16]},
    "teacher": {"width_multiplier": 0.5},
    "student": {"width_multiplier": 0.5},
    "train": {"epochs": 10, "batch_size": 32, "lr0": 0.05},
    "distill": {"cutout_size": 6},
    "seed": 1,
}

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    config["output_dir"] = str(tmp / "runs")
    cfg = tmp / "experiment.json"
    cfg.write_text(json.dumps(config))

    def run(*argv):
        print("\n$ calibdistill " + " ".join(argv))
        return main(list(argv))

    run("train-teacher", str(cfg))
    teacher = tmp / "runs" / "teacher" / "model.ckpt"
    for aug in ("none", "mixup"):
        run("distill", str(cfg), "--teacher", str(teacher), "--augmentation", aug)
    run("evaluate", "--checkpoint", str(tmp / "runs" / "kd_mixup_s1" / "model.ckpt"),
        "--config", str(cfg), "--bins", "10")
    run("compare", "--summaries", str(tmp / "runs" / "*" / "summary.json"),
        "--out", str(tmp / "table.csv"))

    print("\nrun directory:", sorted(p.name for p in (tmp / "runs" / "kd_mixup_s1").iterdir()))
    # configuration errors name the offending field and exit with status 2
    (tmp / "bad.json").write_text(json.dumps({"distill": {"alpha": 2}}))
    print("exit status:", run("train-teacher", str(tmp / "bad.json")))
