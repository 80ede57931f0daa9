"""Command line entry point.

    calibdistill train-teacher CONFIG
    calibdistill distill CONFIG --teacher CKPT [--augmentation A] [--seed S]
    calibdistill evaluate --checkpoint CKPT (--dataset PATH | --config CONFIG) [--bins B]
    calibdistill compare --summaries GLOB [--out CSV]

Each training command writes a run directory holding the resolved config,
the checkpoint, a JSON summary and reliability CSVs. Relative output
directories are resolved against $CALIBDISTILL_OUTPUT_ROOT when it is set.
"""

import argparse
import csv
import glob
import io
import json
import logging
import sys
from pathlib import Path

from .calibration import calibration_report, predict, reliability_export, write_report_json
from .config import load_config, parse_config
from .data import load_cifar_binary
from .errors import CalibDistillError, ConfigurationError, UsageError
from .models import load_checkpoint, save_checkpoint
from .train import distill, train_teacher

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
COMPARE_COLUMNS = ("name", "accuracy", "ece", "oe", "best_ece", "best_oe")
ARTIFACTS = {"config": "config.json", "checkpoint": "model.ckpt", "report": "report.json",
             "bins": "reliability_bins.csv", "samples": "reliability_samples.csv",
             "summary": "summary.json"}


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True)


def _finish_run(run_dir, name, role, config, model, record, test, extra=None):
    """Evaluate on the test set and write every artifact of one run."""
    run_dir.mkdir(parents=True, exist_ok=True)
    preds = predict(model, test)
    report = calibration_report(preds, config.eval.n_bins)
    paths = {k: run_dir / v for k, v in ARTIFACTS.items()}
    paths["config"].write_text(config.to_json())
    save_checkpoint(model, paths["checkpoint"])
    write_report_json(report, paths["report"])
    reliability_export(report, preds, paths["bins"], paths["samples"])
    summary = {
        "name": name,
        "role": role,
        "config": json.loads(config.to_json()),
        "metrics": {
            "best_epoch": record.best_epoch,
            "best_val_accuracy": record.best_val_accuracy,
            "test_accuracy": report.accuracy,
            "ece": report.ece,
            "oe": report.oe,
            "n_bins": report.n_bins,
            "series": record.epochs,
        },
        "artifacts": dict(ARTIFACTS),
        "wall_time": record.wall_time,
        **(extra or {}),
    }
    paths["summary"].write_text(_dump(summary))
    return summary


def run_teacher(config, name="teacher"):
    train, test = config.load_data()
    model, record = train_teacher(config.model_spec("teacher"), train,
                                  config.train_config("teacher"))
    run_dir = config.resolved_output_dir() / name
    return _finish_run(run_dir, name, "teacher", config, model, record, test)


def run_student(config, teacher_path, name=None):
    teacher = load_checkpoint(teacher_path)
    train, test = config.load_data()
    dspec = config.distill_spec()
    if name is None:
        prefix = "kd" if dspec.distiller == "scaled_kd" else "rkd"
        name = f"{prefix}_{dspec.augmentation}_s{config.seed}"
    model, record = distill(teacher, config.model_spec("student"), train, dspec,
                            config.train_config("student"))
    run_dir = config.resolved_output_dir() / name
    return _finish_run(run_dir, name, "student", config, model, record, test,
                       extra={"teacher_checkpoint": str(teacher_path)})


def metrics_text(summary):
    """Canonical text of the deterministic part of a summary."""
    return json.dumps(summary["metrics"], sort_keys=True)


# ------------------------------------------------------------------ commands

def _with_overrides(path, args):
    config = load_config(path)
    data = config.model_dump(mode="json")
    if getattr(args, "augmentation", None) is not None:
        data["distill"]["augmentation"] = args.augmentation
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
        for role in ("teacher", "student"):
            data[role]["seed"] = args.seed
    if getattr(args, "output_dir", None) is not None:
        data["output_dir"] = args.output_dir
    return parse_config(data)


def cmd_train_teacher(args):
    config = _with_overrides(args.config, args)
    summary = run_teacher(config, args.name or "teacher")
    _report_run(summary, config)
    return EXIT_OK


def cmd_distill(args):
    config = _with_overrides(args.config, args)
    if not Path(args.teacher).is_file():
        raise FileNotFoundError(f"teacher checkpoint not found: {args.teacher}")
    summary = run_student(config, args.teacher, args.name)
    _report_run(summary, config)
    return EXIT_OK


def _report_run(summary, config):
    m = summary["metrics"]
    run_dir = config.resolved_output_dir() / summary["name"]
    print(f"{summary['name']}: test accuracy {m['test_accuracy']:.4f}  ECE {m['ece']:.4f}  "
          f"OE {m['oe']:.4f}  (best epoch {m['best_epoch']})  -> {run_dir}")


def cmd_evaluate(args):
    model = load_checkpoint(args.checkpoint)
    if args.dataset:
        dataset = load_cifar_binary(args.dataset, args.variant)
    else:
        _, dataset = load_config(args.config).load_data()
    if tuple(dataset.image_shape) != tuple(model.spec.input_shape):
        raise ConfigurationError(f"dataset images {tuple(dataset.image_shape)} do not fit "
                                 f"model input {model.spec.input_shape}")
    if dataset.labels.max() >= model.spec.n_classes:
        raise ConfigurationError("dataset labels exceed the model's class count")
    preds = predict(model, dataset)
    report = calibration_report(preds, args.bins)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "eval"
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(report, out / "report.json")
    reliability_export(report, preds, out / "reliability_bins.csv",
                       out / "reliability_samples.csv")
    print(f"accuracy {report.accuracy:.4f}  ECE {report.ece:.4f}  OE {report.oe:.4f}  -> {out}")
    return EXIT_OK


def compare_rows(paths):
    """Rows for each readable summary plus a list of (path, problem) skips."""
    rows, skipped = [], []
    for path in paths:
        try:
            s = json.loads(Path(path).read_text())
            m = s["metrics"]
            rows.append({"name": str(s["name"]), "accuracy": float(m["test_accuracy"]),
                         "ece": float(m["ece"]), "oe": float(m["oe"])})
        except (OSError, ValueError, KeyError, TypeError) as err:
            skipped.append((path, f"{type(err).__name__}: {err}"))
    if rows:
        best_ece = min(range(len(rows)), key=lambda i: rows[i]["ece"])
        best_oe = min(range(len(rows)), key=lambda i: rows[i]["oe"])
        for i, row in enumerate(rows):
            row["best_ece"] = "*" if i == best_ece else ""
            row["best_oe"] = "*" if i == best_oe else ""
    return rows, skipped


def format_table(rows):
    lines = [f"{'name':<24} {'accuracy':>9} {'ece':>8} {'oe':>8}"]
    for r in rows:
        lines.append(f"{r['name']:<24} {r['accuracy']:>9.4f} {r['ece']:>7.4f}{r['best_ece'] or ' '}"
                     f" {r['oe']:>7.4f}{r['best_oe'] or ' '}")
    return "\n".join(lines)


def cmd_compare(args):
    paths = sorted(glob.glob(args.summaries, recursive=True))
    if not paths:
        raise UsageError(f"no summaries match {args.summaries!r}")
    rows, skipped = compare_rows(paths)
    for path, why in skipped:
        print(f"warning: skipping {path} ({why})", file=sys.stderr)
    if not rows:
        print("no readable summaries", file=sys.stderr)
        return EXIT_FAILURE
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COMPARE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({**r, "accuracy": repr(r["accuracy"]), "ece": repr(r["ece"]),
                         "oe": repr(r["oe"])})
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(buf.getvalue())
    print(format_table(rows))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="calibdistill", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-teacher", help="train a teacher with cross-entropy")
    p.add_argument("config")
    p.add_argument("--name", help="run directory name (default: teacher)")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill", help="distill a student from a teacher checkpoint")
    p.add_argument("config")
    p.add_argument("--teacher", required=True, help="teacher checkpoint")
    p.add_argument("--augmentation", help="override distill.augmentation")
    p.add_argument("--seed", type=int)
    p.add_argument("--name", help="run directory name (default: kd_<augmentation>_s<seed>)")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("evaluate", help="calibration report of a checkpoint on a test set")
    p.add_argument("--checkpoint", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset", help="CIFAR binary file or directory")
    src.add_argument("--config", help="use the test set described by an experiment config")
    p.add_argument("--variant", default="cifar10", choices=("cifar10", "cifar100_fine"))
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--out", help="output directory (default: <checkpoint dir>/eval)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="table of accuracy / ECE / OE across run summaries")
    p.add_argument("--summaries", required=True, help="glob of summary.json files")
    p.add_argument("--out", help="write the table as CSV")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, UsageError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (CalibDistillError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
