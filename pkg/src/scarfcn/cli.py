"""Command-line entry point for the scar-detection pipeline.

Subcommands: generate, preprocess, train, eval, render.  Exit codes:
0 success, 1 runtime failure, 2 usage/configuration error.  Every
command that writes a directory drops a resolved-config JSON next to
its outputs so the run can be reproduced.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import cohort as cohort_mod
from . import experiment
from . import model as fcn
from . import nn
from . import preprocess as pp
from . import render as render_mod
from .sobol import SobolConfigError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _write_resolved_config(out_dir: Path, command: str, args: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.json").write_text(
        json.dumps({"command": command, "args": args},
                   sort_keys=True, separators=(",", ":")) + "\n")


def cmd_generate(args) -> int:
    cfg = cohort_mod.CohortConfig(p_mi=args.p_mi, noise_sigma=args.noise_sigma)
    try:
        cohort = cohort_mod.generate_cohort(args.seed, args.n_raw, cfg)
    except cohort_mod.DomainError as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    except cohort_mod.GenerationError as exc:
        raise CliError(str(exc), EXIT_RUNTIME)
    out = Path(args.out)
    cohort_mod.save_cohort(cohort, out)
    _write_resolved_config(out, "generate", {
        "seed": args.seed, "n_raw": args.n_raw, "p_mi": args.p_mi,
        "noise_sigma": args.noise_sigma, "config": cfg.to_dict()})
    frac = cohort_mod.scarred_segment_fraction(cohort)
    print(f"generated {len(cohort.records)} patients "
          f"(from {args.n_raw} raw parameter sets)")
    print(f"scarred segment fraction: {frac:.4f}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    try:
        cfg = pp.ResampleConfig(n_points=args.points,
                                systole_fraction=args.systole_frac)
    except pp.ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    try:
        cohort = cohort_mod.load_cohort(args.indir)
        src_hash = cohort_mod.cohort_hash(args.indir)
        ds = pp.preprocess_cohort(cohort, cfg, source_hash=src_hash)
    except FileNotFoundError as exc:
        raise CliError(f"cohort directory unreadable: {exc}", EXIT_CONFIG)
    except (pp.TraceError, ValueError) as exc:
        raise CliError(str(exc), EXIT_RUNTIME)
    out = Path(args.out)
    pp.save_dataset(ds, out)
    _write_resolved_config(out, "preprocess", {
        "in": str(args.indir), "points": args.points,
        "systole_frac": args.systole_frac})
    print(f"preprocessed {ds.strain.shape[0]} patients to "
          f"{ds.strain.shape[2]} points per trace")
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        dataset = pp.load_dataset(args.data)
    except (FileNotFoundError, ValueError) as exc:
        raise CliError(f"dataset unreadable: {exc}", EXIT_CONFIG)
    cfg = experiment.TrainConfig(
        epochs=args.epochs, batch_size=args.batch, lr=args.lr,
        pos_weight=args.pos_weight, padding_mode=args.padding,
        optimizer=args.optimizer, seed=args.seed)
    spec = experiment.SplitSpec(scale=args.scale, seed=args.seed)
    train_ids, val_ids, test_ids = experiment.stratified_split(
        dataset.labels, spec, warn=lambda m: print(f"warning: {m}", file=sys.stderr))
    print(f"split: {len(train_ids)} train / {len(val_ids)} val / "
          f"{len(test_ids)} test")
    try:
        result = experiment.train(
            dataset, train_ids, val_ids, cfg,
            progress=lambda e: print(
                f"epoch {e.epoch:3d}  train_loss {e.train_loss:.5f}  "
                f"val_loss {e.val_loss:.5f}  "
                f"val_balacc_seg {e.val_balanced_accuracy_segment:.4f}"))
    except nn.TrainingError as exc:
        raise CliError(str(exc), EXIT_RUNTIME)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    created = 0 if args.deterministic else None
    fcn.save_checkpoint(result.final_params, out, created_unix=created)
    best_path = out.with_suffix(out.suffix + ".best")
    fcn.save_checkpoint(result.best_params, best_path, created_unix=created)
    log_path = out.with_suffix(out.suffix + ".log.csv")
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss",
                         "val_balanced_accuracy_segment"])
        for e in result.log:
            writer.writerow([e.epoch, repr(e.train_loss), repr(e.val_loss),
                             repr(e.val_balanced_accuracy_segment)])
    _write_resolved_config(out.parent, "train", {
        "data": str(args.data), "out": str(args.out), "scale": args.scale,
        "seed": args.seed, "deterministic": args.deterministic,
        "train_config": cfg.to_dict()})
    val_metrics = experiment.evaluate(result.final_params, dataset, val_ids)
    print(experiment.format_report(val_metrics, title="validation metrics:"))
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        params = fcn.load_checkpoint(args.model)
    except (FileNotFoundError, fcn.CheckpointError) as exc:
        raise CliError(f"checkpoint unreadable: {exc}", EXIT_CONFIG)
    try:
        dataset = pp.load_dataset(args.data)
    except (FileNotFoundError, ValueError) as exc:
        raise CliError(f"dataset unreadable: {exc}", EXIT_CONFIG)
    ids = None
    if args.split != "all":
        spec = experiment.SplitSpec(scale=args.scale, seed=args.seed)
        train_ids, val_ids, test_ids = experiment.stratified_split(
            dataset.labels, spec)
        ids = {"train": train_ids, "val": val_ids, "test": test_ids}[args.split]
    metrics = experiment.evaluate(params, dataset, ids)
    if args.level != "all":
        wanted = {"segment": ["segment"],
                  "territory": ["LAD", "LCx", "RCA"],
                  "patient": ["patient"]}[args.level]
        metrics = {k: v for k, v in metrics.items() if k in wanted}
    if args.format == "json":
        print(json.dumps(experiment.metrics_to_dict(metrics), indent=2,
                         sort_keys=True))
    else:
        full = {lvl: metrics[lvl] for lvl in experiment.LEVELS if lvl in metrics}
        if len(full) == len(experiment.LEVELS):
            print(experiment.format_report(full))
        else:
            for lvl, m in metrics.items():
                cm = m.confusion
                print(f"{lvl}: acc {m.accuracy:.4f} balacc "
                      f"{m.balanced_accuracy:.4f} sens {m.sensitivity:.4f} "
                      f"spec {m.specificity:.4f} "
                      f"(tp {cm.tp} fp {cm.fp} tn {cm.tn} fn {cm.fn})")
    return EXIT_OK


def cmd_render(args) -> int:
    if args.input:
        try:
            obj = json.loads(Path(args.input).read_text())
        except (FileNotFoundError, json.JSONDecodeError) as exc:
            raise CliError(f"predictions file unreadable: {exc}", EXIT_CONFIG)
        predicted = obj.get("predicted")
        scores = obj.get("scores")
    else:
        try:
            params = fcn.load_checkpoint(args.model)
            dataset = pp.load_dataset(args.data)
        except (FileNotFoundError, fcn.CheckpointError, ValueError) as exc:
            raise CliError(str(exc), EXIT_CONFIG)
        idx = int(np.flatnonzero(dataset.patient_ids == args.patient)[0]) \
            if args.patient in dataset.patient_ids else None
        if idx is None:
            raise CliError(f"patient id {args.patient} not in dataset",
                           EXIT_CONFIG)
        x = experiment._inputs_for(dataset, params.padding_mode,
                                   np.asarray([idx]))[0]
        pred = fcn.predict_segments(params, x)
        predicted, scores = pred.predicted, pred.scores
    try:
        svg = render_mod.render_bullseye(predicted, scores)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG)
    Path(args.out).write_text(svg)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scarfcn",
        description="Multi-level myocardial scar detection from strain traces")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker parallelism cap (compute is numpy-bound)")
    parser.add_argument("--deterministic", action="store_true",
                        help="force bit-reproducible outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a virtual cohort")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n-raw", type=int, default=7000)
    p.add_argument("--out", required=True)
    p.add_argument("--p-mi", type=float, default=0.51)
    p.add_argument("--noise-sigma", type=float, default=2.0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("preprocess", help="resample a cohort to fixed length")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--points", type=int, default=500)
    p.add_argument("--systole-frac", type=float, default=0.35)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the scar-detection FCN")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--padding", choices=fcn.PADDING_MODES, default="horizontal")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--pos-weight", type=float, default=10.0)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("all", "train", "val", "test"),
                   default="all")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", choices=("all", "segment", "territory", "patient"),
                   default="all")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render predictions as an SVG bull's eye")
    p.add_argument("--input", help="predictions.json with 18 values")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--patient", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "render" and not args.input and not (args.model and args.data):
        print("render needs either --input or --model and --data", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (SobolConfigError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
