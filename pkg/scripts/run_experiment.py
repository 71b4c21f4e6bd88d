#!/usr/bin/env python3
"""Run the full scar-detection experiment end to end.

Generates the virtual cohort, resamples it, trains the FCN at full
scale, evaluates on the held-out test split, and renders one bull's-eye
per example patient.  Everything lands under --workdir.

    python3 scripts/run_experiment.py --workdir runs/exp1
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from scarfcn import experiment as ex, model as fcn
from scarfcn import preprocess as pp
from scarfcn.cli import main as cli_main


def run(argv) -> None:
    code = cli_main([str(a) for a in argv])
    if code != 0:
        sys.exit(code)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", type=Path, default=Path("runs/experiment"))
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--n-raw", type=int, default=7000)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--train-seed", type=int, default=0)
    args = ap.parse_args()

    wd = args.workdir
    cohort, data = wd / "cohort", wd / "data"
    model = wd / "model.fcns"

    run(["--deterministic", "generate", "--seed", args.seed,
         "--n-raw", args.n_raw, "--out", cohort])
    run(["--deterministic", "preprocess", "--in", cohort, "--out", data])
    run(["--deterministic", "train", "--data", data, "--out", model,
         "--epochs", args.epochs, "--seed", args.train_seed])

    dataset = pp.load_dataset(data)
    spec = ex.SplitSpec(seed=args.train_seed)
    _, _, test_ids = ex.stratified_split(dataset.labels, spec)
    best = fcn.load_checkpoint(Path(str(model) + ".best"))
    metrics = ex.evaluate(best, dataset, test_ids)
    report = ex.format_report(metrics, title="test-split metrics (best checkpoint):")
    print(report)
    (wd / "test_report.txt").write_text(report + "\n")
    (wd / "test_metrics.json").write_text(
        json.dumps(ex.metrics_to_dict(metrics), indent=2, sort_keys=True) + "\n")

    # render one scarred and one healthy example from the test split
    scarred = [i for i in test_ids if dataset.labels[i].any()]
    healthy = [i for i in test_ids if not dataset.labels[i].any()]
    for name, pool in (("scarred", scarred), ("healthy", healthy)):
        if pool:
            pid = int(dataset.patient_ids[pool[0]])
            run(["render", "--model", str(model) + ".best", "--data", data,
                 "--patient", pid, "--out", wd / f"example_{name}.svg"])


if __name__ == "__main__":
    main()
