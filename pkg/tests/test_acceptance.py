"""End-to-end acceptance suite.

One test per release criterion; each prints a single "CRITERION n: PASS"
line on success so the run log doubles as a checklist.  The suite trains
several full models and takes on the order of half an hour single-threaded;
run it with ``pytest tests/test_acceptance.py -s``.

Criteria:
  1. numerical-core oracle suite passes in under 2 minutes
  2. representation invariants hold on 1000 random cases each
  3. metric arithmetic reproduces the reference confusion exactly
  4. calibrated end-to-end run clears the accuracy thresholds in time
  5. horizontal padding is at least as good as no padding (median of 3)
  6. more training data is at least as good as less (median of 3)
  7. the whole pipeline is byte-for-byte deterministic
  8. checkpoints round-trip bit-exactly and corrupt files are rejected
"""

from __future__ import annotations

import contextlib
import io
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from scarfcn import bullseye, experiment as ex, model as fcn
from scarfcn import preprocess as pp
from scarfcn.cli import main, EXIT_OK
from scarfcn.cohort import (
    StrainTrace,
    load_cohort,
    scarred_segment_fraction,
)

TESTS_DIR = Path(__file__).parent

GENERATE_SEED = 42
N_RAW = 7000
TRAIN_SEED = 0

# wall-clock seconds of each pipeline stage, filled in by the fixtures
TIMES: dict[str, float] = {}


def _cli(argv) -> int:
    """Run the CLI in-process with stdout swallowed."""
    with contextlib.redirect_stdout(io.StringIO()):
        return main([str(a) for a in argv])


def _passed(n: int, detail: str) -> None:
    print(f"\nCRITERION {n}: PASS — {detail}")


# ---------------------------------------------------------------------------
# shared pipeline fixtures (generate -> preprocess -> train, all at the
# calibrated defaults: seed 42, 7000 raw draws, 50 epochs, batch 32,
# lr 0.001, pos_weight 10, horizontal padding)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def workdir(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def cohort_dir(workdir) -> Path:
    out = workdir / "cohort_a"
    t0 = time.perf_counter()
    assert _cli(["--deterministic", "generate", "--seed", GENERATE_SEED,
                 "--n-raw", N_RAW, "--out", out]) == EXIT_OK
    TIMES["generate"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="module")
def data_dir(workdir, cohort_dir) -> Path:
    out = workdir / "data_a"
    t0 = time.perf_counter()
    assert _cli(["--deterministic", "preprocess", "--in", cohort_dir,
                 "--out", out]) == EXIT_OK
    TIMES["preprocess"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="module")
def dataset(data_dir) -> pp.PreprocessedDataset:
    return pp.load_dataset(data_dir)


@pytest.fixture(scope="module")
def run_a(workdir, data_dir) -> Path:
    out = workdir / "run_a" / "model.fcns"
    t0 = time.perf_counter()
    assert _cli(["--deterministic", "train", "--data", data_dir,
                 "--out", out, "--seed", TRAIN_SEED]) == EXIT_OK
    TIMES["train"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="module")
def ablation_cells(dataset):
    """3-seed cells: both padding modes at scale 0.5, horizontal at 1.0."""
    t0 = time.perf_counter()
    cells = ex.run_ablation(
        dataset, scales=[0.5], padding_modes=["horizontal", "none"],
        seeds=(0, 1, 2), base_cfg=ex.TrainConfig())
    cells += ex.run_ablation(
        dataset, scales=[1.0], padding_modes=["horizontal"],
        seeds=(0, 1, 2), base_cfg=ex.TrainConfig())
    TIMES["ablation"] = time.perf_counter() - t0
    return cells


# ---------------------------------------------------------------------------
# criterion 1: numerical-core oracle suite
# ---------------------------------------------------------------------------

def test_criterion_1_numerical_core_oracles():
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
         str(TESTS_DIR / "test_nn.py"), str(TESTS_DIR / "test_model.py")],
        capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert elapsed < 120.0, f"oracle suite took {elapsed:.1f}s (limit 120s)"
    _passed(1, f"conv/transpose/backward oracle suite green in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: representation invariants on 1000 random cases
# ---------------------------------------------------------------------------

def test_criterion_2_representation_suite():
    rng = np.random.default_rng(20)

    # grid bijection on 1000 random (18, T) tensors
    for _ in range(1000):
        t = int(rng.integers(1, 40))
        arr = rng.normal(size=(18, t))
        grid = bullseye.to_grid(arr)
        assert grid.shape == (t, 3, 6)
        np.testing.assert_array_equal(bullseye.from_grid(grid), arr)

    # circular horizontal padding for p in {0, 1, 2}
    for _ in range(200):
        grid = rng.normal(size=(int(rng.integers(1, 20)), 3, 6))
        for p in (0, 1, 2):
            padded = bullseye.pad_horizontal(grid, p)
            assert padded.shape == (grid.shape[0], 3, 6 + 2 * p)
            np.testing.assert_array_equal(padded[:, :, p:p + 6], grid)
            if p:
                np.testing.assert_array_equal(padded[:, :, :p], grid[:, :, -p:])
                np.testing.assert_array_equal(padded[:, :, -p:], grid[:, :, :p])

    # resampling invariants on 1000 random traces
    cfg = pp.ResampleConfig()
    s = cfg.systole_points
    for _ in range(1000):
        n = int(rng.integers(16, 400))
        samples = rng.normal(size=n)
        samples[0] = samples[-1] = 0.0
        avc = int(rng.integers(1, n - 1))
        out = pp.resample_trace(StrainTrace(samples, avc), cfg)
        assert out.shape == (cfg.n_points,)
        assert out[0] == samples[0]
        assert out[s - 1] == samples[avc]          # AVC pinned at index S-1
        assert out[-1] == samples[-1]
        assert samples.min() - 1e-12 <= out.min()  # interp never extrapolates
        assert out.max() <= samples.max() + 1e-12

    # analytic piecewise-linear case: exact to 1e-12
    n, avc, depth = 100, 37, -18.0
    idx = np.arange(n, dtype=np.float64)
    tent = np.where(idx <= avc, depth * idx / avc,
                    depth * (n - 1 - idx) / (n - 1 - avc))
    out = pp.resample_trace(StrainTrace(tent, avc), cfg)
    sys_grid = np.linspace(0.0, avc, s)
    dia_grid = np.linspace(avc, n - 1, cfg.n_points - s + 1)[1:]
    expect = np.concatenate([depth * sys_grid / avc,
                             depth * (n - 1 - dia_grid) / (n - 1 - avc)])
    np.testing.assert_allclose(out, expect, atol=1e-12, rtol=0)

    _passed(2, "grid bijection, wrap padding and resampling invariants "
               "hold on 1000 random cases each; ramp exact to 1e-12")


# ---------------------------------------------------------------------------
# criterion 3: exact metric arithmetic
# ---------------------------------------------------------------------------

def test_criterion_3_metric_arithmetic_exact():
    cm = ex.ConfusionMatrix(tp=489, fn=41, fp=73, tn=4887)
    assert (cm.tp, cm.fn, cm.fp, cm.tn) == (489, 41, 73, 4887)  # zero tolerance
    assert cm.total == 5490
    assert cm.tp + cm.tn == 5376  # correctly classified segments
    m = ex.compute_metrics("segment", cm)
    assert round(m.accuracy, 4) == 0.9792
    assert round(m.sensitivity, 4) == 0.9226
    assert round(m.specificity, 4) == 0.9853
    assert round(m.balanced_accuracy, 4) == 0.9540

    patient = ex.compute_metrics(
        "patient", ex.ConfusionMatrix(tp=151, fn=5, fp=0, tn=0))
    assert round(patient.sensitivity, 3) == 0.968  # 151 of 156 detected

    _passed(3, "segment confusion (489/41/73/4887) -> "
               "0.9792/0.9226/0.9853/0.9540 and patient 151/156 -> 0.968")


# ---------------------------------------------------------------------------
# criterion 4: calibrated end-to-end run
# ---------------------------------------------------------------------------

def test_criterion_4_end_to_end(cohort_dir, dataset, run_a):
    cohort = load_cohort(cohort_dir)
    n = len(cohort.records)
    assert 2400 <= n <= 3600, f"post-filter cohort size {n} not ~3000"
    frac = scarred_segment_fraction(cohort)
    assert 0.08 <= frac <= 0.12, f"scarred-segment fraction {frac:.4f}"
    assert dataset.strain.shape == (n, 18, 500)

    spec = ex.SplitSpec(seed=TRAIN_SEED)
    train_ids, val_ids, test_ids = ex.stratified_split(dataset.labels, spec)
    for ids, frac_expect in ((train_ids, 0.72), (val_ids, 0.18),
                             (test_ids, 0.10)):
        assert abs(len(ids) / n - frac_expect) < 0.02, \
            f"split sizes {len(train_ids)}/{len(val_ids)}/{len(test_ids)}"

    best = fcn.load_checkpoint(Path(str(run_a) + ".best"))
    metrics = ex.evaluate(best, dataset, test_ids)
    seg_balacc = metrics["segment"].balanced_accuracy
    pat_sens = metrics["patient"].sensitivity
    assert seg_balacc >= 0.90, f"segment balanced accuracy {seg_balacc:.4f}"
    assert pat_sens >= 0.90, f"patient sensitivity {pat_sens:.4f}"

    elapsed = TIMES["generate"] + TIMES["preprocess"] + TIMES["train"]
    assert elapsed < 1800.0, f"pipeline took {elapsed:.0f}s (limit 1800s)"

    _passed(4, f"{n} patients, scar fraction {frac:.3f}, split "
               f"{len(train_ids)}/{len(val_ids)}/{len(test_ids)}, test "
               f"segment balacc {seg_balacc:.4f}, patient sens "
               f"{pat_sens:.4f}, pipeline {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criteria 5 and 6: padding and data-scale ablations
# ---------------------------------------------------------------------------

def test_criterion_5_padding_direction(ablation_cells):
    horiz = ex.median_metric(ablation_cells, 0.5, "horizontal",
                             "segment", "accuracy")
    none = ex.median_metric(ablation_cells, 0.5, "none",
                            "segment", "accuracy")
    assert horiz >= none, \
        f"median segment accuracy horizontal {horiz:.4f} < none {none:.4f}"
    _passed(5, f"scale 0.5 median segment accuracy: horizontal "
               f"{horiz:.4f} >= none {none:.4f}")


def test_criterion_6_scale_monotonicity(ablation_cells):
    full = ex.median_metric(ablation_cells, 1.0, "horizontal",
                            "segment", "balanced_accuracy")
    half = ex.median_metric(ablation_cells, 0.5, "horizontal",
                            "segment", "balanced_accuracy")
    assert full >= half, \
        f"median segment balacc at scale 1.0 {full:.4f} < 0.5 {half:.4f}"
    _passed(6, f"median segment balanced accuracy: scale 1.0 "
               f"{full:.4f} >= scale 0.5 {half:.4f}")


# ---------------------------------------------------------------------------
# criterion 7: byte-level determinism of the whole pipeline
# ---------------------------------------------------------------------------

def test_criterion_7_determinism(workdir, cohort_dir, data_dir, dataset, run_a):
    cohort_b = workdir / "cohort_b"
    data_b = workdir / "data_b"
    run_b = workdir / "run_b" / "model.fcns"
    assert _cli(["--deterministic", "generate", "--seed", GENERATE_SEED,
                 "--n-raw", N_RAW, "--out", cohort_b]) == EXIT_OK
    assert _cli(["--deterministic", "preprocess", "--in", cohort_b,
                 "--out", data_b]) == EXIT_OK
    assert _cli(["--deterministic", "train", "--data", data_b,
                 "--out", run_b, "--seed", TRAIN_SEED]) == EXIT_OK

    for name in ("manifest.json", "patients.jsonl"):
        assert (cohort_b / name).read_bytes() == \
            (cohort_dir / name).read_bytes(), f"cohort {name} differs"
    for name in ("manifest.json", "strain.bin"):
        assert (data_b / name).read_bytes() == \
            (data_dir / name).read_bytes(), f"dataset {name} differs"
    for suffix in ("", ".best", ".log.csv"):
        assert Path(str(run_b) + suffix).read_bytes() == \
            Path(str(run_a) + suffix).read_bytes(), \
            f"model{suffix or ' checkpoint'} differs"

    spec = ex.SplitSpec(seed=TRAIN_SEED)
    _, _, test_ids = ex.stratified_split(dataset.labels, spec)
    report_a = ex.format_report(
        ex.evaluate(fcn.load_checkpoint(run_a), dataset, test_ids))
    report_b = ex.format_report(
        ex.evaluate(fcn.load_checkpoint(run_b), dataset, test_ids))
    assert report_a == report_b

    _passed(7, "cohort files, preprocessed tensors, checkpoints, logs and "
               "reports byte-identical across two identical-seed runs")


# ---------------------------------------------------------------------------
# criterion 8: checkpoint round trip and rejection of damaged files
# ---------------------------------------------------------------------------

def test_criterion_8_checkpoint_integrity(tmp_path, run_a):
    params = fcn.load_checkpoint(run_a)
    resaved = tmp_path / "resaved.fcns"
    fcn.save_checkpoint(params, resaved, created_unix=0)
    reloaded = fcn.load_checkpoint(resaved)
    for a, b in zip(params.layers, reloaded.layers):
        assert a.weights.tobytes() == b.weights.tobytes()
        assert a.bias.tobytes() == b.bias.tobytes()
    again = tmp_path / "again.fcns"
    fcn.save_checkpoint(reloaded, again, created_unix=0)
    assert again.read_bytes() == resaved.read_bytes()

    blob = resaved.read_bytes()
    damaged = {
        "truncated": blob[: len(blob) // 2],
        "bad magic": b"XXXX" + blob[4:],
        "corrupt header": blob[:16] + b"\x00" + blob[17:],
        "short payload": blob[:-8],
    }
    for kind, data in damaged.items():
        bad = tmp_path / "bad.fcns"
        bad.write_bytes(data)
        with pytest.raises(fcn.CheckpointError):
            fcn.load_checkpoint(bad)

    _passed(8, "round trip bit-exact; truncated, mangled-magic, "
               "corrupt-header and short-payload files all rejected")
