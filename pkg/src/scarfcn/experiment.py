"""Experiment harness: stratified splits, training and multi-level metrics.

Patients are split 90/10 into development and test sets, stratified on
the number of scarred segments (counts >= 6 pooled into one stratum, and
strata smaller than 3 merged into a neighbour); the development set is
split 80/20 into training and validation.  The model is trained with
weighted BCE on the two-channel logit grid and evaluated at segment,
coronary-territory and patient level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import model as fcn
from . import nn
from .bullseye import to_grid, from_grid, pad_horizontal
from .preprocess import PreprocessedDataset
from .territory import TERRITORIES, TERRITORY_NAMES

STRATUM_CAP = 6
LEVELS = ("patient", "LAD", "LCx", "RCA", "segment")


@dataclass(frozen=True)
class SplitSpec:
    dev_fraction: float = 0.9
    test_fraction: float = 0.1
    train_fraction_of_dev: float = 0.8
    val_fraction_of_dev: float = 0.2
    scale: float = 1.0
    seed: int = 0


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 0.001
    pos_weight: float = 10.0
    padding_mode: str = "horizontal"
    optimizer: str = "adam"
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def add(self, predicted: int, label: int) -> None:
        if label and predicted:
            self.tp += 1
        elif label and not predicted:
            self.fn += 1
        elif predicted:
            self.fp += 1
        else:
            self.tn += 1


@dataclass
class LevelMetrics:
    level: str
    confusion: ConfusionMatrix
    accuracy: float
    balanced_accuracy: float
    sensitivity: float
    specificity: float


def compute_metrics(level: str, cm: ConfusionMatrix) -> LevelMetrics:
    """Derive the metric set; recall of an empty class is 1.0 by convention."""
    total = cm.total
    accuracy = (cm.tp + cm.tn) / total if total else 1.0
    sensitivity = cm.tp / (cm.tp + cm.fn) if (cm.tp + cm.fn) else 1.0
    specificity = cm.tn / (cm.tn + cm.fp) if (cm.tn + cm.fp) else 1.0
    return LevelMetrics(
        level=level,
        confusion=cm,
        accuracy=accuracy,
        balanced_accuracy=0.5 * (sensitivity + specificity),
        sensitivity=sensitivity,
        specificity=specificity,
    )


def aggregate_predictions(predicted: np.ndarray, labels: np.ndarray,
                          territories=TERRITORIES) -> dict[str, tuple[int, int]]:
    """OR-aggregate one patient's 18 segment decisions to territory/patient level.

    Returns {level: (predicted, label)} for the patient and each territory.
    """
    predicted = np.asarray(predicted).astype(bool)
    labels = np.asarray(labels).astype(bool)
    if predicted.shape != (18,) or labels.shape != (18,):
        raise ValueError("expected 18 predictions and 18 labels")
    out = {"patient": (int(predicted.any()), int(labels.any()))}
    for name, segs in territories.items():
        idx = [s - 1 for s in segs]
        out[name] = (int(predicted[idx].any()), int(labels[idx].any()))
    return out


def metrics_from_logits(logits: np.ndarray,
                        labels: np.ndarray) -> dict[str, LevelMetrics]:
    """Multi-level metrics from (N, 2, 3, 6) logits and (N, 18) labels."""
    cms = {level: ConfusionMatrix() for level in LEVELS}
    for k in range(logits.shape[0]):
        scores_grid = (logits[k, 0] - logits[k, 1])[None]
        scores = from_grid(scores_grid)[:, 0]
        predicted = (scores > 0.0).astype(np.int64)
        for p, l in zip(predicted, labels[k]):
            cms["segment"].add(int(p), int(l))
        for level, (p, l) in aggregate_predictions(predicted, labels[k]).items():
            cms[level].add(p, l)
    return {level: compute_metrics(level, cm) for level, cm in cms.items()}


def evaluate(params: fcn.FcnParameters, dataset: PreprocessedDataset,
             ids: np.ndarray | None = None) -> dict[str, LevelMetrics]:
    """Multi-level metrics of a model on (a subset of) a dataset."""
    idx = np.arange(len(dataset.patient_ids)) if ids is None else np.asarray(ids)
    x = _inputs_for(dataset, params.padding_mode, idx)
    logits = fcn.forward(params, x)
    return metrics_from_logits(logits, dataset.labels[idx])


# ---------------------------------------------------------------------------
# stratified split
# ---------------------------------------------------------------------------

def stratified_split(labels: np.ndarray, spec: SplitSpec,
                     warn=lambda msg: None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(train, val, test) index arrays, stratified on scarred-segment count."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n == 0:
        raise ValueError("empty cohort")
    keys = np.minimum(labels.sum(axis=1), STRATUM_CAP)
    strata: list[list[int]] = []
    for key in sorted(set(keys.tolist())):
        members = np.flatnonzero(keys == key).tolist()
        if strata and len(members) < 3:
            warn(f"stratum {key} has {len(members)} patients; merged into neighbour")
            strata[-1].extend(members)
        else:
            strata.append(members)
    # a tiny first stratum can only merge forward
    if len(strata) > 1 and len(strata[0]) < 3:
        warn(f"first stratum has {len(strata[0])} patients; merged into neighbour")
        strata[1] = strata[0] + strata[1]
        strata.pop(0)
    rng = np.random.default_rng(spec.seed)
    train, val, test = [], [], []
    for members in strata:
        members = np.asarray(members)
        rng.shuffle(members)
        n_test = int(round(spec.test_fraction * len(members)))
        test.extend(members[:n_test])
        dev = members[n_test:]
        n_val = int(round(spec.val_fraction_of_dev * len(dev)))
        val.extend(dev[:n_val])
        train.extend(dev[n_val:])
    train, val, test = (np.sort(np.asarray(x, dtype=np.int64)) for x in (train, val, test))
    if spec.scale < 1.0:
        # scale subsampling applies to train and val only
        train = _subsample(train, spec.scale, rng)
        val = _subsample(val, spec.scale, rng)
    return train, val, test


def _subsample(ids: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    k = int(round(scale * len(ids)))
    return np.sort(rng.choice(ids, size=k, replace=False))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _inputs_for(dataset: PreprocessedDataset, padding_mode: str,
                idx: np.ndarray) -> np.ndarray:
    """(N, T, 3, 6|8) input tensors for the given patients."""
    grids = np.stack([to_grid(dataset.strain[i]) for i in idx])
    if padding_mode == "horizontal":
        return np.stack([pad_horizontal(g, 1) for g in grids])
    return grids


def _target_grids(dataset: PreprocessedDataset, idx: np.ndarray) -> np.ndarray:
    """(N, 2, 3, 6) one-hot label grids: channel 0 scar, channel 1 no-scar."""
    out = np.empty((len(idx), 2, 3, 6))
    for k, i in enumerate(idx):
        g = to_grid(dataset.labels[i].astype(np.float64)[:, None])  # (1, 3, 6)
        out[k, 0] = g[0]
        out[k, 1] = 1.0 - g[0]
    return out


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_balanced_accuracy_segment: float


@dataclass
class TrainResult:
    final_params: fcn.FcnParameters
    best_params: fcn.FcnParameters
    log: list[EpochLog]


def train(dataset: PreprocessedDataset, train_ids: np.ndarray,
          val_ids: np.ndarray, cfg: TrainConfig,
          progress=lambda entry: None) -> TrainResult:
    params = fcn.init_params(cfg.padding_mode, seed=cfg.seed)
    params.train_config = cfg.to_dict()
    x_train = _inputs_for(dataset, cfg.padding_mode, train_ids)
    y_train = _target_grids(dataset, train_ids)
    x_val = _inputs_for(dataset, cfg.padding_mode, val_ids)
    y_val = _target_grids(dataset, val_ids)
    rng = np.random.default_rng(cfg.seed)
    states = [(nn.AdamState.zeros_like(l.weights), nn.AdamState.zeros_like(l.bias))
              for l in params.layers]
    t = 0
    log: list[EpochLog] = []
    best = (np.inf, params.copy())
    n = len(train_ids)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            xb, yb = x_train[batch], y_train[batch]
            logits, cache = fcn.forward(params, xb, with_cache=True)
            loss, dlogits = nn.weighted_bce_logits(logits, yb, cfg.pos_weight)
            if not np.isfinite(loss):
                raise nn.TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}")
            grads = fcn.backward(params, cache, dlogits)
            t += 1
            for i, (layer, bundle) in enumerate(zip(params.layers, grads)):
                name = f"layer{i + 1}"
                if cfg.optimizer == "adam":
                    layer.weights = nn.adam_step(
                        layer.weights, bundle.d_weights, states[i][0],
                        cfg.lr, t, name=f"{name}.weights")
                    layer.bias = nn.adam_step(
                        layer.bias, bundle.d_bias, states[i][1],
                        cfg.lr, t, name=f"{name}.bias")
                else:
                    layer.weights = nn.sgd_step(layer.weights, bundle.d_weights,
                                                cfg.lr, name=f"{name}.weights")
                    layer.bias = nn.sgd_step(layer.bias, bundle.d_bias,
                                             cfg.lr, name=f"{name}.bias")
            epoch_loss += loss * len(batch)
        val_logits = fcn.forward(params, x_val)
        val_loss, _ = nn.weighted_bce_logits(val_logits, y_val, cfg.pos_weight)
        val_metrics = metrics_from_logits(val_logits, dataset.labels[val_ids])
        entry = EpochLog(
            epoch=epoch,
            train_loss=epoch_loss / n,
            val_loss=val_loss,
            val_balanced_accuracy_segment=val_metrics["segment"].balanced_accuracy,
        )
        log.append(entry)
        progress(entry)
        if val_loss < best[0]:
            best = (val_loss, params.copy())
    return TrainResult(final_params=params, best_params=best[1], log=log)


# ---------------------------------------------------------------------------
# ablation grid
# ---------------------------------------------------------------------------

@dataclass
class AblationCell:
    scale: float
    padding_mode: str
    seed: int
    metrics: dict[str, LevelMetrics]


def run_ablation(dataset: PreprocessedDataset, scales, padding_modes,
                 seeds=(0, 1, 2), base_cfg: TrainConfig | None = None,
                 split_seed: int = 0,
                 progress=lambda msg: None) -> list[AblationCell]:
    """Train one model per (scale, padding, seed) cell and evaluate on test."""
    cells: list[AblationCell] = []
    base = base_cfg or TrainConfig()
    for scale in scales:
        for mode in padding_modes:
            for seed in seeds:
                progress(f"ablation cell scale={scale} padding={mode} seed={seed}")
                spec = SplitSpec(scale=scale, seed=split_seed)
                train_ids, val_ids, test_ids = stratified_split(dataset.labels, spec)
                cfg = TrainConfig(**{**base.to_dict(),
                                     "padding_mode": mode, "seed": seed})
                result = train(dataset, train_ids, val_ids, cfg)
                metrics = evaluate(result.final_params, dataset, test_ids)
                cells.append(AblationCell(scale, mode, seed, metrics))
    return cells


def median_metric(cells, scale, padding_mode, level, attr) -> float:
    vals = [getattr(c.metrics[level], attr) for c in cells
            if c.scale == scale and c.padding_mode == padding_mode]
    return float(np.median(vals))


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def metrics_to_dict(metrics: dict[str, LevelMetrics]) -> dict:
    return {
        level: {
            "confusion": asdict(m.confusion),
            "accuracy": m.accuracy,
            "balanced_accuracy": m.balanced_accuracy,
            "sensitivity": m.sensitivity,
            "specificity": m.specificity,
        }
        for level, m in metrics.items()
    }


def format_report(metrics: dict[str, LevelMetrics], title: str = "") -> str:
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'Level':<10} {'Accuracy':>9} {'BalAcc':>7} "
                 f"{'Sens':>6} {'Spec':>6}   {'tp':>5} {'fp':>5} {'tn':>6} {'fn':>5}")
    for level in LEVELS:
        m = metrics[level]
        cm = m.confusion
        lines.append(
            f"{level:<10} {m.accuracy:>9.4f} {m.balanced_accuracy:>7.4f} "
            f"{m.sensitivity:>6.4f} {m.specificity:>6.4f}   "
            f"{cm.tp:>5} {cm.fp:>5} {cm.tn:>6} {cm.fn:>5}")
    lines.append("note: recall of an empty class is 1.0 by convention")
    return "\n".join(lines)


def ablation_report(cells: list[AblationCell]) -> dict:
    grid = {}
    for c in cells:
        key = f"scale={c.scale},padding={c.padding_mode}"
        grid.setdefault(key, []).append(
            {"seed": c.seed, "metrics": metrics_to_dict(c.metrics)})
    medians = {}
    scales = sorted({c.scale for c in cells})
    modes = sorted({c.padding_mode for c in cells})
    for scale in scales:
        for mode in modes:
            if any(c.scale == scale and c.padding_mode == mode for c in cells):
                medians[f"scale={scale},padding={mode}"] = {
                    level: {
                        attr: median_metric(cells, scale, mode, level, attr)
                        for attr in ("accuracy", "balanced_accuracy",
                                     "sensitivity", "specificity")
                    }
                    for level in LEVELS
                }
    return {"cells": grid, "medians": medians,
            "reference_points": {
                "segments_correct_of_5490_at_scale_0.5":
                    {"no_padding": 5330, "horizontal": 5355}}}
