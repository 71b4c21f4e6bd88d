"""Phase-aware temporal resampling of strain traces to a fixed length.

Systole (start to aortic valve closure) and diastole (AVC to cycle end)
are linearly resampled onto separate uniform grids and concatenated, so
the AVC landmark lands at the same output index for every patient
regardless of heart rate.  The duplicated AVC sample at the merge is
dropped from the diastolic half, never averaged.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .cohort import Cohort, StrainTrace, cohort_hash, N_SEGMENTS

FORMAT_VERSION = 1


class ConfigError(ValueError):
    pass


class TraceError(ValueError):
    """A trace violated its invariants during preprocessing."""


@dataclass(frozen=True)
class ResampleConfig:
    n_points: int = 500
    systole_fraction: float = 0.35

    def __post_init__(self):
        if not 8 <= self.n_points <= 4096:
            raise ConfigError(f"n_points {self.n_points} outside 8..4096")
        if not 0.0 < self.systole_fraction < 1.0:
            raise ConfigError("systole_fraction must be in (0, 1)")
        s = self.systole_points
        if not 2 <= s <= self.n_points - 2:
            raise ConfigError(
                f"systole point count {s} outside 2..{self.n_points - 2}"
            )

    @property
    def systole_points(self) -> int:
        return int(round(self.n_points * self.systole_fraction))


def resample_trace(trace: StrainTrace, cfg: ResampleConfig = ResampleConfig()) -> np.ndarray:
    """Resample one trace to cfg.n_points with AVC pinned at index S-1."""
    trace.validate()
    samples = np.asarray(trace.samples, dtype=np.float64)
    n = len(samples)
    avc = trace.avc_index
    s = cfg.systole_points
    idx = np.arange(n, dtype=np.float64)
    sys_grid = np.linspace(0.0, avc, s)
    dia_grid = np.linspace(avc, n - 1, cfg.n_points - s + 1)
    systole = np.interp(sys_grid, idx, samples)
    diastole = np.interp(dia_grid, idx, samples)
    out = np.concatenate([systole, diastole[1:]])
    # pin landmarks exactly (interp is exact at grid nodes, but be explicit)
    out[0] = samples[0]
    out[s - 1] = samples[avc]
    out[-1] = samples[-1]
    return out


@dataclass
class PreprocessedDataset:
    """Fixed-length strain tensors plus the labels carried along for training."""

    strain: np.ndarray  # (n_patients, 18, n_points)
    labels: np.ndarray  # (n_patients, 18) binary
    patient_ids: np.ndarray
    config: ResampleConfig
    source_hash: str = ""


def preprocess_cohort(cohort: Cohort, cfg: ResampleConfig = ResampleConfig(),
                      source_hash: str = "") -> PreprocessedDataset:
    """Resample every trace of every patient; preserves patient/segment order."""
    n = len(cohort.records)
    strain = np.empty((n, N_SEGMENTS, cfg.n_points))
    labels = np.empty((n, N_SEGMENTS), dtype=np.int64)
    ids = np.empty(n, dtype=np.int64)
    for i, rec in enumerate(cohort.records):
        for s, trace in enumerate(rec.traces):
            try:
                strain[i, s] = resample_trace(trace, cfg)
            except (TraceError, ValueError) as exc:
                raise TraceError(
                    f"patient {rec.id} segment {s + 1}: {exc}"
                ) from exc
        labels[i] = rec.labels
        ids[i] = rec.id
    return PreprocessedDataset(strain=strain, labels=labels, patient_ids=ids,
                               config=cfg, source_hash=source_hash)


# ---------------------------------------------------------------------------
# serialization: manifest.json + strain.bin (+ labels.bin)
# ---------------------------------------------------------------------------

def save_dataset(ds: PreprocessedDataset, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": asdict(ds.config),
        "source_cohort_hash": ds.source_hash,
        "n_patients": int(ds.strain.shape[0]),
        "n_segments": int(ds.strain.shape[1]),
        "n_points": int(ds.strain.shape[2]),
        "patient_ids": [int(i) for i in ds.patient_ids],
        "labels": [[int(x) for x in row] for row in ds.labels],
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n")
    # little-endian float64, row-major [patient][segment][point]
    (out / "strain.bin").write_bytes(
        np.ascontiguousarray(ds.strain, dtype="<f8").tobytes())


def load_dataset(in_dir: str | Path) -> PreprocessedDataset:
    src = Path(in_dir)
    manifest = json.loads((src / "manifest.json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported dataset format version {manifest.get('format_version')}")
    shape = (manifest["n_patients"], manifest["n_segments"], manifest["n_points"])
    strain = np.frombuffer((src / "strain.bin").read_bytes(), dtype="<f8")
    if strain.size != np.prod(shape):
        raise ValueError(
            f"strain.bin holds {strain.size} values, manifest expects "
            f"{np.prod(shape)}")
    return PreprocessedDataset(
        strain=strain.reshape(shape).copy(),
        labels=np.asarray(manifest["labels"], dtype=np.int64),
        patient_ids=np.asarray(manifest["patient_ids"], dtype=np.int64),
        config=ResampleConfig(**manifest["config"]),
        source_hash=manifest["source_cohort_hash"],
    )
