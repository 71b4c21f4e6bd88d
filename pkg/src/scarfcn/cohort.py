"""Synthetic virtual-patient cohort of 18-segment longitudinal strain traces.

Each patient is a closed-form surrogate of a dyssynchronous (LBBB-like)
left ventricle with optional scar in one coronary territory.  Parameter
sets are drawn from a Sobol sequence so the cohort covers the parameter
box evenly; everything downstream of the seed is deterministic.

Strain trace model for segment s over one cycle of period T:

    strain(t) = -A_s * window(t; d_s, t_avc, T) + prestretch bump on [0, d_s]

where A_s = A0 * lv_contractility * (1 - kappa * scar_frac_s) and
window is a raised cosine rising from the segment's activation onset d_s
to 1.0 at aortic valve closure, then relaxing back to 0 at cycle end.
Septal walls activate at delay 0, lateral walls at the full global
delay, anterior/inferior walls halfway.  Late-activated segments get an
early positive stretch bump proportional to their delay.  Traces start
and end at exactly zero.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .sobol import sobol_sample
from .territory import TERRITORIES, TERRITORY_NAMES

N_SEGMENTS = 18
FORMAT_VERSION = 1

# wall position on the circumference, by column (segment-1) % 6:
# anterior, anteroseptal, inferoseptal, inferior, inferolateral, anterolateral
_WALL_DELAY_FACTOR = (0.5, 0.0, 0.0, 0.5, 1.0, 1.0)

PARAM_RANGES = {
    "lv_contractility": (0.5, 1.5),
    "rv_contractility": (0.5, 1.5),
    "activation_delay_global": (0.0, 0.12),
    "heart_period": (0.6, 1.2),
    "avc_fraction": (0.30, 0.45),
}


class GenerationError(RuntimeError):
    """Cohort generation produced no usable patients."""


class DomainError(ValueError):
    """Argument outside its documented domain."""


@dataclass
class CohortConfig:
    """Generation knobs; defaults calibrated to the target cohort statistics."""

    p_mi: float = 0.51
    amp0: float = 18.0
    kappa: float = 0.8
    prestretch_gain: float = 25.0
    scar_frac_max: float = 0.6
    run_length_weights: tuple[float, ...] = (0.25, 0.33, 0.25, 0.11, 0.06)  # lengths 2..6
    gls_window: tuple[float, float] = (-20.5, -11.5)
    sample_rate: float = 200.0
    noise_sigma: float = 2.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["run_length_weights"] = list(self.run_length_weights)
        d["gls_window"] = list(self.gls_window)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CohortConfig":
        d = dict(d)
        d["run_length_weights"] = tuple(d["run_length_weights"])
        d["gls_window"] = tuple(d["gls_window"])
        return cls(**d)


@dataclass
class PatientParams:
    lv_contractility: float
    rv_contractility: float
    activation_delay_global: float
    heart_period: float
    avc_fraction: float
    scar_volume_fraction: np.ndarray  # 18 values in [0, 1]

    def validate(self) -> None:
        for name, (lo, hi) in PARAM_RANGES.items():
            val = getattr(self, name)
            if not lo <= val <= hi:
                raise DomainError(f"{name}={val} outside [{lo}, {hi}]")
        svf = np.asarray(self.scar_volume_fraction)
        if svf.shape != (N_SEGMENTS,) or np.any(svf < 0) or np.any(svf > 1):
            raise DomainError("scar_volume_fraction must be 18 values in [0, 1]")


@dataclass
class StrainTrace:
    samples: np.ndarray
    avc_index: int

    def validate(self) -> None:
        n = len(self.samples)
        if n < 16:
            raise DomainError(f"trace length {n} < 16")
        if self.samples[0] != 0.0 or self.samples[-1] != 0.0:
            raise DomainError("trace must start and end at exactly zero")
        if not 0 < self.avc_index < n - 1:
            raise DomainError(f"avc_index {self.avc_index} outside (0, {n - 1})")


@dataclass
class PatientRecord:
    id: int
    params: PatientParams
    traces: list[StrainTrace]
    labels: np.ndarray  # 18 binary values


@dataclass
class Cohort:
    seed: int
    records: list[PatientRecord]
    config: CohortConfig
    n_raw: int = 0


def segment_delay(segment: int, activation_delay_global: float) -> float:
    """Mechanical activation onset of a segment, seconds from cycle start."""
    if not 1 <= segment <= N_SEGMENTS:
        raise DomainError(f"segment id {segment} outside 1..{N_SEGMENTS}")
    return _WALL_DELAY_FACTOR[(segment - 1) % 6] * activation_delay_global


def synth_strain(
    params: PatientParams,
    segment: int,
    n_samples: int,
    config: CohortConfig | None = None,
    noise_rng: np.random.Generator | None = None,
) -> StrainTrace:
    """Closed-form surrogate strain trace for one segment (percent strain)."""
    cfg = config or CohortConfig()
    if n_samples < 16:
        raise DomainError(f"n_samples {n_samples} < 16")
    if not 1 <= segment <= N_SEGMENTS:
        raise DomainError(f"segment id {segment} outside 1..{N_SEGMENTS}")
    v_s = float(np.asarray(params.scar_volume_fraction)[segment - 1])
    amp = cfg.amp0 * params.lv_contractility * (1.0 - cfg.kappa * v_s)
    period = params.heart_period
    t = np.linspace(0.0, period, n_samples)
    avc_index = int(np.clip(round(params.avc_fraction * (n_samples - 1)),
                            1, n_samples - 2))
    t_avc = t[avc_index]
    d = min(segment_delay(segment, params.activation_delay_global), 0.5 * t_avc)

    samples = np.zeros(n_samples)
    # contraction: raised cosine rising over [d, t_avc], peak -amp at AVC
    rising = (t >= d) & (t <= t_avc)
    samples[rising] = -amp * 0.5 * (1.0 - np.cos(
        np.pi * (t[rising] - d) / (t_avc - d)))
    # relaxation back to zero over [t_avc, T]
    falling = t > t_avc
    samples[falling] = -amp * 0.5 * (1.0 + np.cos(
        np.pi * (t[falling] - t_avc) / (period - t_avc)))
    # early positive prestretch of late-activated segments
    if d > 0.0:
        pre = t < d
        samples[pre] += (cfg.prestretch_gain * d) * 0.5 * (
            1.0 - np.cos(2.0 * np.pi * t[pre] / d))
    if cfg.noise_sigma > 0.0 and noise_rng is not None:
        samples += noise_rng.normal(0.0, cfg.noise_sigma, n_samples)
    samples[0] = 0.0
    samples[-1] = 0.0
    return StrainTrace(samples=samples, avc_index=avc_index)


def _run_length(u: float, weights: tuple[float, ...]) -> int:
    cum = np.cumsum(np.asarray(weights) / np.sum(weights))
    return 2 + int(np.searchsorted(cum, u, side="right"))


def _sample_patient(seed: int, index: int, cfg: CohortConfig) -> PatientParams:
    """Map Sobol point ``index`` (1-based) to a parameter set."""
    u = sobol_sample(9, index)
    ranges = list(PARAM_RANGES.values())
    vals = [lo + ui * (hi - lo) for ui, (lo, hi) in zip(u[:5], ranges)]
    svf = np.zeros(N_SEGMENTS)
    if u[5] < cfg.p_mi:
        territory = TERRITORY_NAMES[min(int(u[6] * 3), 2)]
        segs = sorted(TERRITORIES[territory])
        length = min(_run_length(u[7], cfg.run_length_weights), len(segs))
        start = min(int(u[8] * (len(segs) - length + 1)), len(segs) - length)
        frac_rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
        for s in segs[start : start + length]:
            # uniform on (0, scar_frac_max]
            svf[s - 1] = cfg.scar_frac_max * (1.0 - frac_rng.uniform())
    return PatientParams(*vals, scar_volume_fraction=svf)


def _make_record(rec_id: int, seed: int, index: int,
                 cfg: CohortConfig) -> PatientRecord:
    params = _sample_patient(seed, index, cfg)
    params.validate()
    n_samples = max(16, int(round(params.heart_period * cfg.sample_rate)))
    noise_rng = None
    if cfg.noise_sigma > 0.0:
        noise_rng = np.random.default_rng(np.random.SeedSequence([seed, index, 1]))
    traces = [synth_strain(params, s, n_samples, cfg, noise_rng)
              for s in range(1, N_SEGMENTS + 1)]
    labels = (np.asarray(params.scar_volume_fraction) > 0.0).astype(np.int64)
    return PatientRecord(id=rec_id, params=params, traces=traces, labels=labels)


def global_longitudinal_strain(record: PatientRecord) -> float:
    """Mean over segments of peak systolic (most negative) strain."""
    return float(np.mean([tr.samples.min() for tr in record.traces]))


def generate_cohort(seed: int, n_raw: int, config: CohortConfig | None = None) -> Cohort:
    """Generate and filter the virtual cohort; pure function of its arguments."""
    cfg = config or CohortConfig()
    if n_raw < 1:
        raise DomainError(f"n_raw {n_raw} < 1")
    records: list[PatientRecord] = []
    lo, hi = cfg.gls_window
    for index in range(1, n_raw + 1):
        rec = _make_record(len(records), seed, index, cfg)
        if lo <= global_longitudinal_strain(rec) <= hi:
            records.append(rec)
    if not records:
        raise GenerationError(
            f"GLS window {cfg.gls_window} filtered out all {n_raw} raw patients"
        )
    return Cohort(seed=seed, records=records, config=cfg, n_raw=n_raw)


def scarred_segment_fraction(cohort: Cohort) -> float:
    total = N_SEGMENTS * len(cohort.records)
    return float(sum(int(r.labels.sum()) for r in cohort.records)) / total


# ---------------------------------------------------------------------------
# serialization: manifest.json + patients.jsonl
# ---------------------------------------------------------------------------

def _json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_cohort(cohort: Cohort, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_scarred = sum(1 for r in cohort.records if r.labels.any())
    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": cohort.seed,
        "n_raw": cohort.n_raw,
        "config": cohort.config.to_dict(),
        "n_patients": len(cohort.records),
        "n_scarred_patients": n_scarred,
        "scarred_segment_fraction": scarred_segment_fraction(cohort),
        "notes": "GLS window filter is a surrogate strain-index criterion",
    }
    (out / "manifest.json").write_text(_json_dumps(manifest) + "\n")
    with open(out / "patients.jsonl", "w") as fh:
        for rec in cohort.records:
            p = rec.params
            obj = {
                "id": rec.id,
                "params": {
                    "lv_contractility": p.lv_contractility,
                    "rv_contractility": p.rv_contractility,
                    "activation_delay_global": p.activation_delay_global,
                    "heart_period": p.heart_period,
                    "avc_fraction": p.avc_fraction,
                    "scar_volume_fraction": list(map(float, p.scar_volume_fraction)),
                },
                "labels": [int(x) for x in rec.labels],
                "avc_index": rec.traces[0].avc_index,
                "samples": [list(map(float, tr.samples)) for tr in rec.traces],
            }
            fh.write(_json_dumps(obj) + "\n")


def load_cohort(in_dir: str | Path) -> Cohort:
    src = Path(in_dir)
    manifest = json.loads((src / "manifest.json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported cohort format version {manifest.get('format_version')}"
        )
    cfg = CohortConfig.from_dict(manifest["config"])
    records = []
    with open(src / "patients.jsonl") as fh:
        for line in fh:
            obj = json.loads(line)
            p = obj["params"]
            params = PatientParams(
                lv_contractility=p["lv_contractility"],
                rv_contractility=p["rv_contractility"],
                activation_delay_global=p["activation_delay_global"],
                heart_period=p["heart_period"],
                avc_fraction=p["avc_fraction"],
                scar_volume_fraction=np.asarray(p["scar_volume_fraction"]),
            )
            traces = [StrainTrace(np.asarray(s), obj["avc_index"])
                      for s in obj["samples"]]
            records.append(PatientRecord(
                id=obj["id"], params=params, traces=traces,
                labels=np.asarray(obj["labels"], dtype=np.int64)))
    return Cohort(seed=manifest["seed"], records=records, config=cfg,
                  n_raw=manifest["n_raw"])


def cohort_hash(in_dir: str | Path) -> str:
    """Provenance hash of a saved cohort directory."""
    h = hashlib.sha256()
    for name in ("manifest.json", "patients.jsonl"):
        h.update((Path(in_dir) / name).read_bytes())
    return h.hexdigest()
