import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scarfcn import cohort as ch
from scarfcn.territory import TERRITORIES


def healthy_params(**kwargs):
    defaults = dict(
        lv_contractility=1.0,
        rv_contractility=1.0,
        activation_delay_global=0.0,
        heart_period=0.8,
        avc_fraction=0.35,
        scar_volume_fraction=np.zeros(18),
    )
    defaults.update(kwargs)
    return ch.PatientParams(**defaults)


# ---------------------------------------------------------------------------
# surrogate strain
# ---------------------------------------------------------------------------

def test_peak_strain_unit_scalars():
    trace = ch.synth_strain(healthy_params(), segment=1, n_samples=200)
    assert trace.samples.min() == pytest.approx(-18.0, abs=1e-9)


def test_peak_strain_full_scar():
    svf = np.zeros(18)
    svf[0] = 1.0
    trace = ch.synth_strain(healthy_params(scar_volume_fraction=svf),
                            segment=1, n_samples=200)
    # 18 * (1 - 0.8)
    assert trace.samples.min() == pytest.approx(-3.6, abs=1e-9)


def test_trace_endpoints_exactly_zero():
    rng = np.random.default_rng(0)
    for _ in range(20):
        svf = np.zeros(18)
        svf[int(rng.integers(0, 18))] = rng.uniform(0, 1)
        params = healthy_params(
            lv_contractility=rng.uniform(0.5, 1.5),
            activation_delay_global=rng.uniform(0, 0.12),
            heart_period=rng.uniform(0.6, 1.2),
            avc_fraction=rng.uniform(0.30, 0.45),
            scar_volume_fraction=svf,
        )
        for seg in (1, 5, 11, 18):
            trace = ch.synth_strain(params, seg, 150)
            assert trace.samples[0] == 0.0
            assert trace.samples[-1] == 0.0
            trace.validate()


def test_monotone_scar_effect():
    peaks = []
    for frac in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
        svf = np.zeros(18)
        svf[4] = frac
        trace = ch.synth_strain(healthy_params(scar_volume_fraction=svf), 5, 160)
        peaks.append(abs(trace.samples.min()))
    assert all(a > b for a, b in zip(peaks, peaks[1:]))


def test_septal_lateral_delay_split():
    assert ch.segment_delay(2, 0.1) == 0.0   # anteroseptal
    assert ch.segment_delay(3, 0.1) == 0.0   # inferoseptal
    assert ch.segment_delay(5, 0.1) == 0.1   # inferolateral
    assert ch.segment_delay(1, 0.1) == 0.05  # anterior interpolated


def test_late_segment_gets_prestretch():
    params = healthy_params(activation_delay_global=0.12)
    trace = ch.synth_strain(params, 5, 300)  # lateral wall, full delay
    assert trace.samples.max() > 0.5  # positive early bump


def test_synth_strain_rejects_bad_segment():
    with pytest.raises(ch.DomainError):
        ch.synth_strain(healthy_params(), 0, 100)
    with pytest.raises(ch.DomainError):
        ch.synth_strain(healthy_params(), 19, 100)


# ---------------------------------------------------------------------------
# cohort generation
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_cohort():
    return ch.generate_cohort(seed=11, n_raw=600)


def test_label_consistency(small_cohort):
    for rec in small_cohort.records:
        np.testing.assert_array_equal(
            rec.labels, (rec.params.scar_volume_fraction > 0).astype(int))


def test_ids_dense(small_cohort):
    assert [r.id for r in small_cohort.records] == list(
        range(len(small_cohort.records)))


def test_traces_share_length_and_avc(small_cohort):
    for rec in small_cohort.records:
        lengths = {len(t.samples) for t in rec.traces}
        avcs = {t.avc_index for t in rec.traces}
        assert len(lengths) == 1 and len(avcs) == 1


def test_scar_contiguous_within_one_territory(small_cohort):
    for rec in small_cohort.records:
        scarred = set(np.flatnonzero(rec.labels) + 1)
        if not scarred:
            continue
        owners = [name for name, segs in TERRITORIES.items()
                  if scarred <= set(segs)]
        assert len(owners) == 1, f"scar spans territories: {scarred}"
        ordered = sorted(TERRITORIES[owners[0]])
        positions = sorted(ordered.index(s) for s in scarred)
        assert positions == list(range(positions[0], positions[-1] + 1))
        assert 2 <= len(scarred) <= 6


def test_gls_filter_applied(small_cohort):
    lo, hi = small_cohort.config.gls_window
    for rec in small_cohort.records:
        assert lo <= ch.global_longitudinal_strain(rec) <= hi


def test_p_mi_zero_means_all_healthy():
    cohort = ch.generate_cohort(seed=3, n_raw=100,
                                config=ch.CohortConfig(p_mi=0.0))
    assert all(not rec.labels.any() for rec in cohort.records)


def test_generation_deterministic():
    a = ch.generate_cohort(seed=5, n_raw=50)
    b = ch.generate_cohort(seed=5, n_raw=50)
    assert len(a.records) == len(b.records)
    for ra, rb in zip(a.records, b.records):
        np.testing.assert_array_equal(ra.labels, rb.labels)
        for ta, tb in zip(ra.traces, rb.traces):
            np.testing.assert_array_equal(ta.samples, tb.samples)


def test_generation_error_when_filter_empties():
    cfg = ch.CohortConfig(gls_window=(-0.5, -0.4))
    with pytest.raises(ch.GenerationError, match="filtered out"):
        ch.generate_cohort(seed=1, n_raw=20, config=cfg)


def test_n_raw_must_be_positive():
    with pytest.raises(ch.DomainError):
        ch.generate_cohort(seed=1, n_raw=0)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_save_load_round_trip(tmp_path, small_cohort):
    ch.save_cohort(small_cohort, tmp_path / "cohort")
    loaded = ch.load_cohort(tmp_path / "cohort")
    assert loaded.seed == small_cohort.seed
    assert len(loaded.records) == len(small_cohort.records)
    for ra, rb in zip(small_cohort.records, loaded.records):
        assert ra.id == rb.id
        np.testing.assert_array_equal(ra.labels, rb.labels)
        np.testing.assert_array_equal(
            ra.params.scar_volume_fraction, rb.params.scar_volume_fraction)
        for ta, tb in zip(ra.traces, rb.traces):
            np.testing.assert_array_equal(ta.samples, tb.samples)
            assert ta.avc_index == tb.avc_index


def test_save_byte_identical(tmp_path):
    cohort = ch.generate_cohort(seed=9, n_raw=40)
    ch.save_cohort(cohort, tmp_path / "a")
    ch.save_cohort(ch.generate_cohort(seed=9, n_raw=40), tmp_path / "b")
    for name in ("manifest.json", "patients.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=10, deadline=None)
def test_determinism_property(seed):
    a = ch.generate_cohort(seed=seed, n_raw=12)
    b = ch.generate_cohort(seed=seed, n_raw=12)
    for ra, rb in zip(a.records, b.records):
        for ta, tb in zip(ra.traces, rb.traces):
            np.testing.assert_array_equal(ta.samples, tb.samples)
