from __future__ import annotations

import io
import math

import numpy as np
import pytest

from selcov.core import write_jsonl
from selcov.engine import GridSpec, evaluate_at_threshold, sweep_curve
from selcov.errors import BadSpec, Intractable
from selcov.phenology import (
    FLOWERING,
    FRUITING,
    group_by_species,
    observations_from_records,
    replication_report,
    species_mean_doy,
    species_shift,
)
from selcov.synth import (
    CalibrationSpec,
    CounterStream,
    PhenoSpec,
    SpeciesSpec,
    analytic_curve_oracle,
    generate_synthetic_phenology,
    generate_synthetic_predictions,
    replication_spec,
    spec_from_dict,
)


def _bytes(records):
    buf = io.StringIO()
    write_jsonl(records, buf)
    return buf.getvalue()


def test_counter_stream_reproducible_and_open_interval():
    a = CounterStream(7, 3).uniform(10_000)
    assert np.array_equal(a, CounterStream(7, 3).uniform(10_000))
    assert not np.array_equal(a, CounterStream(7, 4).uniform(10_000))
    assert a.min() > 0.0 and a.max() < 1.0


def test_counter_stream_known_prefix():
    # pins the documented mapping: Philox-4x64 keyed by seed | stream << 64,
    # u = ((w >> 11) + 0.5) * 2**-53
    w = np.random.Philox(key=5 | (2 << 64)).random_raw(3)
    expect = ((w >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    assert np.array_equal(CounterStream(5, 2).uniform(3), expect)


def test_normal_moments():
    z = CounterStream(1, 1).normal(200_000)
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert abs(z.std() - 1) < 0.01


def test_calibration_determinism():
    spec = CalibrationSpec("perfectly_calibrated", n=2_000, n_classes=3, seed=9)
    assert _bytes(generate_synthetic_predictions(spec)) == _bytes(generate_synthetic_predictions(spec))


def test_calibration_empty():
    assert generate_synthetic_predictions(CalibrationSpec("perfectly_calibrated", n=0)) == []


def test_calibration_accuracy_at_090():
    recs = generate_synthetic_predictions(CalibrationSpec("perfectly_calibrated", n=100_000, seed=1))
    p = evaluate_at_threshold(recs, 0.9)
    assert abs(p.accuracy - 0.95) <= 0.01
    assert abs(p.coverage - 0.2) <= 0.01


def test_miscalibrated_kinds_bracket_calibrated():
    accs = {}
    for kind in ("overconfident", "perfectly_calibrated", "underconfident"):
        recs = generate_synthetic_predictions(CalibrationSpec(kind, gamma=2.0, n=20_000, seed=2))
        accs[kind] = evaluate_at_threshold(recs, 0.5).accuracy
    assert accs["overconfident"] < accs["perfectly_calibrated"] < accs["underconfident"]


def test_oracle_closed_forms():
    spec = CalibrationSpec("perfectly_calibrated", lo=0.5, hi=1.0)
    o = analytic_curve_oracle(spec, [0.5, 0.9, 1.0])
    assert o.points[0].coverage == 1.0 and o.points[0].accuracy == pytest.approx(0.75)
    assert o.points[1].accuracy == pytest.approx(0.95, abs=1e-12)
    assert o.points[1].coverage == pytest.approx(0.2, abs=1e-12)
    assert o.points[2].coverage == 0.0 and o.points[2].accuracy is None


def test_oracle_intractable():
    spec = CalibrationSpec("perfectly_calibrated", distribution="beta")
    with pytest.raises(Intractable):
        analytic_curve_oracle(spec, [0.5])


def test_bad_specs():
    with pytest.raises(BadSpec):
        spec_from_dict({"kind": "calibration", "kind_typo": 1})
    with pytest.raises(BadSpec):
        spec_from_dict({"kind": "weather"})
    with pytest.raises(BadSpec):
        spec_from_dict({"kind": "phenology", "preset": "shift", "label_noise_rate": 0.5})


def _one_species(**kw):
    sp = SpeciesSpec("X", kw.pop("mean", 150.0), kw.pop("slope", 0.0), kw.pop("std", 10.0), kw.pop("samples", 500))
    return PhenoSpec((sp,), **kw)


def test_phenology_determinism():
    spec = replication_spec(n_pairs=2, samples=200, seed=4)
    a = generate_synthetic_phenology(spec)
    b = generate_synthetic_phenology(spec)
    assert _bytes(a.records) == _bytes(b.records)


def test_phenology_doy_moments_within_three_sigma():
    ph = generate_synthetic_phenology(_one_species(samples=10_000, std=12.0, event_fraction=1.0, seed=3))
    doy = ph.true_doy
    assert abs(doy.mean() - 150.0) < 3 * 12.0 / math.sqrt(doy.size)
    # std of the sample std is about sigma / sqrt(2n)
    assert abs(doy.std(ddof=1) - 12.0) < 3 * 12.0 / math.sqrt(2 * doy.size)


def test_noiseless_trend_recovered():
    ph = generate_synthetic_phenology(_one_species(slope=-0.03, std=0.0, samples=500, event_fraction=1.0))
    est = species_shift("X", ph.exact_truth_observations())
    assert est.slope_days_per_year == pytest.approx(-0.03, abs=1e-9)
    assert est.p_value < 1e-12


def test_74_samples_filtered():
    ph = generate_synthetic_phenology(_one_species(samples=74, event_fraction=1.0))
    assert species_shift("X", ph.exact_truth_observations()).filtered


def test_flip_rate_at_high_confidence():
    for r in (0.05, 0.15, 0.3):
        ph = generate_synthetic_phenology(_one_species(samples=200_000, label_noise_rate=r, seed=8))
        conf = np.array([max(rec.probabilities) for rec in ph.records])
        accepted = conf >= 0.99
        rate = ph.flipped[accepted].mean()
        se = math.sqrt((r / 5) * (1 - r / 5) / accepted.sum())
        assert abs(rate - r / 5) < 4 * se
        assert abs(ph.flipped.mean() - r) < 0.005


def test_thresholding_separates_noise():
    ph = generate_synthetic_phenology(replication_spec(n_pairs=5, samples=1000, seed=2))
    recs = ph.records
    curve = sweep_curve(recs, GridSpec(0.5, 1.0, 0.01))
    assert curve.point_at(0.99).accuracy > curve.point_at(0.5).accuracy + 0.1


def _replication_mae(noise, seed):
    ph = generate_synthetic_phenology(replication_spec(n_pairs=10, samples=300, label_noise_rate=noise, seed=seed))
    ref = ph.reference_estimates()
    obs = observations_from_records(ph.records, FRUITING, 0.5)
    model = species_mean_doy(group_by_species(obs, ref.keys()))
    return replication_report(model, ref, ph.grouping).mean_abs_doy_error


def test_label_noise_drives_replication_error():
    assert _replication_mae(0.15, 0) >= 2 * _replication_mae(0.03, 0)


def test_flowering_task_for_shift_preset():
    spec = spec_from_dict({"kind": "phenology", "preset": "shift", "n_species": 3, "n_shifted": 1, "samples": 80})
    ph = generate_synthetic_phenology(spec)
    assert spec.task == FLOWERING and len(ph.records) == 240
    assert {r.specimen.growth_form for r in ph.records} == {"forb_herb", "tree_shrub_subshrub", "vine"}
