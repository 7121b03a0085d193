from __future__ import annotations

import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selcov.core import PredictionRecord
from selcov.engine import (
    CurveTable,
    EvalPoint,
    GridSpec,
    ThresholdPolicy,
    apply_threshold,
    curve_svg,
    evaluate_at_threshold,
    fixed_policy,
    select_threshold_for_accuracy,
    select_threshold_for_coverage,
    sweep_curve,
    write_decisions_jsonl,
)
from selcov.errors import BadGrid, Unreachable, UnlabeledRecord


def binary(rid, conf, correct):
    """K=2 record predicting class 1 with the given confidence."""
    return PredictionRecord(rid, (1.0 - conf, conf), 1 if correct else 0)


def brute_force(records, t):
    acc = cor = 0
    for r in records:
        d = r.decision
        if d.confidence >= t:
            acc += 1
            cor += d.predicted_class == r.true_label
    return acc, cor


# 10 records, 6 at confidence >= 0.9 of which 5 correct
TEN = [binary(f"r{i}", c, ok) for i, (c, ok) in enumerate([
    (0.99, True), (0.97, True), (0.95, False), (0.93, True), (0.91, True), (0.90, True),
    (0.80, False), (0.70, True), (0.60, False), (0.55, True),
])]

# accuracy by grid point 0.5..0.9: 0.5, 0.5, 0.667, 0.5, 0.0
BUMP = [binary(f"b{i}", c, ok) for i, (c, ok) in enumerate([
    (0.95, False), (0.92, False), (0.85, True), (0.82, True), (0.75, True),
    (0.72, True), (0.65, False), (0.62, False), (0.55, True), (0.52, False),
])]


def test_fixture_point():
    p = evaluate_at_threshold(TEN, 0.9)
    assert (p.accepted_count, p.correct_count) == brute_force(TEN, 0.9) == (6, 5)
    assert p.accuracy == 5 / 6
    assert p.coverage == 0.6


def test_everything_accepted_at_half():
    recs = [binary(f"x{i}", 0.5 + 0.05 * i, i % 3 != 0) for i in range(10)]
    p = evaluate_at_threshold(recs, 0.5)
    assert p.coverage == 1.0
    assert p.accuracy == sum(r.decision.predicted_class == r.true_label for r in recs) / 10


def test_empty_acceptance_has_no_accuracy():
    recs = [binary("a", 0.999, True), binary("b", 0.6, False)]
    p = evaluate_at_threshold(recs, 1.0)
    assert p.accepted_count == 0
    assert p.accuracy is None
    assert p.rejection_rate == 1.0


def test_equality_is_accepted():
    p = evaluate_at_threshold([binary("a", 0.75, True)], 0.75)
    assert p.accepted_count == 1


def test_one_record_nesting():
    curve = sweep_curve([binary("a", 0.8, True)], [0.5, 0.75])
    assert [p.accepted_count for p in curve.points] == [1, 1]


def test_unlabeled_curve_rejected():
    with pytest.raises(UnlabeledRecord):
        sweep_curve([PredictionRecord("a", (0.2, 0.8))], [0.5, 0.9])


def test_grid_spec():
    g = GridSpec.parse("0.5:1.0:0.001")
    vals = g.values()
    assert len(vals) == 501 and vals[0] == 0.5 and vals[-1] == 1.0 and vals[400] == 0.9
    assert GridSpec.default(4).values()[0] == 0.25
    for bad in ("0.5:1.0", "0.9:0.5:0.1", "0.5:1.0:0", "a:b:c", "-0.1:1:0.1"):
        with pytest.raises(BadGrid):
            GridSpec.parse(bad)


def test_select_accuracy_already_met():
    curve = sweep_curve(TEN, GridSpec(0.5, 0.9, 0.1))
    pol = select_threshold_for_accuracy(curve, 0.5)
    assert pol.threshold == 0.5


def test_select_accuracy_unreachable():
    recs = [binary("a", 0.99, False), binary("b", 0.98, True), binary("c", 0.6, True)]
    curve = sweep_curve(recs, GridSpec(0.5, 1.0, 0.01))
    with pytest.raises(Unreachable):
        select_threshold_for_accuracy(curve, 1.0)


def test_select_accuracy_matches_fixture():
    curve = sweep_curve(TEN, GridSpec(0.5, 1.0, 0.01))
    pol = select_threshold_for_accuracy(curve, 0.8)
    # brute force: first grid point with accuracy >= 0.8
    expect = next(t for t in curve.grid
                  if brute_force(TEN, t)[0] and brute_force(TEN, t)[1] / brute_force(TEN, t)[0] >= 0.8)
    assert pol.threshold == expect


def test_min_coverage_full():
    curve = sweep_curve(TEN, GridSpec(0.5, 1.0, 0.01))
    pol = select_threshold_for_coverage(curve, 1.0)
    assert pol.threshold == 0.5
    assert pol.achieved.coverage == 1.0


def test_min_coverage_picks_accuracy_bump():
    grid = GridSpec(0.5, 0.9, 0.1)
    curve = sweep_curve(BUMP, grid)
    pol = select_threshold_for_coverage(curve, 0.3)
    feasible = [t for t in grid.values() if brute_force(BUMP, t)[0] / len(BUMP) >= 0.3]
    best = max(feasible, key=lambda t: brute_force(BUMP, t)[1] / brute_force(BUMP, t)[0])
    assert pol.threshold == best == 0.7


def test_apply_threshold_extremes():
    decisions = apply_threshold(TEN, 0.0)
    assert all(d.accepted for d in decisions)
    assert [d.record_id for d in decisions] == [r.record_id for r in TEN]
    assert not any(d.accepted for d in apply_threshold(TEN, 1.0))


def test_decisions_jsonl_shape():
    buf = io.StringIO()
    write_decisions_jsonl(apply_threshold(TEN[:2], fixed_policy(0.98)), buf)
    rows = [json.loads(x) for x in buf.getvalue().splitlines()]
    assert rows[0] == {"id": "r0", "class": 1, "confidence": 0.99, "status": "accepted"}
    assert rows[1]["status"] == "rejected"


def test_curve_csv_roundtrip(tmp_path):
    curve = sweep_curve(TEN, GridSpec(0.5, 1.0, 0.01))
    path = tmp_path / "curve.csv"
    curve.to_csv(path)
    text = path.read_text()
    assert text.splitlines()[0] == "threshold,accepted,correct,accuracy,coverage,rejection_rate"
    assert text.splitlines()[-1].split(",")[3] == "null"
    back = CurveTable.from_csv(path)
    assert back.points == curve.points


def test_policy_roundtrip():
    p = ThresholdPolicy.from_dict(
        {"threshold": 0.9, "objective": {"kind": "target_accuracy", "value": 0.95},
         "achieved": EvalPoint(0.9, 6, 5, 10).to_dict()})
    assert ThresholdPolicy.from_dict(p.to_dict()) == p


def test_svg_has_two_series():
    svg = curve_svg(sweep_curve(TEN, GridSpec(0.5, 1.0, 0.01)), "t")
    assert svg.startswith("<svg") and svg.count("<polyline") == 2


records_st = st.lists(
    st.tuples(st.floats(0.5, 1.0), st.booleans()), min_size=1, max_size=60
).map(lambda rows: [binary(f"h{i}", c, ok) for i, (c, ok) in enumerate(rows)])


@settings(max_examples=80, deadline=None)
@given(records_st, st.sampled_from([0.01, 0.05, 0.1, 0.001]))
def test_sweep_equals_brute_force(records, step):
    curve = sweep_curve(records, GridSpec(0.5, 1.0, step))
    for p in curve.points:
        assert (p.accepted_count, p.correct_count) == brute_force(records, p.threshold)
        assert p.rejection_rate + p.coverage == pytest.approx(1.0, abs=1e-15)
        assert p.correct_count <= p.accepted_count <= p.total_count
    counts = [p.accepted_count for p in curve.points]
    assert counts == sorted(counts, reverse=True)


@settings(max_examples=50, deadline=None)
@given(records_st, st.floats(0, 1), st.floats(0, 1))
def test_acceptance_sets_are_nested(records, t1, t2):
    lo, hi = sorted((t1, t2))
    at_hi = {d.record_id for d in apply_threshold(records, hi) if d.accepted}
    at_lo = {d.record_id for d in apply_threshold(records, lo) if d.accepted}
    assert at_hi <= at_lo


def test_multiclass_sweep_matches_brute_force():
    rng = np.random.default_rng(5)
    recs = []
    for i in range(300):
        p = rng.dirichlet(np.ones(5))
        recs.append(PredictionRecord(f"m{i}", tuple(p / p.sum()), int(rng.integers(5))))
    curve = sweep_curve(recs)
    assert curve.grid[0] == 0.2
    for p in curve.points[::7]:
        assert (p.accepted_count, p.correct_count) == brute_force(recs, p.threshold)
