from __future__ import annotations

import io
import json
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selcov.core import (
    IngestConfig,
    PredictionRecord,
    SpecimenMeta,
    check_probabilities,
    decide,
    ingest_predictions,
    parse_date,
    write_csv,
    write_jsonl,
)
from selcov.errors import EmptyInput, InconsistentClassCount, InvalidDate, InvalidRecord, InvalidVector


def _line(rid, probs, label=None, **meta):
    return json.dumps({"id": rid, "probs": probs, "label": label, **meta})


def test_decide_argmax():
    d = decide([0.3, 0.7])
    assert (d.predicted_class, d.confidence) == (1, 0.7)


def test_decide_tie_goes_to_lowest_index():
    d = decide([0.5, 0.5])
    assert (d.predicted_class, d.confidence) == (0, 0.5)


def test_decide_uniform_large_k():
    k = 8142
    d = decide([1.0 / k] * k)
    assert d.predicted_class == 0
    assert d.confidence == pytest.approx(1.0 / k, rel=1e-12)


@pytest.mark.parametrize("probs", [[1.0], [0.5, 0.6], [-0.1, 1.1], [float("nan"), 1.0], ["a", 1]])
def test_check_probabilities_rejects(probs):
    with pytest.raises(InvalidVector):
        check_probabilities(probs)


def test_check_probabilities_renormalizes_within_tolerance():
    vec = check_probabilities([0.3, 0.7 + 5e-7])
    assert abs(sum(vec) - 1.0) < 1e-12


def test_record_label_range():
    with pytest.raises(InvalidRecord):
        PredictionRecord("a", (0.4, 0.6), true_label=2)
    with pytest.raises(InvalidRecord):
        PredictionRecord("a", (0.4, 0.6), true_label=True)


def test_dates_calendar_validated():
    assert parse_date("2020-02-29") == date(2020, 2, 29)
    for bad in ("2019-02-29", "2020-13-01", "1650-05-01", "yesterday"):
        with pytest.raises(InvalidDate):
            parse_date(bad)


def test_specimen_enums():
    with pytest.raises(InvalidRecord):
        SpecimenMeta("Acer rubrum", date(1900, 5, 1), nativity="alien")


def test_empty_input():
    with pytest.raises(EmptyInput):
        ingest_predictions(io.StringIO(""))


def test_malformed_line_is_skipped_and_counted():
    lines = [
        _line("a", [0.2, 0.8], 1),
        _line("b", [0.6, 0.4], 0),
        _line("c", [0.3, 0.5], 1),  # sums to 0.8
        _line("d", [0.9, 0.1], 1),
    ]
    records, report = ingest_predictions(lines)
    assert [r.record_id for r in records] == ["a", "b", "d"]
    assert report.malformed_count == 1
    assert report.malformed_lines[0][0] == 3


def test_inconsistent_class_count_names_line():
    lines = [_line("a", [0.2, 0.8]), _line("b", [0.2, 0.3, 0.5])]
    with pytest.raises(InconsistentClassCount) as exc:
        ingest_predictions(lines, IngestConfig(source_name="preds.jsonl"))
    assert "preds.jsonl:2" in str(exc.value)


def test_report_histogram_matches_hand_count():
    # labels by line: 0 2 1 2 2 - 0 1 2 2  (one unlabeled)
    labels = [0, 2, 1, 2, 2, None, 0, 1, 2, 2]
    lines = [_line(f"r{i}", [0.2, 0.3, 0.5], lab) for i, lab in enumerate(labels)]
    _, report = ingest_predictions(lines)
    assert report.record_count == 10
    assert report.class_count == 3
    assert report.labeled_count == 9
    assert report.label_histogram == (2, 2, 5)


def test_csv_ingest():
    text = (
        "id,prob_0,prob_1,label,species,date,nativity,growth_form,wetland\n"
        "a,0.1,0.9,1,Acer rubrum,1901-04-02,native,woody,FAC\n"
        "b,0.7,0.3,,,,,,\n"
    )
    records, report = ingest_predictions(io.StringIO(text))
    assert report.record_count == 2
    assert records[0].specimen.collection_date == date(1901, 4, 2)
    assert records[1].specimen is None and records[1].true_label is None


_prob_vectors = st.integers(2, 6).flatmap(
    lambda k: st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k)
).map(lambda xs: [x / sum(xs) for x in xs])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(_prob_vectors, st.booleans(), st.booleans()), min_size=1, max_size=20))
def test_roundtrip_is_identity(rows):
    k = len(rows[0][0])
    rows = [r for r in rows if len(r[0]) == k]
    records = []
    for i, (probs, labeled, with_meta) in enumerate(rows):
        meta = SpecimenMeta("Sp. x", date(1900 + i, 3, 1), "native") if with_meta else None
        records.append(PredictionRecord(f"r{i}", tuple(probs), 0 if labeled else None, meta))
    for writer in (write_jsonl, write_csv):
        buf = io.StringIO()
        writer(records, buf)
        back, _ = ingest_predictions(io.StringIO(buf.getvalue()))
        assert back == records
