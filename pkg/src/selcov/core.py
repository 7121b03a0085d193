"""Prediction records, specimen metadata and line-oriented ingestion.

Two on-disk layouts are accepted.

JSONL, one object per line::

    {"id": "s1", "probs": [0.2, 0.8], "label": 1, "species": "Acer rubrum",
     "date": "1921-05-02", "nativity": "native", "growth_form": null, "wetland": "FAC"}

CSV with a mandatory header::

    id,prob_0,prob_1,label,species,date,nativity,growth_form,wetland

Empty CSV cells and JSON ``null`` both mean "absent".
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import IO, Any

from .errors import (
    EmptyInput,
    InconsistentClassCount,
    InvalidDate,
    InvalidRecord,
    InvalidVector,
)

SUM_TOLERANCE = 1e-6
# Sums closer to 1 than this are stored untouched, which keeps re-ingestion idempotent.
_RENORM_EPS = 1e-12

NATIVITY = frozenset({"native", "introduced"})
GROWTH_FORMS = frozenset({"forb_herb", "tree_shrub_subshrub", "vine", "woody", "herbaceous"})
WETLAND_STATUS = frozenset({"OBL", "FACW", "FAC", "FACU", "UPL"})

MIN_YEAR, MAX_YEAR = 1700, 2100

CSV_META_COLUMNS = ("label", "species", "date", "nativity", "growth_form", "wetland")


def check_probabilities(probs: Iterable[float], tolerance: float = SUM_TOLERANCE) -> tuple[float, ...]:
    """Validate a class-probability vector and return it as a tuple.

    Vectors whose sum is within ``tolerance`` of 1 but not within 1e-12 are
    rescaled to sum to 1.
    """
    try:
        vec = tuple(float(p) for p in probs)
    except (TypeError, ValueError) as exc:
        raise InvalidVector(f"non-numeric probability: {exc}") from None
    if len(vec) < 2:
        raise InvalidVector(f"need at least 2 classes, got {len(vec)}")
    for p in vec:
        if not math.isfinite(p):
            raise InvalidVector("probability is NaN or infinite")
        if p < 0.0 or p > 1.0:
            raise InvalidVector(f"probability {p!r} outside [0, 1]")
    total = math.fsum(vec)
    if abs(total - 1.0) > tolerance:
        raise InvalidVector(f"probabilities sum to {total!r}, not 1 within {tolerance:g}")
    if abs(total - 1.0) > _RENORM_EPS:
        vec = tuple(p / total for p in vec)
    return vec


@dataclass(frozen=True, slots=True)
class Decision:
    predicted_class: int
    confidence: float


def decide(probabilities: Sequence[float]) -> Decision:
    """Top-1 decision: argmax class (lowest index on ties) and its probability."""
    vec = check_probabilities(probabilities)
    best = 0
    for i in range(1, len(vec)):
        if vec[i] > vec[best]:
            best = i
    return Decision(best, vec[best])


@dataclass(frozen=True, slots=True)
class SpecimenMeta:
    species: str
    collection_date: date
    nativity: str | None = None
    growth_form: str | None = None
    wetland_status: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.species, str) or not self.species.strip():
            raise InvalidRecord("species must be a non-empty string")
        if not isinstance(self.collection_date, date):
            raise InvalidDate(f"collection_date must be a date, got {self.collection_date!r}")
        if not MIN_YEAR <= self.collection_date.year <= MAX_YEAR:
            raise InvalidDate(f"year {self.collection_date.year} outside [{MIN_YEAR}, {MAX_YEAR}]")
        if self.nativity is not None and self.nativity not in NATIVITY:
            raise InvalidRecord(f"unknown nativity {self.nativity!r}")
        if self.growth_form is not None and self.growth_form not in GROWTH_FORMS:
            raise InvalidRecord(f"unknown growth_form {self.growth_form!r}")
        if self.wetland_status is not None and self.wetland_status not in WETLAND_STATUS:
            raise InvalidRecord(f"unknown wetland status {self.wetland_status!r}")


def parse_date(text: str) -> date:
    try:
        d = date.fromisoformat(text)
    except (TypeError, ValueError):
        raise InvalidDate(f"bad date {text!r}, expected YYYY-MM-DD") from None
    if not MIN_YEAR <= d.year <= MAX_YEAR:
        raise InvalidDate(f"year {d.year} outside [{MIN_YEAR}, {MAX_YEAR}]")
    return d


@dataclass(frozen=True, slots=True)
class PredictionRecord:
    record_id: str
    probabilities: tuple[float, ...]
    true_label: int | None = None
    specimen: SpecimenMeta | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "probabilities", check_probabilities(self.probabilities))
        if self.true_label is not None:
            if isinstance(self.true_label, bool) or not isinstance(self.true_label, int):
                raise InvalidRecord(f"label must be an integer, got {self.true_label!r}")
            if not 0 <= self.true_label < len(self.probabilities):
                raise InvalidRecord(
                    f"label {self.true_label} outside [0, {len(self.probabilities)})"
                )

    @property
    def n_classes(self) -> int:
        return len(self.probabilities)

    @property
    def decision(self) -> Decision:
        return decide(self.probabilities)


@dataclass(frozen=True)
class DatasetReport:
    record_count: int
    class_count: int
    labeled_count: int
    malformed_count: int
    label_histogram: tuple[int, ...]
    malformed_lines: tuple[tuple[int, str], ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        return {
            "record_count": self.record_count,
            "class_count": self.class_count,
            "labeled_count": self.labeled_count,
            "malformed_count": self.malformed_count,
            "label_histogram": list(self.label_histogram),
            "malformed_lines": [{"line": n, "reason": r} for n, r in self.malformed_lines],
        }


@dataclass(frozen=True)
class IngestConfig:
    format: str = "auto"  # auto | jsonl | csv
    sum_tolerance: float = SUM_TOLERANCE
    source_name: str | None = None


def _specimen_from_fields(species, date_text, nativity, growth_form, wetland) -> SpecimenMeta | None:
    if species is None and date_text is None:
        if nativity or growth_form or wetland:
            raise InvalidRecord("trait fields given without species and date")
        return None
    if species is None or date_text is None:
        raise InvalidRecord("species and date must be given together")
    return SpecimenMeta(
        species=species,
        collection_date=parse_date(date_text),
        nativity=nativity,
        growth_form=growth_form,
        wetland_status=wetland,
    )


def _record_from_json(obj: Any, tolerance: float) -> PredictionRecord:
    if not isinstance(obj, dict):
        raise InvalidRecord("line is not a JSON object")
    rid = obj.get("id")
    if not isinstance(rid, str) or not rid:
        raise InvalidRecord("missing or non-string id")
    probs = obj.get("probs")
    if not isinstance(probs, list):
        raise InvalidVector("probs must be a list")
    if any(isinstance(p, bool) or not isinstance(p, (int, float)) for p in probs):
        raise InvalidVector("probs must be numbers")
    vec = check_probabilities(probs, tolerance)
    for key in ("species", "date", "nativity", "growth_form", "wetland"):
        if obj.get(key) is not None and not isinstance(obj[key], str):
            raise InvalidRecord(f"{key} must be a string or null")
    specimen = _specimen_from_fields(
        obj.get("species"), obj.get("date"), obj.get("nativity"),
        obj.get("growth_form"), obj.get("wetland"),
    )
    return PredictionRecord(rid, vec, obj.get("label"), specimen)


def _blank_to_none(value: str) -> str | None:
    value = value.strip()
    return value or None


def _record_from_csv(row: list[str], n_classes: int, tolerance: float) -> PredictionRecord:
    expected = 1 + n_classes + len(CSV_META_COLUMNS)
    if len(row) != expected:
        raise InvalidRecord(f"expected {expected} fields, got {len(row)}")
    rid = row[0].strip()
    if not rid:
        raise InvalidRecord("empty id")
    vec = check_probabilities(row[1:1 + n_classes], tolerance)
    label_s, species, date_s, nativity, growth, wetland = (
        _blank_to_none(v) for v in row[1 + n_classes:]
    )
    label = None
    if label_s is not None:
        try:
            label = int(label_s)
        except ValueError:
            raise InvalidRecord(f"bad label {label_s!r}") from None
    specimen = _specimen_from_fields(species, date_s, nativity, growth, wetland)
    return PredictionRecord(rid, vec, label, specimen)


def _csv_class_count(header: list[str]) -> int:
    names = [h.strip() for h in header]
    if not names or names[0] != "id":
        raise InvalidRecord("CSV header must start with 'id'")
    k = 0
    while 1 + k < len(names) and names[1 + k] == f"prob_{k}":
        k += 1
    if tuple(names[1 + k:]) != CSV_META_COLUMNS:
        raise InvalidRecord(
            "CSV header must be id,prob_0..prob_{K-1}," + ",".join(CSV_META_COLUMNS)
        )
    if k < 2:
        raise InvalidRecord("CSV header declares fewer than 2 probability columns")
    return k


def _open_lines(source) -> tuple[Iterable[str], str, str | None, IO[str] | None]:
    """Return (lines, source name, path suffix, handle to close)."""
    if isinstance(source, (str, os.PathLike)):
        path = Path(source)
        fh = path.open("r", encoding="utf-8", newline="")
        return fh, str(path), path.suffix.lower(), fh
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        return source, getattr(source, "name", "<stream>"), None, None
    return source, "<lines>", None, None


def ingest_predictions(source, config: IngestConfig | None = None) -> tuple[list[PredictionRecord], DatasetReport]:
    """Read prediction records from a path, text stream or iterable of lines.

    Malformed lines are skipped and listed in the report with 1-based line
    numbers. The class count is fixed by the first record (or the CSV
    header); a later record of a different width raises
    ``InconsistentClassCount``. Zero well-formed records raises ``EmptyInput``.
    """
    config = config or IngestConfig()
    lines, name, suffix, handle = _open_lines(source)
    name = config.source_name or name
    try:
        lines = iter(lines)
        fmt = config.format
        first: str | None = None
        first_no = 0
        if fmt == "auto":
            for first_no, first in enumerate(lines, start=1):
                if first.strip():
                    break
            else:
                first = None
            if suffix == ".csv":
                fmt = "csv"
            elif suffix in (".jsonl", ".json", ".ndjson"):
                fmt = "jsonl"
            else:
                fmt = "jsonl" if first is not None and first.lstrip().startswith("{") else "csv"
        if first is not None:
            lines = _chain_first(first_no, first, lines)
        else:
            lines = enumerate(lines, start=1)
        if fmt == "jsonl":
            records, malformed = _ingest_jsonl(lines, config.sum_tolerance, name)
        elif fmt == "csv":
            records, malformed = _ingest_csv(lines, config.sum_tolerance, name)
        else:
            raise ValueError(f"unknown format {fmt!r}")
    finally:
        if handle is not None:
            handle.close()

    if not records:
        raise EmptyInput("no well-formed records", source=name)
    k = records[0].n_classes
    hist = [0] * k
    labeled = 0
    for r in records:
        if r.true_label is not None:
            labeled += 1
            hist[r.true_label] += 1
    report = DatasetReport(
        record_count=len(records),
        class_count=k,
        labeled_count=labeled,
        malformed_count=len(malformed),
        label_histogram=tuple(hist),
        malformed_lines=tuple(malformed),
    )
    return records, report


def _chain_first(first_no: int, first: str, rest: Iterator[str]) -> Iterator[tuple[int, str]]:
    yield first_no, first
    yield from enumerate(rest, start=first_no + 1)


def _ingest_jsonl(numbered, tolerance, name):
    records: list[PredictionRecord] = []
    malformed: list[tuple[int, str]] = []
    k = None
    for line_no, line in numbered:
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            malformed.append((line_no, f"invalid JSON: {exc.msg}"))
            continue
        if k is not None and isinstance(obj, dict) and isinstance(obj.get("probs"), list):
            if len(obj["probs"]) != k:
                raise InconsistentClassCount(
                    f"record has {len(obj['probs'])} probabilities, expected {k}",
                    source=name, line=line_no,
                )
        try:
            rec = _record_from_json(obj, tolerance)
        except (InvalidRecord, InvalidVector, InvalidDate) as exc:
            malformed.append((line_no, str(exc)))
            continue
        if k is None:
            k = rec.n_classes
        records.append(rec)
    return records, malformed


def _ingest_csv(numbered, tolerance, name):
    records: list[PredictionRecord] = []
    malformed: list[tuple[int, str]] = []
    numbered = iter(numbered)
    header = None
    for line_no, line in numbered:
        if line.strip():
            header = next(csv.reader([line]))
            break
    if header is None:
        return records, malformed
    try:
        k = _csv_class_count(header)
    except InvalidRecord as exc:
        raise InvalidRecord(str(exc), source=name, line=line_no) from None
    for line_no, line in numbered:
        if not line.strip():
            continue
        row = next(csv.reader([line]))
        n_probs = len(row) - 1 - len(CSV_META_COLUMNS)
        if n_probs != k and n_probs >= 2:
            raise InconsistentClassCount(
                f"row has {n_probs} probabilities, expected {k}", source=name, line=line_no
            )
        try:
            records.append(_record_from_csv(row, k, tolerance))
        except (InvalidRecord, InvalidVector, InvalidDate) as exc:
            malformed.append((line_no, str(exc)))
    return records, malformed


def record_to_dict(record: PredictionRecord) -> dict[str, Any]:
    s = record.specimen
    return {
        "id": record.record_id,
        "probs": list(record.probabilities),
        "label": record.true_label,
        "species": s.species if s else None,
        "date": s.collection_date.isoformat() if s else None,
        "nativity": s.nativity if s else None,
        "growth_form": s.growth_form if s else None,
        "wetland": s.wetland_status if s else None,
    }


def write_jsonl(records: Iterable[PredictionRecord], out) -> int:
    """Write records as JSONL to a path or text stream; returns the count."""
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            return write_jsonl(records, fh)
    n = 0
    dumps = json.dumps
    for rec in records:
        out.write(dumps(record_to_dict(rec)) + "\n")
        n += 1
    return n


def write_csv(records: Sequence[PredictionRecord], out) -> int:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            return write_csv(records, fh)
    if not records:
        raise EmptyInput("nothing to write")
    k = records[0].n_classes
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", *(f"prob_{i}" for i in range(k)), *CSV_META_COLUMNS])
    for rec in records:
        d = record_to_dict(rec)
        writer.writerow(
            [d["id"], *(repr(p) for p in rec.probabilities),
             *("" if d[c] is None else d[c] for c in ("label", "species", "date", "nativity", "growth_form", "wetland"))]
        )
    return len(records)


def load_class_names(path) -> dict[int, str]:
    """Read an optional class-name sidecar (JSON list or {index: name} object)."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, list):
        return {i: str(n) for i, n in enumerate(data)}
    return {int(k): str(v) for k, v in data.items()}
