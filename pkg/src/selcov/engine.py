"""Confidence-threshold evaluation, curve sweeps, threshold selection and rejection.

A prediction is accepted when its top-1 confidence is >= the threshold;
accuracy is measured over accepted predictions only and is ``None`` when
nothing is accepted.
"""
from __future__ import annotations

import csv
import json
import math
import os
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from .core import Decision, PredictionRecord
from .errors import BadGrid, DataError, EmptyDataset, UnlabeledRecord, Unreachable

CURVE_HEADER = ("threshold", "accepted", "correct", "accuracy", "coverage", "rejection_rate")
GRID_DECIMALS = 12
DEFAULT_STEP = 0.001


@dataclass(frozen=True, slots=True)
class EvalPoint:
    threshold: float
    accepted_count: int
    correct_count: int
    total_count: int

    @property
    def accuracy(self) -> float | None:
        if self.accepted_count == 0:
            return None
        return self.correct_count / self.accepted_count

    @property
    def coverage(self) -> float:
        return self.accepted_count / self.total_count

    @property
    def rejection_rate(self) -> float:
        return 1.0 - self.coverage

    def to_dict(self) -> dict[str, Any]:
        return {
            "threshold": self.threshold,
            "accepted": self.accepted_count,
            "correct": self.correct_count,
            "total": self.total_count,
            "accuracy": self.accuracy,
            "coverage": self.coverage,
            "rejection_rate": self.rejection_rate,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EvalPoint:
        return cls(float(d["threshold"]), int(d["accepted"]), int(d["correct"]), int(d["total"]))


@dataclass(frozen=True)
class GridSpec:
    """Evenly spaced thresholds ``start, start+step, ..., <= stop`` (inclusive)."""

    start: float
    stop: float
    step: float = DEFAULT_STEP

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.start, self.stop, self.step)):
            raise BadGrid("grid bounds must be finite")
        if self.step <= 0:
            raise BadGrid(f"grid step must be positive, got {self.step}")
        if self.start >= self.stop:
            raise BadGrid(f"grid start {self.start} must be below stop {self.stop}")
        if self.start < 0 or self.stop > 1:
            raise BadGrid("grid must lie inside [0, 1]")
        if len(self.values()) < 2:
            raise BadGrid("grid needs at least 2 points")

    @classmethod
    def parse(cls, text: str) -> GridSpec:
        parts = text.split(":")
        if len(parts) != 3:
            raise BadGrid(f"grid must look like start:stop:step, got {text!r}")
        try:
            start, stop, step = (float(p) for p in parts)
        except ValueError:
            raise BadGrid(f"non-numeric grid {text!r}") from None
        return cls(start, stop, step)

    @classmethod
    def default(cls, n_classes: int) -> GridSpec:
        # floor so that a uniform vector's confidence 1/K is still accepted
        start = math.floor(1e12 / n_classes) / 1e12
        return cls(start, 1.0, DEFAULT_STEP)

    def values(self) -> tuple[float, ...]:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return tuple(round(self.start + i * self.step, GRID_DECIMALS) for i in range(n))

    def __str__(self) -> str:
        return f"{self.start!r}:{self.stop!r}:{self.step!r}"


@dataclass(frozen=True)
class CurveTable:
    grid: tuple[float, ...]
    points: tuple[EvalPoint, ...]
    total_count: int

    def __post_init__(self) -> None:
        if len(self.grid) != len(self.points):
            raise ValueError("one point per grid value required")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise BadGrid("grid must be strictly increasing")

    def point_at(self, threshold: float) -> EvalPoint:
        for p in self.points:
            if p.threshold == threshold:
                return p
        raise KeyError(threshold)

    def to_csv(self, out) -> None:
        if isinstance(out, (str, os.PathLike)):
            with open(out, "w", encoding="utf-8", newline="") as fh:
                return self.to_csv(fh)
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for p in self.points:
            acc = p.accuracy
            w.writerow([
                repr(p.threshold), p.accepted_count, p.correct_count,
                "null" if acc is None else repr(acc), repr(p.coverage), repr(p.rejection_rate),
            ])

    @classmethod
    def from_csv(cls, source) -> CurveTable:
        """Read a curve written by :meth:`to_csv`; the total is recovered from coverage."""
        if isinstance(source, (str, os.PathLike)):
            name = str(source)
            with open(source, encoding="utf-8", newline="") as fh:
                rows = list(csv.reader(fh))
        else:
            name = getattr(source, "name", "<curve>")
            rows = list(csv.reader(source))
        if not rows or tuple(c.strip() for c in rows[0]) != CURVE_HEADER:
            raise DataError("curve CSV header must be " + ",".join(CURVE_HEADER), source=name, line=1)
        parsed = []
        total = None
        for line_no, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            try:
                t, acc_n, cor_n, _acc, cov = float(row[0]), int(row[1]), int(row[2]), row[3], float(row[4])
            except (ValueError, IndexError):
                raise DataError("malformed curve row", source=name, line=line_no) from None
            if acc_n > 0 and cov > 0:
                n = round(acc_n / cov)
                if total is not None and n != total:
                    raise DataError("inconsistent coverage totals", source=name, line=line_no)
                total = n
            parsed.append((t, acc_n, cor_n))
        if not parsed:
            raise EmptyDataset("curve has no rows", source=name)
        if total is None:
            raise DataError("cannot recover total count: no row accepts anything", source=name)
        points = tuple(EvalPoint(t, a, c, total) for t, a, c in parsed)
        return cls(tuple(p.threshold for p in points), points, total)


@dataclass(frozen=True)
class Objective:
    kind: str  # target_accuracy | min_coverage | fixed
    value: float

    def __post_init__(self) -> None:
        if self.kind not in ("target_accuracy", "min_coverage", "fixed"):
            raise ValueError(f"unknown objective {self.kind!r}")


@dataclass(frozen=True)
class ThresholdPolicy:
    threshold: float
    objective: Objective
    achieved: EvalPoint | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold {self.threshold} outside [0, 1]")
        if self.achieved is not None and self.achieved.threshold != self.threshold:
            raise ValueError("achieved point does not belong to the policy threshold")

    def to_dict(self) -> dict[str, Any]:
        return {
            "threshold": self.threshold,
            "objective": {"kind": self.objective.kind, "value": self.objective.value},
            "achieved": None if self.achieved is None else self.achieved.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ThresholdPolicy:
        obj = d.get("objective") or {"kind": "fixed", "value": d["threshold"]}
        ach = d.get("achieved")
        return cls(
            float(d["threshold"]),
            Objective(obj["kind"], float(obj["value"])),
            None if ach is None else EvalPoint.from_dict(ach),
        )

    @classmethod
    def load(cls, path) -> ThresholdPolicy:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        try:
            return cls.from_dict(data.get("policy", data))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad policy file: {exc}", source=str(path)) from None


def fixed_policy(threshold: float) -> ThresholdPolicy:
    return ThresholdPolicy(threshold, Objective("fixed", threshold))


@dataclass(frozen=True, slots=True)
class AnnotationDecision:
    record_id: str
    decision: Decision
    status: str  # accepted | rejected

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.record_id,
            "class": self.decision.predicted_class,
            "confidence": self.decision.confidence,
            "status": self.status,
        }


@dataclass(frozen=True)
class ScoredSet:
    """Column view of a record sequence: top-1 confidence, class and label per record."""

    confidence: np.ndarray
    predicted: np.ndarray
    labels: np.ndarray | None  # -1 marks a missing label

    @classmethod
    def from_records(cls, records: Sequence[PredictionRecord]) -> ScoredSet:
        n = len(records)
        if n == 0:
            return cls(np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
        k = records[0].n_classes
        if all(r.n_classes == k for r in records):
            probs = np.array([r.probabilities for r in records], dtype=np.float64)
            pred = np.argmax(probs, axis=1)  # first maximum, i.e. lowest index on ties
            conf = probs[np.arange(n), pred]
        else:
            ds = [r.decision for r in records]
            pred = np.fromiter((d.predicted_class for d in ds), dtype=np.int64, count=n)
            conf = np.fromiter((d.confidence for d in ds), dtype=np.float64, count=n)
        labels = np.fromiter(
            (-1 if r.true_label is None else r.true_label for r in records), dtype=np.int64, count=n
        )
        return cls(conf, pred.astype(np.int64), labels)

    def __len__(self) -> int:
        return len(self.confidence)

    def require_labels(self, records: Sequence[PredictionRecord] | None = None) -> np.ndarray:
        if len(self) == 0:
            raise EmptyDataset("no records to evaluate")
        missing = np.flatnonzero(self.labels < 0)
        if missing.size:
            who = records[missing[0]].record_id if records is not None else f"#{missing[0]}"
            raise UnlabeledRecord(f"record {who} has no true label ({missing.size} unlabeled)")
        return self.labels


Scorable = Union[Sequence[PredictionRecord], ScoredSet]


def _scored(records: Scorable) -> tuple[ScoredSet, Sequence[PredictionRecord] | None]:
    if isinstance(records, ScoredSet):
        return records, None
    return ScoredSet.from_records(records), records


def _check_threshold(t: float) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold {t} outside [0, 1]")
    return t


def evaluate_at_threshold(records: Scorable, threshold: float) -> EvalPoint:
    threshold = _check_threshold(threshold)
    s, recs = _scored(records)
    labels = s.require_labels(recs)
    accepted = s.confidence >= threshold
    correct = accepted & (s.predicted == labels)
    return EvalPoint(threshold, int(accepted.sum()), int(correct.sum()), len(s))


def _grid_values(grid) -> tuple[float, ...]:
    if isinstance(grid, GridSpec):
        return grid.values()
    values = tuple(float(v) for v in grid)
    if len(values) < 2:
        raise BadGrid("grid needs at least 2 points")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise BadGrid("grid must be strictly increasing")
    if values[0] < 0 or values[-1] > 1:
        raise BadGrid("grid must lie inside [0, 1]")
    return values


def sweep_curve(records: Scorable, grid: GridSpec | Sequence[float] | None = None) -> CurveTable:
    """Evaluate every grid threshold from one descending sort of the confidences.

    After sorting, the records accepted at threshold t are a prefix of the
    order, so accepted and correct counts are a prefix length and a
    cumulative sum looked up by binary search.
    """
    s, recs = _scored(records)
    labels = s.require_labels(recs)
    if grid is None:
        k = recs[0].n_classes if recs else int(max(s.predicted.max(), labels.max())) + 1
        grid = GridSpec.default(max(k, 2))
    values = _grid_values(grid)
    n = len(s)
    order = np.argsort(-s.confidence, kind="stable")
    conf_desc = s.confidence[order]
    hits = (s.predicted[order] == labels[order]).astype(np.int64)
    cum_correct = np.concatenate(([0], np.cumsum(hits)))
    # accepted(t) = #{c >= t}; conf_asc[::-1] is conf_desc
    conf_asc = conf_desc[::-1]
    t_arr = np.asarray(values, dtype=np.float64)
    accepted = n - np.searchsorted(conf_asc, t_arr, side="left")
    correct = cum_correct[accepted]
    points = tuple(
        EvalPoint(t, int(a), int(c), n) for t, a, c in zip(values, accepted.tolist(), correct.tolist())
    )
    return CurveTable(values, points, n)


def select_threshold_for_accuracy(curve: CurveTable, target_accuracy: float) -> ThresholdPolicy:
    """Lowest grid threshold whose accuracy reaches the target (maximises coverage)."""
    if not 0.0 < target_accuracy <= 1.0:
        raise ValueError(f"target accuracy {target_accuracy} outside (0, 1]")
    for p in curve.points:
        acc = p.accuracy
        if acc is not None and acc >= target_accuracy:
            return ThresholdPolicy(p.threshold, Objective("target_accuracy", target_accuracy), p)
    raise Unreachable(f"no grid threshold reaches accuracy {target_accuracy}")


def select_threshold_for_coverage(curve: CurveTable, min_coverage: float) -> ThresholdPolicy:
    """Most accurate grid threshold keeping coverage >= min_coverage.

    Accuracy ties go to the higher coverage, then to the lower threshold.
    """
    if not 0.0 < min_coverage <= 1.0:
        raise ValueError(f"minimum coverage {min_coverage} outside (0, 1]")
    best = None
    for p in curve.points:
        acc = p.accuracy
        if acc is None or p.coverage < min_coverage:
            continue
        if best is None or acc > best.accuracy or (
            acc == best.accuracy and p.accepted_count > best.accepted_count
        ):
            best = p
    if best is None:
        raise Unreachable(f"no grid threshold keeps coverage >= {min_coverage}")
    return ThresholdPolicy(best.threshold, Objective("min_coverage", min_coverage), best)


def _policy_threshold(policy: ThresholdPolicy | float) -> float:
    if isinstance(policy, ThresholdPolicy):
        return policy.threshold
    return _check_threshold(policy)


def acceptance_mask(records: Scorable, policy: ThresholdPolicy | float) -> np.ndarray:
    s, _ = _scored(records)
    return s.confidence >= _policy_threshold(policy)


def apply_threshold(records: Sequence[PredictionRecord], policy: ThresholdPolicy | float) -> list[AnnotationDecision]:
    """Accept or reject each record, preserving input order. Labels are not needed."""
    t = _policy_threshold(policy)
    s = ScoredSet.from_records(records)
    out = []
    for rec, cls, conf in zip(records, s.predicted.tolist(), s.confidence.tolist()):
        out.append(AnnotationDecision(
            rec.record_id, Decision(cls, conf), "accepted" if conf >= t else "rejected"
        ))
    return out


def write_decisions_jsonl(decisions, out) -> int:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            return write_decisions_jsonl(decisions, fh)
    n = 0
    for d in decisions:
        out.write(json.dumps(d.to_dict()) + "\n")
        n += 1
    return n


def curve_svg(curve: CurveTable, title: str = "Accuracy / rejection vs confidence threshold") -> str:
    """Static two-series line chart: accuracy and rejection rate (%) against threshold."""
    width, height = 640, 400
    left, right, top, bottom = 60, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    x0, x1 = curve.grid[0], curve.grid[-1]

    def sx(t: float) -> float:
        return left + (t - x0) / (x1 - x0) * pw

    def sy(v: float) -> float:
        return top + (1.0 - v) * ph

    def path(values) -> list[str]:
        segments, cur = [], []
        for t, v in values:
            if v is None:
                if cur:
                    segments.append(cur)
                cur = []
                continue
            cur.append(f"{sx(t):.2f},{sy(v):.2f}")
        if cur:
            segments.append(cur)
        return [" ".join(seg) for seg in segments]

    acc = path((p.threshold, p.accuracy) for p in curve.points)
    rej = path((p.threshold, p.rejection_rate) for p in curve.points)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" font-size="14">{_xml(title)}</text>',
    ]
    for i in range(6):
        v = i / 5
        y = sy(v)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{int(v * 100)}%</text>')
    for i in range(6):
        t = x0 + (x1 - x0) * i / 5
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 16}" text-anchor="middle">{t:.3f}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{left + pw / 2:.0f}" y="{height - 12}" text-anchor="middle">minimum confidence threshold</text>')
    for pts in acc:
        out.append(f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{pts}"/>')
    for pts in rej:
        out.append(f'<polyline fill="none" stroke="#d62728" stroke-width="1.5" points="{pts}"/>')
    lx = left + 10
    out.append(f'<line x1="{lx}" y1="{top + 12}" x2="{lx + 20}" y2="{top + 12}" stroke="#1f77b4" stroke-width="2"/>')
    out.append(f'<text x="{lx + 26}" y="{top + 16}">accuracy</text>')
    out.append(f'<line x1="{lx}" y1="{top + 28}" x2="{lx + 20}" y2="{top + 28}" stroke="#d62728" stroke-width="2"/>')
    out.append(f'<text x="{lx + 26}" y="{top + 32}">rejection rate</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _xml(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
